use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, Site};
use crate::model::{cumulative_potential, CumulativePotential, FieldSample, InteractionPotential};

/// Largest box handled by the dense solver.
pub const MAX_SITES: usize = 4096;

/// `H_Λ = -Δ_Λ + gV` on a box, Dirichlet (couplings to the exterior deleted).
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub domain: Ball,
    pub g: f64,
    pub matrix: DMatrix<f64>,
    pub potential: CumulativePotential,
}

/// `-Δ_Λ = 2d·I - adjacency`.
pub fn laplacian(domain: &Ball) -> Result<DMatrix<f64>> {
    let n = domain.len();
    if n > MAX_SITES {
        return Err(invalid(format!("box has {n} sites, above the {MAX_SITES}-site limit")));
    }
    let d = domain.dim();
    let mut m = DMatrix::zeros(n, n);
    for (i, x) in domain.sites().iter().enumerate() {
        m[(i, i)] = 2.0 * d as f64;
        for y in domain.neighbors_inside(x) {
            let j = domain.index_of(&y).expect("neighbor inside");
            m[(i, j)] = -1.0;
        }
    }
    Ok(m)
}

/// `-Δ_Λ + g·diag(v)` for a potential already evaluated on the box.
pub fn hamiltonian_from_values(domain: &Ball, g: f64, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != domain.len() {
        return Err(invalid("potential length differs from the box size"));
    }
    let mut m = laplacian(domain)?;
    for (i, vi) in v.iter().enumerate() {
        m[(i, i)] += g * vi;
    }
    Ok(m)
}

pub fn assemble_hamiltonian(
    domain: &Ball,
    pot: &InteractionPotential,
    field: &FieldSample,
    g: f64,
    r_max: Option<u64>,
) -> Result<HamiltonianMatrix> {
    let potential = cumulative_potential(pot, field, &domain.sites(), r_max)?;
    let matrix = hamiltonian_from_values(domain, g, &potential.values)?;
    Ok(HamiltonianMatrix {
        domain: domain.clone(),
        g,
        matrix,
        potential,
    })
}

/// Eigenvalues in increasing order with orthonormal eigenvectors as columns.
///
/// Each column is signed so that its largest-magnitude entry (first one on
/// ties) is positive.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

pub fn eigensystem(h: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(invalid("matrix is not square"));
    }
    let eig = SymmetricEigen::try_new(h.clone(), 1e-14, 100_000).ok_or(Error::Convergence(n))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(j);
        let mut pivot = 0;
        for i in 0..n {
            if col[i].abs() > col[pivot].abs() * (1.0 + 1e-10) {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(k, &(col * sign));
        values.push(eig.eigenvalues[j]);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Convergence(n));
    }
    Ok(SpectralDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Eigenvalues only.
pub fn spectrum(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = h.nrows();
    if n != h.ncols() || h.iter().any(|x| !x.is_finite()) {
        return Err(Error::Convergence(n));
    }
    let mut v: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `dist(E, σ)` for a sorted spectrum.
pub fn spectral_distance(eigenvalues: &[f64], e: f64) -> f64 {
    let i = eigenvalues.partition_point(|&l| l < e);
    let mut best = f64::INFINITY;
    if i < eigenvalues.len() {
        best = best.min(eigenvalues[i] - e);
    }
    if i > 0 {
        best = best.min(e - eigenvalues[i - 1]);
    }
    best
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn distance_to(&self, e: f64) -> f64 {
        spectral_distance(&self.eigenvalues, e)
    }

    /// `max_j ‖Hψ_j - λ_jψ_j‖`.
    pub fn max_residual(&self, h: &DMatrix<f64>) -> f64 {
        (0..self.len())
            .map(|j| {
                let v = self.eigenvectors.column(j);
                (h * v - v * self.eigenvalues[j]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max |ΨᵀΨ - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.eigenvectors.transpose() * &self.eigenvectors;
        let n = self.len();
        (g - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// `G(x,y;E) = Σ_j ψ_j(x)ψ_j(y)/(λ_j - E)` by matrix indices.
    pub fn green(&self, i: usize, j: usize, e: f64) -> Result<f64> {
        self.check_resonance(e)?;
        Ok(self.green_unchecked(i, j, e))
    }

    pub(crate) fn green_unchecked(&self, i: usize, j: usize, e: f64) -> f64 {
        let mut s = 0.0;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            s += self.eigenvectors[(i, k)] * self.eigenvectors[(j, k)] / (l - e);
        }
        s
    }

    pub fn check_resonance(&self, e: f64) -> Result<()> {
        let i = self.eigenvalues.partition_point(|&l| l < e);
        for k in [i.wrapping_sub(1), i] {
            if let Some(&l) = self.eigenvalues.get(k) {
                if (l - e).abs() <= 1e-12 {
                    return Err(Error::Resonance { energy: e, eigenvalue: l });
                }
            }
        }
        Ok(())
    }
}

/// `G_Λ(x, y; E)` for sites of the box.
pub fn green_function(
    spec: &SpectralDecomposition,
    domain: &Ball,
    x: &Site,
    y: &Site,
    e: f64,
) -> Result<f64> {
    let i = domain
        .index_of(x)
        .ok_or_else(|| invalid(format!("{:?} outside the box", x.0)))?;
    let j = domain
        .index_of(y)
        .ok_or_else(|| invalid(format!("{:?} outside the box", y.0)))?;
    spec.green(i, j, e)
}

/// Summary of a decomposition for JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub max_residual: f64,
    pub orthonormality_defect: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_field, AmplitudeDistribution, Background};
    use crate::rng::StreamId;
    use nalgebra::DVector;
    use proptest::prelude::*;

    #[test]
    fn small_boxes() {
        let h = hamiltonian_from_values(&Ball::centered(1, 0), 1.0, &[0.0]).unwrap();
        assert_eq!(h, DMatrix::from_element(1, 1, 2.0));
        let h = hamiltonian_from_values(&Ball::centered(1, 1), 1.0, &[0.0; 3]).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        assert_eq!(h, want);
        let s = eigensystem(&h).unwrap();
        let r2 = 2f64.sqrt();
        for (a, b) in s.eigenvalues.iter().zip([2.0 - r2, 2.0, 2.0 + r2]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_norm_at_most_4d() {
        for d in 1..=2 {
            for l in 0..=8u64 {
                let dom = Ball::centered(d, l);
                let m = laplacian(&dom).unwrap();
                let adj = DMatrix::<f64>::identity(dom.len(), dom.len()) * (2.0 * d as f64) - &m;
                let ev = spectrum(&adj).unwrap();
                let radius = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                assert!(radius <= 2.0 * d as f64 + 1e-12);
                let lap = spectrum(&m).unwrap();
                assert!(lap[0] >= -1e-12 && *lap.last().unwrap() <= 4.0 * d as f64 + 1e-12);
            }
        }
    }

    fn random_h(seed: u64, l: u64) -> (Ball, DMatrix<f64>) {
        let dom = Ball::centered(1, l);
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let f = sample_field(
            &AmplitudeDistribution::Uniform01,
            &Ball::centered(1, l + 10),
            StreamId::new(seed, "h", 0),
            Background::FrozenZero,
        );
        let h = assemble_hamiltonian(&dom, &pot, &f, 3.0, Some(10)).unwrap();
        (dom, h.matrix)
    }

    #[test]
    fn residuals_trace_and_shift() {
        let (_, h) = random_h(1, 6);
        let s = eigensystem(&h).unwrap();
        let norm = h.norm();
        assert!(s.max_residual(&h) <= 1e-8 * norm);
        assert!(s.orthonormality_defect() <= 1e-8);
        let tr: f64 = s.eigenvalues.iter().sum();
        assert!((tr - h.trace()).abs() <= 1e-8 * h.trace().abs());
        let n = h.nrows();
        let shifted = &h + DMatrix::<f64>::identity(n, n) * (3.0 * 0.7);
        let t = eigensystem(&shifted).unwrap();
        for (a, b) in s.eigenvalues.iter().zip(&t.eigenvalues) {
            assert!((b - a - 2.1).abs() < 1e-12);
        }
    }

    #[test]
    fn green_examples() {
        let dom = Ball::centered(1, 0);
        let h = hamiltonian_from_values(&dom, 1.0, &[0.0]).unwrap();
        let s = eigensystem(&h).unwrap();
        let o = Site::from(0);
        assert!((green_function(&s, &dom, &o, &o, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            green_function(&s, &dom, &o, &o, 2.0),
            Err(Error::Resonance { .. })
        ));
        let (dom, h) = random_h(2, 5);
        let s = eigensystem(&h).unwrap();
        let n = dom.len();
        for e in [-1.3, 0.77, 4.4] {
            for j in 0..n {
                let col = DVector::from_iterator(n, (0..n).map(|i| s.green(i, j, e).unwrap()));
                let mut rhs = DVector::zeros(n);
                rhs[j] = 1.0;
                let a = &h - DMatrix::<f64>::identity(n, n) * e;
                assert!((a * col - rhs).norm() <= 1e-8);
            }
        }
        let e = s.eigenvalues[0] - 0.5;
        for i in 0..n {
            assert!(s.green(i, i, e).unwrap() > 0.0);
        }
    }

    #[test]
    fn distance_matches_brute_force() {
        let (_, h) = random_h(3, 4);
        let s = eigensystem(&h).unwrap();
        for k in 0..50 {
            let e = -2.0 + 0.37 * k as f64;
            let brute = s.eigenvalues.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min);
            assert_eq!(s.distance_to(e), brute);
        }
    }

    proptest! {
        #[test]
        fn green_is_symmetric(seed in 0u64..500, e in -3.0f64..8.0) {
            let (_, h) = random_h(seed, 4);
            let s = eigensystem(&h).unwrap();
            prop_assume!(s.distance_to(e) > 1e-6);
            for i in 0..h.nrows() {
                for j in 0..h.nrows() {
                    let a = s.green(i, j, e).unwrap();
                    let b = s.green(j, i, e).unwrap();
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }

        #[test]
        fn bump_moves_eigenvalues_by_at_most_its_size(seed in 0u64..500, bump in 0.0f64..2.0, site in 0usize..9) {
            let (_, h) = random_h(seed, 4);
            let mut h2 = h.clone();
            h2[(site, site)] += bump;
            let a = spectrum(&h).unwrap();
            let b = spectrum(&h2).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*y >= x - 1e-12 && *y <= x + bump + 1e-12);
            }
        }
    }
}
