use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfun::{interval_mass_bound, ShellTerm};
use crate::error::{invalid, Error, Result};
use crate::experiments::stats::Proportion;
use crate::lattice::{Annulus, Ball, Site};
use crate::model::{resample, AmplitudeDistribution, FieldSample, InfluenceMap, InteractionPotential};
use crate::rng::StreamId;
use crate::spectral::{hamiltonian_from_values, plateau_weight, spectral_distance, spectrum};

/// Largest configuration space enumerated exactly.
pub const MAX_ENUMERATION: u64 = 1 << 20;

/// Frozen-bath Wegner instance: only amplitudes in `B_{R_L} \ B_L` are random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerConfig {
    pub dim: usize,
    pub radius: u64,
    pub tau: f64,
    pub theta: f64,
    pub energies: Vec<f64>,
    pub trials: usize,
    pub distribution: AmplitudeDistribution,
    pub potential: InteractionPotential,
    pub g: f64,
    pub r_max: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.99
}

impl WegnerConfig {
    /// `R_L = L^τ`.
    pub fn r_l(&self) -> f64 {
        (self.radius as f64).powf(self.tau)
    }

    /// `ε_L = R_L^{-A/(1+θ)}`.
    pub fn eps(&self) -> f64 {
        self.r_l().powf(-self.potential.exponent / (1.0 + self.theta))
    }

    /// `β = 1 - (1+θ)/τ`.
    pub fn beta(&self) -> f64 {
        1.0 - (1.0 + self.theta) / self.tau
    }

    pub fn domain(&self) -> Ball {
        Ball::centered(self.dim, self.radius)
    }

    pub fn annulus(&self) -> Annulus {
        Annulus::new(Site::origin(self.dim), self.radius, self.r_l().floor() as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate(self.dim)?;
        self.distribution.validate()?;
        if !(self.tau > 1.0) {
            return Err(invalid(format!("τ must exceed 1, got {}", self.tau)));
        }
        if !(self.theta > 0.0 && self.theta < self.tau - 1.0) {
            return Err(invalid(format!(
                "θ must lie in (0, τ-1) = (0, {}), got {}",
                self.tau - 1.0,
                self.theta
            )));
        }
        if self.radius == 0 {
            return Err(invalid("box radius must be positive"));
        }
        if self.annulus().is_empty() {
            return Err(invalid(format!(
                "annulus B_{} \\ B_{} is empty",
                self.annulus().outer,
                self.radius
            )));
        }
        if self.trials < 100 {
            return Err(invalid(format!("need at least 100 trials, got {}", self.trials)));
        }
        if self.energies.is_empty() {
            return Err(invalid("no energies given"));
        }
        if !self.g.is_finite() || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("coupling must be finite and confidence in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerPoint {
    pub energy: f64,
    pub empirical: Proportion,
    pub exact: Option<f64>,
    pub exact_in_ci: Option<bool>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerReport {
    pub config: WegnerConfig,
    pub seed: u64,
    pub box_sites: usize,
    pub annulus_sites: usize,
    pub plateau_sites: Vec<Site>,
    pub eps: f64,
    pub beta: f64,
    /// `sup_c P{ξ ∈ [c-ε, c+ε]}`, exact for atomic laws.
    pub xi_concentration: f64,
    pub xi_concentration_exact: bool,
    /// Smoothed-indicator bound on the same quantity.
    pub xi_fourier_bound: f64,
    /// `C` with `C ε_L^β = sup_c P{ξ ∈ [c-ε, c+ε]}`.
    pub fitted_c: f64,
    /// `C|B|ε_L^β`.
    pub bound: f64,
    pub points: Vec<WegnerPoint>,
}

struct Prepared {
    map: InfluenceMap,
    base: Vec<f64>,
    background: f64,
    random: Vec<usize>,
}

fn prepare(cfg: &WegnerConfig, frozen: &FieldSample) -> Result<Prepared> {
    cfg.validate()?;
    if frozen.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: frozen.dim(),
        });
    }
    let dom = cfg.domain();
    let map = InfluenceMap::new(&cfg.potential, &frozen.domain, &dom.sites(), cfg.r_max)?;
    map.apply(frozen)?;
    let mut random = Vec::new();
    for y in cfg.annulus().sites() {
        let i = frozen
            .domain
            .index_of(&y)
            .ok_or_else(|| invalid(format!("annulus site {:?} outside the frozen field", y.0)))?;
        random.push(i);
    }
    Ok(Prepared {
        map,
        base: frozen.values.clone(),
        background: frozen.background.value().unwrap_or(0.0),
        random,
    })
}

fn box_spectrum(cfg: &WegnerConfig, prep: &Prepared, omega: &[f64], v: &mut [f64]) -> Result<Vec<f64>> {
    prep.map.apply_into(omega, prep.background, v);
    spectrum(&hamiltonian_from_values(&cfg.domain(), cfg.g, v)?)
}

/// Exact `P_𝒜{dist(Σ_B, E) <= ε_L}` for each energy by enumerating the annulus.
pub fn wegner_exact(cfg: &WegnerConfig, frozen: &FieldSample) -> Result<Vec<f64>> {
    let prep = prepare(cfg, frozen)?;
    let atoms = cfg
        .distribution
        .atoms()
        .ok_or_else(|| Error::Unsupported("exact enumeration needs an atomic law".into()))?;
    let k = prep.random.len() as u32;
    let total = (atoms.len() as u64)
        .checked_pow(k)
        .filter(|t| *t <= MAX_ENUMERATION)
        .ok_or_else(|| Error::Unsupported(format!("{} annulus sites exceed the enumeration limit", k)))?;
    let eps = cfg.eps();
    let ne = cfg.energies.len();
    let n_box = cfg.domain().len();
    (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut omega = prep.base.clone();
            let mut prob = 1.0;
            for &site in &prep.random {
                let (value, p) = atoms[(idx % atoms.len() as u64) as usize];
                idx /= atoms.len() as u64;
                omega[site] = value;
                prob *= p;
            }
            let mut v = vec![0.0; n_box];
            let spec = box_spectrum(cfg, &prep, &omega, &mut v)?;
            Ok(cfg
                .energies
                .iter()
                .map(|&e| if spectral_distance(&spec, e) <= eps { prob } else { 0.0 })
                .collect::<Vec<f64>>())
        })
        .try_reduce(
            || vec![0.0; ne],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

/// Law of `Σ_j w_j ω_j` for an atomic single-site law, as sorted `(value, mass)`.
fn weighted_sum_law(atoms: &[(f64, f64)], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut law = vec![(0.0, 1.0)];
    for &w in weights {
        let mut next: Vec<(f64, f64)> = law
            .iter()
            .flat_map(|&(x, p)| atoms.iter().map(move |&(a, q)| (x + w * a, p * q)))
            .collect();
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        law.clear();
        for (x, p) in next {
            match law.last_mut() {
                Some(last) if (x - last.0).abs() <= 1e-12 * (1.0 + x.abs()) => last.1 += p,
                _ => law.push((x, p)),
            }
        }
    }
    law
}

/// `sup_c` of the mass in a closed window of length `2ε`.
fn max_window_mass(law: &[(f64, f64)], eps: f64) -> f64 {
    let mut best: f64 = 0.0;
    let mut acc = 0.0;
    let mut lo = 0;
    for hi in 0..law.len() {
        acc += law[hi].1;
        while law[hi].0 - law[lo].0 > 2.0 * eps * (1.0 + 1e-12) {
            acc -= law[lo].1;
            lo += 1;
        }
        best = best.max(acc);
    }
    best.min(1.0)
}

/// Monte Carlo estimate per energy, with the decomposition bound `C|B|ε_L^β`.
pub fn wegner_experiment(cfg: &WegnerConfig, frozen: &FieldSample, seed: u64) -> Result<WegnerReport> {
    let prep = prepare(cfg, frozen)?;
    let dom = cfg.domain();
    let eps = cfg.eps();
    let beta = cfg.beta();

    let mut plateau_sites = Vec::new();
    let mut xi_weights = Vec::new();
    for y in cfg.annulus().sites() {
        if let Some(w) = plateau_weight(&dom, &cfg.potential, &y, cfg.r_max) {
            plateau_sites.push(y);
            xi_weights.push(cfg.g * w);
        }
    }
    let terms: Vec<ShellTerm> = xi_weights
        .iter()
        .enumerate()
        .map(|(i, &w)| ShellTerm {
            index: i as u64,
            count: 1,
            weight: w,
        })
        .collect();
    let xi_fourier_bound = if terms.is_empty() || cfg.g == 0.0 {
        1.0
    } else {
        interval_mass_bound(&cfg.distribution, &terms, eps)?
    };
    let exact_law = cfg
        .distribution
        .atoms()
        .filter(|a| (a.len() as f64).powi(xi_weights.len() as i32) <= MAX_ENUMERATION as f64)
        .map(|a| max_window_mass(&weighted_sum_law(&a, &xi_weights), eps));
    let (xi_concentration, xi_concentration_exact) = match exact_law {
        Some(q) => (q.min(xi_fourier_bound), true),
        None => (xi_fourier_bound, false),
    };
    let fitted_c = xi_concentration / eps.powf(beta);
    let bound = (dom.len() as f64 * xi_concentration).min(1.0);

    let n_box = dom.len();
    let hits: Vec<Vec<bool>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamId::new(seed, "wegner", i).rng();
            let mut omega = prep.base.clone();
            let mut draws = vec![0.0; prep.random.len()];
            resample(&cfg.distribution, &mut draws, &mut rng);
            for (&site, &x) in prep.random.iter().zip(&draws) {
                omega[site] = x;
            }
            let mut v = vec![0.0; n_box];
            let spec = box_spectrum(cfg, &prep, &omega, &mut v)?;
            Ok(cfg.energies.iter().map(|&e| spectral_distance(&spec, e) <= eps).collect())
        })
        .collect::<Result<_>>()?;

    let exact = match cfg.distribution.atoms() {
        Some(a) if (a.len() as f64).powi(prep.random.len() as i32) <= MAX_ENUMERATION as f64 => {
            Some(wegner_exact(cfg, frozen)?)
        }
        _ => None,
    };
    let points = cfg
        .energies
        .iter()
        .enumerate()
        .map(|(k, &energy)| {
            let count = hits.iter().filter(|h| h[k]).count() as u64;
            let empirical = Proportion::wilson(count, cfg.trials as u64, cfg.confidence);
            let exact_p = exact.as_ref().map(|e| e[k]);
            WegnerPoint {
                energy,
                empirical,
                exact: exact_p,
                exact_in_ci: exact_p.map(|p| empirical.contains(p)),
                pass: empirical.upper <= bound,
            }
        })
        .collect();
    Ok(WegnerReport {
        config: cfg.clone(),
        seed,
        box_sites: n_box,
        annulus_sites: prep.random.len(),
        plateau_sites,
        eps,
        beta,
        xi_concentration,
        xi_concentration_exact,
        xi_fourier_bound,
        fitted_c,
        bound,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Background;

    fn cfg(g: f64) -> WegnerConfig {
        WegnerConfig {
            dim: 1,
            radius: 2,
            tau: 3.4,
            theta: 1.0,
            energies: vec![0.5, 1.0, 2.0, 3.3],
            trials: 400,
            distribution: AmplitudeDistribution::BernoulliSym,
            potential: InteractionPotential::piecewise(2.0, 3.0).unwrap(),
            g,
            r_max: 40,
            confidence: 0.99,
        }
    }

    fn frozen(seed: u64) -> FieldSample {
        crate::model::sample_field(
            &AmplitudeDistribution::BernoulliSym,
            &Ball::centered(1, 50),
            StreamId::new(seed, "frozen", 0),
            Background::FrozenZero,
        )
    }

    #[test]
    fn derived_quantities() {
        let mut c = cfg(1.0);
        c.tau = 4.0;
        c.theta = 0.2;
        assert!((c.beta() - 0.7).abs() < 1e-15);
        let c = cfg(1.0);
        assert_eq!(c.annulus().outer, 10);
        assert_eq!(c.annulus().len(), 16);
        assert!((c.eps() - 2f64.powf(3.4).recip()).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut c = cfg(1.0);
        c.theta = 2.5;
        assert!(c.validate().is_err());
        let mut c = cfg(1.0);
        c.trials = 99;
        assert!(c.validate().is_err());
        let mut c = cfg(1.0);
        c.tau = 1.2;
        c.theta = 0.1;
        // 2^1.2 < 3: empty annulus
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_coupling_is_deterministic() {
        let c = cfg(0.0);
        let r = wegner_experiment(&c, &frozen(1), 5).unwrap();
        let free = spectrum(&hamiltonian_from_values(&c.domain(), 0.0, &[0.0; 5]).unwrap()).unwrap();
        for p in &r.points {
            let hit = spectral_distance(&free, p.energy) <= c.eps();
            assert_eq!(p.empirical.estimate, if hit { 1.0 } else { 0.0 });
            assert_eq!(p.exact, Some(if hit { 1.0 } else { 0.0 }));
        }
    }

    #[test]
    fn exact_matches_direct_sum() {
        let mut c = cfg(0.7);
        c.tau = 2.0;
        c.theta = 0.5;
        let f = frozen(2);
        let exact = wegner_exact(&c, &f).unwrap();
        // brute force without the influence map
        let ann = c.annulus().sites();
        let mut acc = vec![0.0; c.energies.len()];
        for mask in 0u32..(1 << ann.len()) {
            let mut g = f.clone();
            for (k, y) in ann.iter().enumerate() {
                g.set(y, if mask >> k & 1 == 1 { 1.0 } else { -1.0 }).unwrap();
            }
            let h = crate::spectral::assemble_hamiltonian(&c.domain(), &c.potential, &g, c.g, Some(c.r_max)).unwrap();
            let s = spectrum(&h.matrix).unwrap();
            for (k, &e) in c.energies.iter().enumerate() {
                if spectral_distance(&s, e) <= c.eps() {
                    acc[k] += 0.5f64.powi(ann.len() as i32);
                }
            }
        }
        for (a, b) in acc.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_mass_and_sum_law() {
        let law = weighted_sum_law(&[(-1.0, 0.5), (1.0, 0.5)], &[1.0, 1.0, 1.0]);
        let masses: Vec<f64> = law.iter().map(|x| x.1).collect();
        assert_eq!(masses, vec![0.125, 0.375, 0.375, 0.125]);
        assert_eq!(max_window_mass(&law, 0.5), 0.375);
        assert_eq!(max_window_mass(&law, 1.0), 0.75);
    }

    #[test]
    fn plateau_sites_and_bound() {
        let r = wegner_experiment(&cfg(1.0), &frozen(3), 9).unwrap();
        let ys: Vec<i64> = r.plateau_sites.iter().map(|s| s.0[0]).collect();
        assert_eq!(ys, vec![-10, -5, -4, -3, 3, 4, 5, 10]);
        for p in &r.points {
            assert!(p.exact.unwrap() <= r.bound + 1e-12);
        }
        assert!(r.xi_concentration <= r.xi_fourier_bound);
    }

    #[test]
    fn far_exterior_does_not_matter() {
        let c = cfg(1.0);
        let a = frozen(4);
        let mut b = a.clone();
        // beyond L + r_max = 42
        for y in (43..=50).flat_map(|r| [Site::from(r), Site::from(-r)]) {
            b.set(&y, -b.get(&y).unwrap()).unwrap();
        }
        let ra = wegner_experiment(&c, &a, 11).unwrap();
        let rb = wegner_experiment(&c, &b, 11).unwrap();
        assert_eq!(ra.points, rb.points);
    }
}
