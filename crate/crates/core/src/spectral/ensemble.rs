use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{Ball, Site};
use crate::model::{resample, AmplitudeDistribution, InfluenceMap, InteractionPotential};
use crate::rng::StreamId;
use crate::spectral::hamiltonian::{eigensystem, hamiltonian_from_values, SpectralDecomposition};

/// Thermal-bath ensemble: every amplitude within `r_max` of the box is random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub dim: usize,
    pub radius: u64,
    pub potential: InteractionPotential,
    pub distribution: AmplitudeDistribution,
    pub g: f64,
    pub r_max: u64,
    pub samples: usize,
}

impl EnsembleConfig {
    pub fn domain(&self) -> Ball {
        Ball::centered(self.dim, self.radius)
    }

    pub fn field_domain(&self) -> Ball {
        Ball::centered(self.dim, self.radius + self.r_max)
    }

    pub fn influence(&self) -> Result<InfluenceMap> {
        self.potential.validate(self.dim)?;
        if self.samples == 0 {
            return Err(invalid("ensemble needs at least one sample"));
        }
        let dom = self.domain();
        InfluenceMap::new(&self.potential, &self.field_domain(), &dom.sites(), self.r_max)
    }
}

/// Maps every sample's decomposition through `f`, in sample order.
pub fn map_ensemble<T, F>(cfg: &EnsembleConfig, seed: u64, purpose: &str, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SpectralDecomposition) -> T + Sync,
{
    let map = cfg.influence()?;
    let dom = cfg.domain();
    let n_field = map.domain.len();
    (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamId::new(seed, purpose, i).rng();
            let mut omega = vec![0.0; n_field];
            resample(&cfg.distribution, &mut omega, &mut rng);
            let mut v = vec![0.0; dom.len()];
            map.apply_into(&omega, 0.0, &mut v);
            let h = hamiltonian_from_values(&dom, cfg.g, &v)?;
            Ok(f(&eigensystem(&h)?))
        })
        .collect()
}

/// `Σ_{λ_j ∈ I} |ψ_j(x)||ψ_j(y)|`, `I = [lo, hi]`.
pub fn efc_estimate(
    spec: &SpectralDecomposition,
    domain: &Ball,
    x: &Site,
    y: &Site,
    window: (f64, f64),
) -> Result<f64> {
    let i = domain
        .index_of(x)
        .ok_or_else(|| invalid(format!("{:?} outside the box", x.0)))?;
    let j = domain
        .index_of(y)
        .ok_or_else(|| invalid(format!("{:?} outside the box", y.0)))?;
    Ok(efc_by_index(spec, i, j, window))
}

pub(crate) fn efc_by_index(spec: &SpectralDecomposition, i: usize, j: usize, window: (f64, f64)) -> f64 {
    spec.eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| **l >= window.0 && **l <= window.1)
        .map(|(k, _)| (spec.eigenvectors[(i, k)] * spec.eigenvectors[(j, k)]).abs())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfcProfile {
    pub origin: Site,
    pub distances: Vec<u64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub samples: usize,
    pub window: (f64, f64),
}

/// Ensemble mean of `EFC(0, r·e₁)` for each `r`.
pub fn efc_profile(cfg: &EnsembleConfig, seed: u64, distances: &[u64], window: (f64, f64)) -> Result<EfcProfile> {
    let dom = cfg.domain();
    let origin = Site::origin(cfg.dim);
    let i0 = dom.index_of(&origin).expect("origin inside");
    let mut targets = Vec::new();
    for &r in distances {
        let mut y = origin.clone();
        y.0[0] = r as i64;
        targets.push(
            dom.index_of(&y)
                .ok_or_else(|| invalid(format!("distance {r} leaves the box")))?,
        );
    }
    let rows = map_ensemble(cfg, seed, "efc", |spec| {
        targets.iter().map(|&j| efc_by_index(spec, i0, j, window)).collect::<Vec<f64>>()
    })?;
    let n = rows.len() as f64;
    let mut mean = vec![0.0; targets.len()];
    let mut sq = vec![0.0; targets.len()];
    for row in &rows {
        for (k, v) in row.iter().enumerate() {
            mean[k] += v / n;
            sq[k] += v * v / n;
        }
    }
    let std_error = mean
        .iter()
        .zip(&sq)
        .map(|(m, s)| ((s - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt())
        .collect();
    Ok(EfcProfile {
        origin,
        distances: distances.to_vec(),
        mean,
        std_error,
        samples: rows.len(),
        window,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub bins: usize,
    pub width: f64,
    /// `max |ρ_{i+1} - ρ_i| / h`.
    pub max_first_difference: f64,
    /// `max |ρ_{i+1} - 2ρ_i + ρ_{i-1}| / h²`.
    pub max_second_difference: f64,
    /// `Σ |ρ_{i+1} - ρ_i|`.
    pub total_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosHistogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub samples: usize,
    pub eigenvalues: usize,
    pub refinement: Vec<RefinementLevel>,
}

impl DosHistogram {
    pub fn integral(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum()
    }
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let total = values.len() as f64;
    counts.iter().map(|c| c / (total * width)).collect()
}

fn refinement_level(values: &[f64], lo: f64, hi: f64, bins: usize) -> RefinementLevel {
    let rho = histogram(values, lo, hi, bins);
    let h = (hi - lo) / bins as f64;
    let first = rho.windows(2).map(|w| (w[1] - w[0]).abs());
    let second = rho.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs());
    let tv: f64 = rho.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    RefinementLevel {
        bins,
        width: h,
        max_first_difference: first.fold(0.0, f64::max) / h,
        max_second_difference: second.fold(0.0, f64::max) / (h * h),
        total_variation: tv,
    }
}

/// Normalized eigenvalue histogram with refinement diagnostics at `bins`,
/// `2·bins` and `4·bins`.
pub fn dos_histogram(
    cfg: &EnsembleConfig,
    seed: u64,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<DosHistogram> {
    if bins == 0 || cfg.samples < bins {
        return Err(invalid(format!(
            "{} samples cannot fill {} bins",
            cfg.samples, bins
        )));
    }
    let all: Vec<f64> = map_ensemble(cfg, seed, "dos", |s| s.eigenvalues.clone())?
        .into_iter()
        .flatten()
        .collect();
    let (lo, hi) = match range {
        Some(r) => r,
        None => {
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = 1e-9 * (1.0 + hi.abs().max(lo.abs()));
            (lo - pad, hi + pad)
        }
    };
    if !(hi > lo) {
        return Err(invalid("empty energy range"));
    }
    let density = histogram(&all, lo, hi, bins);
    let edges = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    let refinement = [bins, 2 * bins, 4 * bins]
        .iter()
        .map(|&b| refinement_level(&all, lo, hi, b))
        .collect();
    Ok(DosHistogram {
        edges,
        density,
        samples: cfg.samples,
        eigenvalues: all.len(),
        refinement,
    })
}
