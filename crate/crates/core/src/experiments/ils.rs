use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfun::{concentration_bound, ShellWeights};
use crate::error::{invalid, Error, Result};
use crate::experiments::stats::Proportion;
use crate::experiments::wegner::MAX_ENUMERATION;
use crate::lattice::{distance, Ball, Site};
use crate::model::{resample, AmplitudeDistribution, InfluenceMap, InteractionPotential};
use crate::rng::StreamId;
use crate::spectral::{hamiltonian_from_values, spectral_distance, spectrum};

/// Low-energy initial scale estimate through thin tails of a nonnegative law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinTailConfig {
    pub dim: usize,
    pub l0: u64,
    pub theta: f64,
    pub kappa: f64,
    pub distribution: AmplitudeDistribution,
    pub potential: InteractionPotential,
    pub g: f64,
    pub trials: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

impl ThinTailConfig {
    /// `R₀ = L₀^θ`.
    pub fn r0(&self) -> f64 {
        (self.l0 as f64).powf(self.theta)
    }

    /// `Q_x = B_{⌊2R₀⌋}(x) \ B_{⌊R₀⌋}(x)` as `(inner, outer)` radii.
    pub fn q_radii(&self) -> (u64, u64) {
        let r0 = self.r0();
        (r0.floor() as u64, (2.0 * r0).floor() as u64)
    }

    pub fn q_size(&self) -> u64 {
        let (a, b) = self.q_radii();
        crate::lattice::ball_count(b, self.dim) - crate::lattice::ball_count(a, self.dim)
    }

    /// `λ = L₀^{-θ}`.
    pub fn lambda(&self) -> f64 {
        (self.l0 as f64).powf(-self.theta)
    }

    pub fn domain(&self) -> Ball {
        Ball::centered(self.dim, self.l0)
    }

    /// Every amplitude that can enter a `Q_x`, `x` in the box.
    pub fn region(&self) -> Ball {
        Ball::centered(self.dim, self.l0 + self.q_radii().1)
    }

    /// `C_A = u(⌊2R₀⌋) R₀^A`, so that `C_A κ R₀^{-A}` is the weight of the farthest `Q_x` site.
    pub fn c_a(&self) -> f64 {
        self.potential.value_at(self.q_radii().1) * self.r0().powf(self.potential.exponent)
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate(self.dim)?;
        self.distribution.validate()?;
        if !self.distribution.is_nonnegative() {
            return Err(invalid(format!(
                "{} has negative support; the lower bound on V does not apply",
                self.distribution
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid(format!("θ must lie in (0, 1), got {}", self.theta)));
        }
        if self.l0 < 1 || self.q_size() == 0 {
            return Err(invalid("annulus Q_x is empty"));
        }
        if !(self.distribution.cdf(self.kappa) < 1.0) {
            return Err(invalid(format!("P{{ω <= κ}} = 1 at κ = {}", self.kappa)));
        }
        if !(self.g > 0.0) || self.trials == 0 {
            return Err(invalid("need g > 0 and at least one trial"));
        }
        Ok(())
    }
}

/// Probabilities along `P{E₀ <= λ} <= P{g min V <= λ} <= P{∃x: ω|_{Q_x} <= κ} <= |B| ε_κ^{|Q|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinTailReport {
    pub config: ThinTailConfig,
    pub seed: u64,
    pub r0: f64,
    pub q_size: u64,
    pub lambda: f64,
    pub eps_kappa: f64,
    pub c_a: f64,
    /// `g C_A κ R₀^{-A} > L₀^{-θ}`.
    pub hypothesis_met: bool,
    pub chain_bound: f64,
    /// `-ln(chain bound) / L₀^d`.
    pub c_theta: f64,
    pub ground: Proportion,
    pub low_potential: Proportion,
    pub thin_cluster: Proportion,
    /// Samples where some `ω_y > κ` on `Q_x` but `V(x) < C_A κ R₀^{-A}`.
    pub implication_violations: u64,
    /// Samples with `E₀ < g min V`.
    pub rayleigh_violations: u64,
}

struct ThinTailSetup {
    map: InfluenceMap,
    /// Region indices of `Q_x` for each box site.
    q: Vec<Vec<usize>>,
}

fn setup(cfg: &ThinTailConfig) -> Result<ThinTailSetup> {
    cfg.validate()?;
    let region = cfg.region();
    let sites = cfg.domain().sites();
    let map = InfluenceMap::new(&cfg.potential, &region, &sites, 2 * region.radius + 1)?;
    let (a, b) = cfg.q_radii();
    let all = region.sites();
    let q = sites
        .iter()
        .map(|x| {
            all.iter()
                .enumerate()
                .filter(|(_, y)| {
                    let r = distance(x, y);
                    r > a && r <= b
                })
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(ThinTailSetup { map, q })
}

#[derive(Debug, Clone, Copy, Default)]
struct ThinOutcome {
    ground: bool,
    low_potential: bool,
    thin_cluster: bool,
    implication_violation: bool,
    rayleigh_violation: bool,
}

fn thin_outcome(cfg: &ThinTailConfig, s: &ThinTailSetup, omega: &[f64]) -> Result<ThinOutcome> {
    let mut v = vec![0.0; s.q.len()];
    s.map.apply_into(omega, 0.0, &mut v);
    let e0 = spectrum(&hamiltonian_from_values(&cfg.domain(), cfg.g, &v)?)?[0];
    let lambda = cfg.lambda();
    let floor = cfg.c_a() * cfg.kappa * cfg.r0().powf(-cfg.potential.exponent);
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut thin = false;
    let mut violation = false;
    for (vx, qx) in v.iter().zip(&s.q) {
        let high = qx.iter().any(|&i| omega[i] > cfg.kappa);
        if !high {
            thin = true;
        } else if *vx < floor * (1.0 - 1e-12) {
            violation = true;
        }
    }
    Ok(ThinOutcome {
        ground: e0 <= lambda,
        low_potential: cfg.g * min_v <= lambda,
        thin_cluster: thin,
        implication_violation: violation,
        rayleigh_violation: e0 < cfg.g * min_v - 1e-9 * (1.0 + (cfg.g * min_v).abs()),
    })
}

fn chain_parts(cfg: &ThinTailConfig) -> (f64, bool, f64, f64) {
    let eps_kappa = cfg.distribution.cdf(cfg.kappa);
    let floor = cfg.c_a() * cfg.kappa * cfg.r0().powf(-cfg.potential.exponent);
    let met = cfg.g * floor > cfg.lambda();
    let bound = (cfg.domain().len() as f64 * eps_kappa.powf(cfg.q_size() as f64)).min(1.0);
    let c_theta = -bound.ln() / (cfg.l0 as f64).powi(cfg.dim as i32);
    (eps_kappa, met, bound, c_theta)
}

pub fn ils_thin_tail(cfg: &ThinTailConfig, seed: u64) -> Result<ThinTailReport> {
    let s = setup(cfg)?;
    let n = cfg.region().len();
    let outcomes: Vec<ThinOutcome> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamId::new(seed, "ils-thin", i).rng();
            let mut omega = vec![0.0; n];
            resample(&cfg.distribution, &mut omega, &mut rng);
            thin_outcome(cfg, &s, &omega)
        })
        .collect::<Result<_>>()?;
    let count = |f: fn(&ThinOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
    let t = cfg.trials as u64;
    let (eps_kappa, hypothesis_met, chain_bound, c_theta) = chain_parts(cfg);
    Ok(ThinTailReport {
        config: cfg.clone(),
        seed,
        r0: cfg.r0(),
        q_size: cfg.q_size(),
        lambda: cfg.lambda(),
        eps_kappa,
        c_a: cfg.c_a(),
        hypothesis_met,
        chain_bound,
        c_theta,
        ground: Proportion::wilson(count(|o| o.ground), t, cfg.confidence),
        low_potential: Proportion::wilson(count(|o| o.low_potential), t, cfg.confidence),
        thin_cluster: Proportion::wilson(count(|o| o.thin_cluster), t, cfg.confidence),
        implication_violations: count(|o| o.implication_violation),
        rayleigh_violations: count(|o| o.rayleigh_violation),
    })
}

/// Exact probabilities of the same events by enumerating the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinTailExact {
    pub ground: f64,
    pub low_potential: f64,
    pub thin_cluster: f64,
    /// `max_x P{ω|_{Q_x} <= κ}`.
    pub single_site: f64,
    /// `ε_κ^{|Q|}`.
    pub single_site_formula: f64,
    pub chain_bound: f64,
    pub hypothesis_met: bool,
    pub implication_violations: u64,
    pub rayleigh_violations: u64,
}

pub fn thin_tail_exact(cfg: &ThinTailConfig) -> Result<ThinTailExact> {
    let s = setup(cfg)?;
    let atoms = cfg
        .distribution
        .atoms()
        .ok_or_else(|| Error::Unsupported("exact enumeration needs an atomic law".into()))?;
    let n = cfg.region().len();
    let base = atoms.len() as u64;
    let total = base
        .checked_pow(n as u32)
        .filter(|t| *t <= MAX_ENUMERATION)
        .ok_or_else(|| Error::Unsupported(format!("{n} region sites exceed the enumeration limit")))?;
    let nx = s.q.len();
    // ground, low, thin, per-site thin..., violations
    let acc = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut omega = vec![0.0; n];
            let mut prob = 1.0;
            for w in omega.iter_mut() {
                let (value, p) = atoms[(idx % base) as usize];
                idx /= base;
                *w = value;
                prob *= p;
            }
            let o = thin_outcome(cfg, &s, &omega)?;
            let mut row = vec![0.0; 5 + nx];
            row[0] = if o.ground { prob } else { 0.0 };
            row[1] = if o.low_potential { prob } else { 0.0 };
            row[2] = if o.thin_cluster { prob } else { 0.0 };
            row[3] = o.implication_violation as u8 as f64;
            row[4] = o.rayleigh_violation as u8 as f64;
            for (k, qx) in s.q.iter().enumerate() {
                if qx.iter().all(|&i| omega[i] <= cfg.kappa) {
                    row[5 + k] = prob;
                }
            }
            Ok::<_, Error>(row)
        })
        .try_reduce(
            || vec![0.0; 5 + nx],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let (eps_kappa, hypothesis_met, chain_bound, _) = chain_parts(cfg);
    Ok(ThinTailExact {
        ground: acc[0],
        low_potential: acc[1],
        thin_cluster: acc[2],
        single_site: acc[5..].iter().copied().fold(0.0, f64::max),
        single_site_formula: eps_kappa.powf(cfg.q_size() as f64),
        chain_bound,
        hypothesis_met,
        implication_violations: acc[3] as u64,
        rayleigh_violations: acc[4] as u64,
    })
}

/// Conditioning on amplitudes beyond `R = ⌊L^τ⌋`, which stay frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub tau: f64,
    pub b: f64,
}

/// Strong-disorder initial scale estimate at `|g| = (ε+4d) R^{A-θ'}`, `θ' = A-d-κ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongDisorderConfig {
    pub dim: usize,
    pub radius: u64,
    pub eps: f64,
    pub kappa: f64,
    pub distribution: AmplitudeDistribution,
    pub potential: InteractionPotential,
    pub r_max: u64,
    pub trials: usize,
    #[serde(default)]
    pub conditioning: Option<Conditioning>,
    /// Energy grid spacing; capped at `ε/2`.
    #[serde(default)]
    pub grid_spacing: Option<f64>,
    /// Overrides the derived coupling.
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl StrongDisorderConfig {
    pub fn theta_prime(&self) -> f64 {
        self.potential.exponent - self.dim as f64 - self.kappa
    }

    /// `R = ⌊L^τ⌋` under conditioning, `L` otherwise.
    pub fn scale(&self) -> f64 {
        match self.conditioning {
            Some(c) => (self.radius as f64).powf(c.tau).floor(),
            None => self.radius as f64,
        }
    }

    pub fn derived_g(&self) -> f64 {
        (self.eps + 4.0 * self.dim as f64) * self.scale().powf(self.potential.exponent - self.theta_prime())
    }

    pub fn g(&self) -> f64 {
        self.g.unwrap_or_else(|| self.derived_g())
    }

    /// `δ = (ε+4d)/|g|`.
    pub fn delta(&self) -> f64 {
        (self.eps + 4.0 * self.dim as f64) / self.g().abs()
    }

    pub fn target(&self) -> f64 {
        let l = self.radius as f64;
        match self.conditioning {
            Some(c) => l.powf(-c.b),
            None => l.powf(-self.kappa),
        }
    }

    pub fn domain(&self) -> Ball {
        Ball::centered(self.dim, self.radius)
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate(self.dim)?;
        self.distribution.validate()?;
        let a_minus_d = self.potential.exponent - self.dim as f64;
        if !(self.kappa > 0.0 && self.kappa < a_minus_d) {
            return Err(invalid(format!("κ must lie in (0, A-d) = (0, {a_minus_d}), got {}", self.kappa)));
        }
        if !(self.eps > 0.0) || self.radius == 0 || self.trials == 0 || self.r_max == 0 {
            return Err(invalid("need ε > 0, L >= 1, r_max >= 1 and at least one trial"));
        }
        if let Some(c) = self.conditioning {
            if !(c.tau >= 1.0) || !(c.b > 0.0) {
                return Err(invalid("conditioning needs τ >= 1 and b > 0"));
            }
        }
        if let Some(h) = self.grid_spacing {
            if !(h > 0.0) {
                return Err(invalid("energy grid is empty: spacing must be positive"));
            }
        }
        if !(self.g().is_finite() && self.g() != 0.0) {
            return Err(invalid("coupling must be finite and nonzero"));
        }
        Ok(())
    }

    /// `[g inf V - 1, g sup V + 4d + 1]` on a grid of spacing at most `ε/2`.
    pub fn energy_grid(&self) -> Result<(Vec<f64>, f64)> {
        let mass = self.potential.ball_sum(self.r_max, self.dim);
        let (lo_w, hi_w) = self.distribution.support();
        let (v_lo, v_hi) = (mass * lo_w, mass * hi_w);
        let g = self.g();
        let (a, b) = if g > 0.0 { (g * v_lo, g * v_hi) } else { (g * v_hi, g * v_lo) };
        let (a, b) = (a - 1.0, b + 4.0 * self.dim as f64 + 1.0);
        let h = self.grid_spacing.unwrap_or(f64::INFINITY).min(0.5 * self.eps);
        let n = ((b - a) / h).ceil() as usize + 1;
        if n > 2_000_000 {
            return Err(invalid(format!("energy grid with {n} points is too fine")));
        }
        Ok(((0..n).map(|i| a + h * i as f64).collect(), h))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongDisorderReport {
    pub config: StrongDisorderConfig,
    pub seed: u64,
    pub g: f64,
    pub derived_g: f64,
    /// The coupling is at least the derived one.
    pub hypothesis_met: bool,
    pub delta: f64,
    pub grid_spacing: f64,
    pub grid_points: usize,
    pub sup_energy: f64,
    pub sup_probability: Proportion,
    pub target: f64,
    pub below_target: bool,
    /// Samples where an eigenvalue is `ε`-close to a grid energy but no `gV(x)` is within `ε+4d`.
    pub reduction_violations: u64,
    /// `sup_c` empirical `P{V(0) ∈ [c-δ/2, c+δ/2]}`.
    pub potential_concentration: f64,
    /// Smoothed-indicator bound on the same quantity, when the threshold allows it.
    pub concentration_bound: Option<f64>,
    pub concentration_note: Option<String>,
}

pub fn ils_strong_disorder(cfg: &StrongDisorderConfig, seed: u64) -> Result<StrongDisorderReport> {
    cfg.validate()?;
    let g = cfg.g();
    let derived = cfg.derived_g();
    let dom = cfg.domain();
    let field = Ball::centered(cfg.dim, cfg.radius + cfg.r_max);
    let sites = dom.sites();
    let map = InfluenceMap::new(&cfg.potential, &field, &sites, cfg.r_max)?;
    let (grid, h) = cfg.energy_grid()?;
    let slack = cfg.eps + 4.0 * cfg.dim as f64;

    let frozen_radius = cfg.conditioning.map(|_| cfg.scale() as u64);
    let mut base = vec![0.0; field.len()];
    let mut random = Vec::new();
    {
        let mut rng = StreamId::new(seed, "ils-strong-frozen", 0).rng();
        let origin = Site::origin(cfg.dim);
        for (i, y) in field.sites().iter().enumerate() {
            match frozen_radius {
                Some(r) if distance(y, &origin) > r => base[i] = cfg.distribution.sample(&mut rng),
                _ => random.push(i),
            }
        }
    }
    let origin_index = dom.index_of(&Site::origin(cfg.dim)).expect("origin inside");

    let rows: Vec<(Vec<u32>, bool, f64)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = StreamId::new(seed, "ils-strong", t).rng();
            let mut omega = base.clone();
            for &i in &random {
                omega[i] = cfg.distribution.sample(&mut rng);
            }
            let mut v = vec![0.0; sites.len()];
            map.apply_into(&omega, 0.0, &mut v);
            let spec = spectrum(&hamiltonian_from_values(&dom, g, &v)?)?;
            let mut gv: Vec<f64> = v.iter().map(|x| g * x).collect();
            gv.sort_by(f64::total_cmp);
            let mut hit_idx = Vec::new();
            let mut violated = false;
            for (k, &e) in grid.iter().enumerate() {
                if spectral_distance(&spec, e) <= cfg.eps {
                    hit_idx.push(k as u32);
                    if spectral_distance(&gv, e) > slack * (1.0 + 1e-12) {
                        violated = true;
                    }
                }
            }
            Ok((hit_idx, violated, v[origin_index]))
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![0u64; grid.len()];
    for (hits, _, _) in &rows {
        for &k in hits {
            counts[k as usize] += 1;
        }
    }
    let (k_best, best) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(k, c)| (k, *c))
        .unwrap_or((0, 0));
    let sup_probability = Proportion::wilson(best, cfg.trials as u64, cfg.confidence);
    let target = cfg.target();

    let delta = cfg.delta();
    let mut v0: Vec<f64> = rows.iter().map(|r| r.2).collect();
    v0.sort_by(f64::total_cmp);
    let mut lo = 0;
    let mut most = 0;
    for hi in 0..v0.len() {
        while v0[hi] - v0[lo] > delta {
            lo += 1;
        }
        most = most.max(hi + 1 - lo);
    }
    let potential_concentration = most as f64 / v0.len() as f64;
    let n_plateau = cfg.potential.plateau_index(cfg.scale().min(cfg.r_max as f64) as u64 + 1).saturating_sub(1).max(1);
    let (concentration_bound, concentration_note) = match ShellWeights::plateaus(&cfg.potential, cfg.dim, 1, n_plateau)
        .and_then(|w| concentration_bound(&cfg.distribution, &w, 0.0, 0.5 * delta, cfg.theta_prime(), None))
    {
        Ok(c) => (Some(c.bound), None),
        Err(e) => (None, Some(e.to_string())),
    };

    Ok(StrongDisorderReport {
        config: cfg.clone(),
        seed,
        g,
        derived_g: derived,
        hypothesis_met: g.abs() >= derived * (1.0 - 1e-12),
        delta,
        grid_spacing: h,
        grid_points: grid.len(),
        sup_energy: grid[k_best],
        sup_probability,
        target,
        below_target: sup_probability.upper <= target,
        reduction_violations: rows.iter().filter(|r| r.1).count() as u64,
        potential_concentration,
        concentration_bound,
        concentration_note,
    })
}
