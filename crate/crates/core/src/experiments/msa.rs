use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::experiments::stats::Proportion;
use crate::lattice::{distance, inner_boundary, Ball, Site};
use crate::model::{AmplitudeDistribution, FieldSample, InfluenceMap, InteractionPotential};
use crate::rng::StreamId;
use crate::spectral::{eigensystem, hamiltonian_from_values, SpectralDecomposition};

/// `max_{x ∈ B_{⌊L/3⌋}(u)} max_{y ∈ ∂⁻B_L(u)} |G(x,y;E)|`, `None` at a resonance.
pub fn max_boundary_green(spec: &SpectralDecomposition, domain: &Ball, e: f64) -> Option<f64> {
    if spec.check_resonance(e).is_err() {
        return None;
    }
    let core = Ball {
        center: domain.center.clone(),
        radius: domain.radius / 3,
    };
    let boundary: Vec<usize> = match inner_boundary(domain) {
        Ok(b) => b.iter().map(|y| domain.index_of(y).expect("boundary inside")).collect(),
        // a single site is its own boundary
        Err(_) => vec![0],
    };
    let mut worst: f64 = 0.0;
    for x in core.sites() {
        let i = domain.index_of(&x).expect("core inside");
        for &j in &boundary {
            worst = worst.max(spec.green_unchecked(i, j, e).abs());
        }
    }
    Some(worst)
}

/// `(E, ε)`-non-singular; a resonance counts as singular.
pub fn ns_predicate(spec: &SpectralDecomposition, domain: &Ball, e: f64, eps: f64) -> bool {
    max_boundary_green(spec, domain, e).is_some_and(|g| g <= eps)
}

/// `(E, γ)`-non-resonant: `dist(Σ, E) >= γ`.
pub fn nr_predicate(spec: &SpectralDecomposition, e: f64, gamma: f64) -> bool {
    spec.distance_to(e) >= gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    Sns,
    Snr,
}

/// One exterior configuration and the quantity it produced: `max |G|` for
/// SNS, the spectral distance for SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnsCertificate {
    pub mode: StabilityMode,
    pub threshold: f64,
    pub holds: bool,
    pub probes: Vec<ProbeOutcome>,
    /// True when the verdict is exact; SNS over finitely many probes is not.
    pub exhaustive: bool,
    pub note: String,
}

impl SnsCertificate {
    fn from_probes(mode: StabilityMode, threshold: f64, probes: Vec<ProbeOutcome>) -> Self {
        let (holds, exhaustive, note) = match mode {
            StabilityMode::Sns => (
                probes.iter().all(|p| p.value <= threshold),
                false,
                "probe certificate over the listed exterior configurations, not a proof".to_string(),
            ),
            StabilityMode::Snr => (
                probes.iter().all(|p| p.value >= threshold),
                true,
                "exterior set to zero as the definition prescribes".to_string(),
            ),
        };
        SnsCertificate {
            mode,
            threshold,
            holds,
            probes,
            exhaustive,
            note,
        }
    }
}

/// A box `B_L(u)` inside a sampling window, with the exterior of `B_{⌊L^τ⌋}(u)` marked.
#[derive(Debug, Clone)]
pub struct SnsProbe {
    pub domain: Ball,
    pub window: Ball,
    pub g: f64,
    map: InfluenceMap,
    exterior: Vec<usize>,
}

impl SnsProbe {
    pub fn new(domain: Ball, window: Ball, pot: &InteractionPotential, g: f64, tau: f64, r_max: u64) -> Result<Self> {
        let stable = (domain.radius as f64).powf(tau).floor() as u64;
        let needed = stable.max(domain.radius + r_max);
        let reach = Ball {
            center: domain.center.clone(),
            radius: needed,
        };
        let covered = distance(&reach.center, &window.center) + reach.radius <= window.radius;
        if !covered {
            return Err(invalid(format!(
                "window of radius {} around {:?} does not contain B_{}({:?})",
                window.radius, window.center.0, needed, domain.center.0
            )));
        }
        let map = InfluenceMap::new(pot, &window, &domain.sites(), r_max)?;
        let exterior = window
            .sites()
            .iter()
            .enumerate()
            .filter(|(_, y)| distance(y, &domain.center) > stable)
            .map(|(i, _)| i)
            .collect();
        Ok(SnsProbe {
            domain,
            window,
            g,
            map,
            exterior,
        })
    }

    fn decompose(&self, omega: &[f64]) -> Result<SpectralDecomposition> {
        let mut v = vec![0.0; self.domain.len()];
        self.map.apply_into(omega, 0.0, &mut v);
        eigensystem(&hamiltonian_from_values(&self.domain, self.g, &v)?)
    }

    fn with_exterior(&self, omega: &[f64], mut fill: impl FnMut() -> f64) -> Vec<f64> {
        let mut w = omega.to_vec();
        for &i in &self.exterior {
            w[i] = fill();
        }
        w
    }

    /// SNR value: spectral distance with the exterior set to zero.
    pub fn snr_distance(&self, omega: &[f64], e: f64) -> Result<f64> {
        Ok(self.decompose(&self.with_exterior(omega, || 0.0))?.distance_to(e))
    }

    /// `max |G|` under all-min, all-max and `m_ext` random exterior draws.
    pub fn sns_values(
        &self,
        omega: &[f64],
        e: f64,
        dist: &AmplitudeDistribution,
        m_ext: usize,
        stream: StreamId,
    ) -> Result<Vec<ProbeOutcome>> {
        let (lo, hi) = dist.support();
        let mut rng = stream.rng();
        let mut out = Vec::with_capacity(m_ext + 2);
        let mut run = |label: String, w: Vec<f64>| -> Result<()> {
            let spec = self.decompose(&w)?;
            let value = max_boundary_green(&spec, &self.domain, e).unwrap_or(f64::INFINITY);
            out.push(ProbeOutcome { label, value });
            Ok(())
        };
        run("all-min".into(), self.with_exterior(omega, || lo))?;
        run("all-max".into(), self.with_exterior(omega, || hi))?;
        for k in 0..m_ext {
            let w = self.with_exterior(omega, || dist.sample(&mut rng));
            run(format!("random-{k}"), w)?;
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &self,
        omega: &[f64],
        e: f64,
        threshold: f64,
        mode: StabilityMode,
        dist: &AmplitudeDistribution,
        m_ext: usize,
        stream: StreamId,
    ) -> Result<SnsCertificate> {
        let probes = match mode {
            StabilityMode::Snr => vec![ProbeOutcome {
                label: "zero".into(),
                value: self.snr_distance(omega, e)?,
            }],
            StabilityMode::Sns => self.sns_values(omega, e, dist, m_ext, stream)?,
        };
        Ok(SnsCertificate::from_probes(mode, threshold, probes))
    }
}

/// SNS/SNR verdict for `B_L(u)` given the field on a window around it.
#[allow(clippy::too_many_arguments)]
pub fn sns_probe(
    domain: &Ball,
    e: f64,
    threshold: f64,
    field: &FieldSample,
    pot: &InteractionPotential,
    g: f64,
    tau: f64,
    r_max: u64,
    dist: &AmplitudeDistribution,
    m_ext: usize,
    mode: StabilityMode,
    stream: StreamId,
) -> Result<SnsCertificate> {
    let probe = SnsProbe::new(domain.clone(), field.domain.clone(), pot, g, tau, r_max)?;
    probe.evaluate(&field.values, e, threshold, mode, dist, m_ext, stream)
}

/// Scaling parameters of the fixed-energy multiscale analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsaParams {
    pub a: f64,
    pub d: usize,
    pub b: f64,
    pub tau: f64,
    pub alpha: f64,
    pub s: u32,
    pub theta: f64,
    pub m: f64,
    pub l0: u64,
}

impl MsaParams {
    pub fn validate(&self) -> Result<()> {
        let d = self.d as f64;
        let fail = |msg: String| Err(invalid(msg));
        if self.d == 0 {
            return fail("d must be at least 1".into());
        }
        if !(self.a > d) {
            return fail(format!("A > d violated: A = {}, d = {}", self.a, self.d));
        }
        if !(self.b > d) {
            return fail(format!("b > d violated: b = {}, d = {}", self.b, self.d));
        }
        if !(self.tau > 1.0) {
            return fail(format!("τ > 1 violated: τ = {}", self.tau));
        }
        let tau_min = self.b / (self.a - d);
        if !(self.tau > tau_min) {
            return fail(format!("τ > b/(A-d) violated: τ = {} <= {tau_min}", self.tau));
        }
        if !(self.alpha > self.tau) {
            return fail(format!("α > τ violated: α = {} <= τ = {}", self.alpha, self.tau));
        }
        let denom = self.b - self.alpha * d;
        if !(denom > 0.0) {
            return fail(format!(
                "bα/(b-αd) must be positive, but b - αd = {} - {}·{} = {denom} <= 0",
                self.b, self.alpha, self.d
            ));
        }
        let s_min = self.b * self.alpha / denom;
        if !(self.s as f64 > s_min) {
            return fail(format!("S > bα/(b-αd) violated: S = {} <= {s_min}", self.s));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return fail(format!("θ must lie in (0, 1), got {}", self.theta));
        }
        if !(self.m >= 1.0) {
            return fail(format!("m >= 1 violated: m = {}", self.m));
        }
        if self.l0 < 2 || self.scale(1) <= self.l0 {
            return fail(format!("L₀ = {} too small for a growing scale sequence", self.l0));
        }
        Ok(())
    }

    /// `L_{k+1} = ⌊L_k^α⌋`.
    pub fn scale(&self, k: usize) -> u64 {
        let mut l = self.l0;
        for _ in 0..k {
            l = (l as f64).powf(self.alpha).floor() as u64;
        }
        l
    }

    /// `m_k = (1 + L_k^{-1/8}) m`.
    pub fn m_k(&self, k: usize) -> f64 {
        (1.0 + (self.scale(k) as f64).powf(-0.125)) * self.m
    }

    /// `ε_k = 4 L_k^{-τA+θ}`.
    pub fn eps_k(&self, k: usize) -> f64 {
        4.0 * (self.scale(k) as f64).powf(-self.tau * self.a + self.theta)
    }

    /// `Y_{k+1} = L_k^{α-1}`.
    pub fn y_next(&self, k: usize) -> f64 {
        (self.scale(k) as f64).powf(self.alpha - 1.0)
    }

    /// Non-singularity threshold `e^{-m_k L_k}` at scale `k`.
    pub fn ns_threshold(&self, k: usize) -> f64 {
        (-self.m_k(k) * self.scale(k) as f64).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsaConfig {
    pub params: MsaParams,
    pub g: f64,
    pub energy: f64,
    pub distribution: AmplitudeDistribution,
    /// Plateau exponent `υ` of the interaction.
    pub ups: f64,
    pub r_max: u64,
    pub m_ext: usize,
    pub trials: usize,
    pub k_max: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

impl MsaConfig {
    pub fn potential(&self) -> Result<InteractionPotential> {
        InteractionPotential::piecewise(self.params.a, self.ups)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.potential()?.validate(self.params.d)?;
        self.distribution.validate()?;
        if self.trials == 0 || self.r_max == 0 {
            return Err(invalid("need at least one trial and r_max >= 1"));
        }
        if self.k_max > 2 {
            return Err(invalid(format!("k_max = {} exceeds the desk-scale limit 2", self.k_max)));
        }
        if !(self.g.is_finite() && self.energy.is_finite()) {
            return Err(invalid("coupling and energy must be finite"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub k: usize,
    pub l_k: u64,
    pub m_k: f64,
    pub ns_threshold: f64,
    pub eps_k: f64,
    /// `P{B_{L_k} is not (E, m_k)-SNS}`.
    pub p_k: Proportion,
    /// `L_k^{-b}`.
    pub target: f64,
    pub below_target: bool,
    /// Failures of `(E, ε_k)`-SNR.
    pub snr_failures: u64,
    pub sns_failures: u64,
    pub both_failures: u64,
    pub trials: u64,
    pub certificate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub k: usize,
    pub l_k: u64,
    pub l_next: u64,
    pub centers: Vec<Site>,
    /// Pairwise separation `2L_k^τ` (strict) for the cluster statistic.
    pub separation: f64,
    /// Number of `(S+1)`-subsets of the admissible centers.
    pub c_d: f64,
    pub y_next: f64,
    /// `cluster_histogram[j]` counts trials with `S_{k+1} = j`.
    pub cluster_histogram: Vec<u64>,
    pub p_k: f64,
    pub p_next: Proportion,
    /// `½L_{k+1}^{-b} + C_d Y_{k+1}^{(S+1)d} p_k^{S+1}`.
    pub lemma_bound: f64,
    /// `½L_{k+1}^{-b} + Y_{k+1}^{S+1}/(S+1)! p_k^{S+1}`.
    pub lemma_bound_factorial: f64,
    pub within_bound: bool,
    /// Threshold `e^{-m L_{k+1}}` of the conclusion.
    pub conclusion_threshold: f64,
    pub hypotheses_met: u64,
    pub counterexamples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsaReport {
    pub config: MsaConfig,
    pub seed: u64,
    pub scales: Vec<ScaleReport>,
    pub steps: Vec<StepReport>,
}

/// Lattice points of pitch `L_k` inside `B_{L_{k+1}}`.
pub fn admissible_centers(d: usize, l_k: u64, l_next: u64) -> Vec<Site> {
    let steps = (l_next / l_k) as i64;
    let side = (2 * steps + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = vec![0i64; d];
            for k in (0..d).rev() {
                c[k] = ((idx % side) as i64 - steps) * l_k as i64;
                idx /= side;
            }
            Site(c)
        })
        .collect()
}

/// Largest subset of `points` with pairwise distances `> sep`.
pub fn max_separated(points: &[Site], sep: f64) -> usize {
    fn go(points: &[Site], chosen: &mut Vec<usize>, from: usize, sep: f64, best: &mut usize) {
        *best = (*best).max(chosen.len());
        if chosen.len() + (points.len() - from) <= *best {
            return;
        }
        for i in from..points.len() {
            if chosen.iter().all(|&j| distance(&points[i], &points[j]) as f64 > sep) {
                chosen.push(i);
                go(points, chosen, i + 1, sep, best);
                chosen.pop();
            }
        }
    }
    let mut best = 0;
    go(points, &mut Vec::new(), 0, sep, &mut best);
    best
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u64) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

#[derive(Debug, Clone, Default)]
struct Tally {
    trials: u64,
    sns_fail: u64,
    snr_fail: u64,
    both: u64,
}

impl Tally {
    fn add(&mut self, sns_ok: bool, snr_ok: bool) {
        self.trials += 1;
        self.sns_fail += !sns_ok as u64;
        self.snr_fail += !snr_ok as u64;
        self.both += (!sns_ok && !snr_ok) as u64;
    }

    fn report(&self, cfg: &MsaConfig, k: usize) -> ScaleReport {
        let p = &cfg.params;
        let p_k = Proportion::wilson(self.sns_fail, self.trials, cfg.confidence);
        let target = (p.scale(k) as f64).powf(-p.b);
        ScaleReport {
            k,
            l_k: p.scale(k),
            m_k: p.m_k(k),
            ns_threshold: p.ns_threshold(k),
            eps_k: p.eps_k(k),
            p_k,
            target,
            below_target: p_k.upper <= target,
            snr_failures: self.snr_fail,
            sns_failures: self.sns_fail,
            both_failures: self.both,
            trials: self.trials,
            certificate: format!(
                "SNS checked on all-min, all-max and {} random exterior draws; SNR exact",
                cfg.m_ext
            ),
        }
    }
}

struct BallVerdict {
    sns_ok: bool,
    snr_ok: bool,
    worst_green: f64,
}

fn judge(
    probe: &SnsProbe,
    omega: &[f64],
    cfg: &MsaConfig,
    k: usize,
    stream: StreamId,
) -> Result<BallVerdict> {
    let p = &cfg.params;
    let e = cfg.energy;
    let values = probe.sns_values(omega, e, &cfg.distribution, cfg.m_ext, stream)?;
    let worst_green = values.iter().map(|v| v.value).fold(0.0, f64::max);
    Ok(BallVerdict {
        sns_ok: worst_green <= p.ns_threshold(k),
        snr_ok: probe.snr_distance(omega, e)? >= p.eps_k(k),
        worst_green,
    })
}

/// Monte Carlo estimates of `p_k` and of the step `k → k+1` for `k < k_max`.
pub fn msa_run(cfg: &MsaConfig, seed: u64) -> Result<MsaReport> {
    cfg.validate()?;
    let p = &cfg.params;
    let pot = cfg.potential()?;
    let d = p.d;
    let mut scales: Vec<ScaleReport> = Vec::new();
    let mut steps = Vec::new();

    if cfg.k_max == 0 {
        let l = p.scale(0);
        let window = Ball::centered(d, l + p.scale(0).max(cfg.r_max) + cfg.r_max);
        let probe = SnsProbe::new(Ball::centered(d, l), window.clone(), &pot, cfg.g, p.tau, cfg.r_max)?;
        let verdicts: Vec<(bool, bool)> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                let stream = StreamId::new(seed, "msa-scale-0", t);
                let mut rng = stream.rng();
                let omega: Vec<f64> = (0..window.len()).map(|_| cfg.distribution.sample(&mut rng)).collect();
                let v = judge(&probe, &omega, cfg, 0, stream.child(1))?;
                Ok((v.sns_ok, v.snr_ok))
            })
            .collect::<Result<_>>()?;
        let mut tally = Tally::default();
        verdicts.iter().for_each(|&(a, b)| tally.add(a, b));
        scales.push(tally.report(cfg, 0));
        return Ok(MsaReport {
            config: cfg.clone(),
            seed,
            scales,
            steps,
        });
    }

    for k in 0..cfg.k_max {
        let (l_k, l_next) = (p.scale(k), p.scale(k + 1));
        let centers = admissible_centers(d, l_k, l_next);
        let stable_k = (l_k as f64).powf(p.tau).floor() as u64;
        let stable_next = (l_next as f64).powf(p.tau).floor() as u64;
        let radius = (l_next + stable_k.max(l_k + cfg.r_max)).max(stable_next.max(l_next + cfg.r_max));
        let window = Ball::centered(d, radius);
        let big = SnsProbe::new(Ball::centered(d, l_next), window.clone(), &pot, cfg.g, p.tau, cfg.r_max)?;
        let small: Vec<SnsProbe> = centers
            .iter()
            .map(|c| SnsProbe::new(Ball::new(c.clone(), l_k, d)?, window.clone(), &pot, cfg.g, p.tau, cfg.r_max))
            .collect::<Result<_>>()?;
        let origin = centers
            .iter()
            .position(|c| c.0.iter().all(|&x| x == 0))
            .expect("origin is a center");
        let separation = 2.0 * (l_k as f64).powf(p.tau);
        let conclusion_threshold = (-p.m * l_next as f64).exp();

        struct Trial {
            center: (bool, bool),
            big: (bool, bool),
            cluster: usize,
            hypotheses: bool,
            counterexample: bool,
        }
        let purpose = format!("msa-step-{k}");
        let trials: Vec<Trial> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                let stream = StreamId::new(seed, &purpose, t);
                let mut rng = stream.rng();
                let omega: Vec<f64> = (0..window.len()).map(|_| cfg.distribution.sample(&mut rng)).collect();
                let mut bad = Vec::new();
                let mut center = (true, true);
                for (i, probe) in small.iter().enumerate() {
                    let v = judge(probe, &omega, cfg, k, stream.child(1 + i as u64))?;
                    if !v.sns_ok {
                        bad.push(centers[i].clone());
                    }
                    if i == origin {
                        center = (v.sns_ok, v.snr_ok);
                    }
                }
                let v = judge(&big, &omega, cfg, k + 1, stream.child(0))?;
                let cluster = max_separated(&bad, separation);
                // hypothesis (i) uses ε_k at the lower scale
                let snr_k = big.snr_distance(&omega, cfg.energy)? >= p.eps_k(k);
                let hypotheses = snr_k && cluster <= p.s as usize;
                let conclusion = v.worst_green <= conclusion_threshold;
                Ok(Trial {
                    center,
                    big: (v.sns_ok, v.snr_ok),
                    cluster,
                    hypotheses,
                    counterexample: hypotheses && !conclusion,
                })
            })
            .collect::<Result<_>>()?;

        let mut tally_k = Tally::default();
        let mut tally_next = Tally::default();
        let mut histogram = vec![0u64; centers.len() + 1];
        for t in &trials {
            tally_k.add(t.center.0, t.center.1);
            tally_next.add(t.big.0, t.big.1);
            histogram[t.cluster] += 1;
        }
        let rep_k = tally_k.report(cfg, k);
        let rep_next = tally_next.report(cfg, k + 1);
        let pk = rep_k.p_k.estimate;
        let s1 = p.s as u64 + 1;
        let half = 0.5 * (l_next as f64).powf(-p.b);
        let c_d = binomial(centers.len() as u64, s1);
        let y = p.y_next(k);
        let lemma_bound = half + c_d * y.powf((s1 * d as u64) as f64) * pk.powf(s1 as f64);
        let lemma_bound_factorial = half + y.powf(s1 as f64) / factorial(s1) * pk.powf(s1 as f64);
        steps.push(StepReport {
            k,
            l_k,
            l_next,
            centers,
            separation,
            c_d,
            y_next: y,
            cluster_histogram: histogram,
            p_k: pk,
            p_next: rep_next.p_k,
            lemma_bound,
            lemma_bound_factorial,
            within_bound: rep_next.p_k.upper <= lemma_bound,
            conclusion_threshold,
            hypotheses_met: trials.iter().filter(|t| t.hypotheses).count() as u64,
            counterexamples: trials.iter().filter(|t| t.counterexample).count() as u64,
        });
        if scales.is_empty() {
            scales.push(rep_k);
        }
        scales.push(rep_next);
    }
    Ok(MsaReport {
        config: cfg.clone(),
        seed,
        scales,
        steps,
    })
}

/// Draws one field on `window` for probing by hand.
pub fn sample_window<R: Rng + ?Sized>(dist: &AmplitudeDistribution, window: &Ball, rng: &mut R) -> FieldSample {
    let values = (0..window.len()).map(|_| dist.sample(rng)).collect();
    FieldSample::new(window.clone(), values, crate::model::Background::FrozenZero).expect("sizes agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectrum;

    fn params(b: f64, tau: f64, alpha: f64, s: u32) -> MsaParams {
        MsaParams {
            a: 3.0,
            d: 1,
            b,
            tau,
            alpha,
            s,
            theta: 0.1,
            m: 1.0,
            l0: 6,
        }
    }

    #[test]
    fn validator_examples() {
        let err = params(1.2, 1.5, 2.0, 3).validate().unwrap_err().to_string();
        assert!(err.contains("b - αd"), "{err}");
        let mut p = params(2.0, 1.5, 1.8, 19);
        p.a = 6.0;
        p.validate().unwrap();
        p.s = 18;
        assert!(p.validate().unwrap_err().to_string().contains("S >"));
        let mut p = params(2.0, 0.5, 1.8, 19);
        p.a = 6.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn derived_sequences() {
        let p = params(1.5, 1.2, 1.4, 22);
        p.validate().unwrap();
        assert_eq!(p.scale(1), 12);
        assert_eq!(p.scale(2), 32);
        assert!((p.m_k(0) - (1.0 + 6f64.powf(-0.125))).abs() < 1e-15);
        assert!((p.eps_k(0) - 4.0 * 6f64.powf(-3.5)).abs() < 1e-15);
        assert!((p.y_next(0) - 6f64.powf(0.4)).abs() < 1e-15);
    }

    fn decomposition(l: u64, g: f64, v: &[f64]) -> (Ball, SpectralDecomposition) {
        let dom = Ball::centered(1, l);
        let spec = eigensystem(&hamiltonian_from_values(&dom, g, v).unwrap()).unwrap();
        (dom, spec)
    }

    #[test]
    fn nr_closed_form() {
        let (_, spec) = decomposition(1, 0.0, &[0.0; 3]);
        assert!((spec.distance_to(0.0) - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!(nr_predicate(&spec, 0.0, 0.5));
        assert!(nr_predicate(&spec, 0.0, 0.0));
        assert!(!nr_predicate(&spec, spec.eigenvalues[1], 1e-9));
    }

    #[test]
    fn ns_far_below_spectrum() {
        let v: Vec<f64> = (0..19).map(|i| ((i * 7) % 5) as f64 / 4.0).collect();
        let (dom, spec) = decomposition(9, 10.0, &v);
        let e = spec.eigenvalues[0] - 10.0;
        let g = max_boundary_green(&spec, &dom, e).unwrap();
        // Combes-Thomas: distance 6 at gap 10 with hopping 1
        assert!(g < 1e-5, "{g}");
        assert!(ns_predicate(&spec, &dom, e, 1e-5));
        assert!(!ns_predicate(&spec, &dom, spec.eigenvalues[3], 1.0));
    }

    #[test]
    fn ns_monotone_in_eps() {
        let v: Vec<f64> = (0..13).map(|i| (i as f64 * 0.37).sin()).collect();
        let (dom, spec) = decomposition(6, 3.0, &v);
        for e in [-2.0, 0.3, 1.7, 4.0] {
            let mut prev = false;
            for k in 0..30 {
                let now = ns_predicate(&spec, &dom, e, 10f64.powi(k - 20));
                assert!(!prev || now);
                prev = now;
            }
        }
    }

    #[test]
    fn core_ball_at_l3() {
        let dom = Ball::centered(1, 3);
        let (_, spec) = decomposition(3, 0.0, &[0.0; 7]);
        let core = Ball {
            center: dom.center.clone(),
            radius: dom.radius / 3,
        };
        assert_eq!(core.len(), 3);
        // the core rows of G against the two boundary sites
        let e = -1.0;
        let expect = (0..3)
            .flat_map(|i| [0usize, 6].map(|j| spec.green(i + 2, j, e).unwrap().abs()))
            .fold(0.0, f64::max);
        assert_eq!(max_boundary_green(&spec, &dom, e).unwrap(), expect);
    }

    #[test]
    fn snr_zero_exterior_is_free_spectrum() {
        let pot = InteractionPotential::piecewise(3.0, 1.0).unwrap();
        let dom = Ball::centered(1, 2);
        let window = Ball::centered(1, 20);
        let field = FieldSample::zeros(window.clone());
        let free = spectrum(&hamiltonian_from_values(&dom, 0.0, &[0.0; 5]).unwrap()).unwrap();
        let e = 0.9;
        let gamma = crate::spectral::spectral_distance(&free, e);
        let d = AmplitudeDistribution::Uniform01;
        for g in [0.0, 5.0, -40.0] {
            let c = sns_probe(&dom, e, gamma, &field, &pot, g, 1.5, 10, &d, 3, StabilityMode::Snr, StreamId::new(1, "t", 0))
                .unwrap();
            assert!(c.holds && c.exhaustive);
            assert!((c.probes[0].value - gamma).abs() < 1e-12);
        }
        let c = sns_probe(&dom, e, 1.0, &field, &pot, 1.0, 1.5, 10, &d, 0, StabilityMode::Sns, StreamId::new(1, "t", 0))
            .unwrap();
        assert_eq!(c.probes.len(), 2);
        assert!(!c.exhaustive);
        assert!(sns_probe(&dom, e, 1.0, &field, &pot, 1.0, 1.5, 30, &d, 0, StabilityMode::Sns, StreamId::new(1, "t", 0))
            .is_err());
    }

    #[test]
    fn plateau_exterior_keeps_h_tilde() {
        // exterior sites on a single plateau only shift the spectrum
        let pot = InteractionPotential::piecewise(3.0, 2.0).unwrap();
        let dom = Ball::centered(1, 2);
        let window = Ball::centered(1, 60);
        let mut rng = StreamId::new(8, "plateau-probe", 0).rng();
        let mut field = sample_window(&AmplitudeDistribution::Uniform01, &window, &mut rng);
        let ext: Vec<Site> = window.sites().into_iter().filter(|y| !dom.contains(y)).collect();
        let a = crate::spectral::plateau_decompose(&dom, &pot, &field, 2.0, &ext, 58).unwrap();
        for y in &a.plateau_sites {
            field.set(y, 1.0).unwrap();
        }
        let b = crate::spectral::plateau_decompose(&dom, &pot, &field, 2.0, &ext, 58).unwrap();
        assert_eq!(a.h_tilde.matrix, b.h_tilde.matrix);
        let sa = eigensystem(&a.h.matrix).unwrap();
        let sb = eigensystem(&b.h.matrix).unwrap();
        let shift = b.xi - a.xi;
        for (x, y) in sa.eigenvalues.iter().zip(&sb.eigenvalues) {
            assert!((y - x - shift).abs() < 1e-9);
        }
    }

    #[test]
    fn centers_and_clusters() {
        let c = admissible_centers(1, 6, 12);
        let xs: Vec<i64> = c.iter().map(|s| s.0[0]).collect();
        assert_eq!(xs, vec![-12, -6, 0, 6, 12]);
        assert_eq!(admissible_centers(2, 6, 12).len(), 25);
        assert_eq!(max_separated(&c, 17.2), 2);
        assert_eq!(max_separated(&c, 5.0), 5);
        assert_eq!(max_separated(&[], 1.0), 0);
        assert_eq!(binomial(5, 23), 0.0);
        assert_eq!(binomial(5, 2), 10.0);
    }

    #[test]
    fn small_run_is_deterministic() {
        let cfg = MsaConfig {
            params: params(1.5, 1.2, 1.4, 22),
            g: 1000.0,
            energy: 1700.0,
            distribution: AmplitudeDistribution::Uniform01,
            ups: 1.0,
            r_max: 30,
            m_ext: 1,
            trials: 20,
            k_max: 1,
            confidence: 0.95,
        };
        let a = msa_run(&cfg, 3).unwrap();
        let b = msa_run(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scales.len(), 2);
        assert_eq!(a.steps[0].c_d, 0.0);
        let mut c = cfg.clone();
        c.k_max = 0;
        assert_eq!(msa_run(&c, 3).unwrap().scales.len(), 1);
    }
}
