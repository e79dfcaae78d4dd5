use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::charfun::shells::{log_sum, ShellTerm, ShellWeights};
use crate::error::{invalid, Error, Result};
use crate::model::AmplitudeDistribution;
use crate::quadrature::integrate_pieces;

/// `χ_ε = π · (1_{[-4ε,4ε]} * N(0, σ_ε²))` with `σ_ε = aε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedIndicator {
    pub eps: f64,
    pub a: f64,
    pub sigma: f64,
}

impl SmoothedIndicator {
    pub fn new(eps: f64) -> Result<Self> {
        Self::with_width(eps, 1.2)
    }

    pub fn with_width(eps: f64, a: f64) -> Result<Self> {
        if !(eps > 0.0) || !(a > 0.0) {
            return Err(invalid("smoothing needs ε > 0 and a > 0"));
        }
        Ok(SmoothedIndicator {
            eps,
            a,
            sigma: a * eps,
        })
    }

    pub fn window(&self) -> (f64, f64) {
        (-4.0 * self.eps, 4.0 * self.eps)
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = Normal::new(0.0, self.sigma).expect("positive width");
        std::f64::consts::PI * (n.cdf(4.0 * self.eps - x) - n.cdf(-4.0 * self.eps - x))
    }

    /// `ĥ(t) = ε sin(4εt)/(εt) · e^{-σ²t²/2}`; `χ̂_ε = 2π ĥ`.
    pub fn hat(&self, t: f64) -> f64 {
        let e = self.eps;
        let core = if (e * t).abs() < 1e-8 {
            4.0 * e
        } else {
            (4.0 * e * t).sin() / t
        };
        core * (-0.5 * self.sigma * self.sigma * t * t).exp()
    }

    /// `χ_ε >= 1_{[-ε, ε]}` on `points` samples of `[-6ε, 6ε]`.
    pub fn dominates_indicator(&self, points: usize) -> bool {
        (0..=points).all(|i| {
            let x = -6.0 * self.eps + 12.0 * self.eps * i as f64 / points as f64;
            let ind = if x.abs() <= self.eps { 1.0 } else { 0.0 };
            self.value(x) >= ind
        })
    }

    /// `𝒯_ε = ε^{-1} ln² ε^{-1}`.
    pub fn cal_t(&self) -> f64 {
        let l = (1.0 / self.eps).ln();
        l * l / self.eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBound {
    pub center: f64,
    pub eps: f64,
    pub theta: f64,
    pub threshold: f64,
    pub t0: f64,
    /// `T_M = t₀/𝔞_M`.
    pub t_m: f64,
    pub cal_t: f64,
    /// Where the numerical integral stops and the Gaussian tail takes over.
    pub cutoff: f64,
    /// `∫_{|t| <= T_M} |ĥφ|`.
    pub j1_inner: f64,
    /// `∫_{T_M < |t| <= cutoff} |ĥφ|`.
    pub j1_outer: f64,
    pub j1: f64,
    pub j2: f64,
    pub bound: f64,
    pub quadrature_error: f64,
    /// `bound / (M^A |I|)`.
    pub fitted_c: f64,
}

/// Upper bound on `P{Y + S_{M,N} ∈ [E-ε, E+ε]}` for any `Y` independent of `S`.
pub fn concentration_bound(
    dist: &AmplitudeDistribution,
    weights: &ShellWeights,
    center: f64,
    eps: f64,
    theta: f64,
    t0: Option<f64>,
) -> Result<ConcentrationBound> {
    if dist.is_degenerate() {
        return Err(Error::Degenerate);
    }
    if !(theta > 0.0) {
        return Err(invalid(format!("θ must be positive, got {theta}")));
    }
    let a = weights.potential.exponent;
    let threshold = (weights.n.max(1) as f64).powf(-a / (1.0 + theta));
    if !(eps >= threshold) {
        return Err(Error::BelowThreshold { eps, threshold });
    }
    let t0 = match t0 {
        Some(t) => t,
        None => dist.quadratic_regime()?,
    };
    let t_m = t0 / weights.weight_of(weights.m);
    let parts = smoothed_parts(dist, &weights.terms, eps, t_m)?;
    let (cal_t, cutoff) = (parts.cal_t, parts.cutoff);
    let j1_inner = parts.inner;
    let j1_outer = parts.outer;
    let j1 = j1_inner + j1_outer;
    let j2 = parts.j2;
    let bound = j1 + j2;
    let m_pow = (weights.m.max(1) as f64).powf(a);
    Ok(ConcentrationBound {
        center,
        eps,
        theta,
        threshold,
        t0,
        t_m,
        cal_t,
        cutoff,
        j1_inner,
        j1_outer,
        j1,
        j2,
        bound,
        quadrature_error: parts.error,
        fitted_c: bound / (m_pow * 2.0 * eps),
    })
}

struct SmoothedParts {
    cal_t: f64,
    cutoff: f64,
    inner: f64,
    outer: f64,
    j2: f64,
    error: f64,
}

/// `2∫_0^{cutoff} |ĥφ|` split at `split`, plus the Gaussian tail beyond the cutoff.
fn smoothed_parts(dist: &AmplitudeDistribution, terms: &[ShellTerm], eps: f64, split: f64) -> Result<SmoothedParts> {
    let chi = SmoothedIndicator::new(eps)?;
    let cal_t = chi.cal_t();
    let cutoff = if cal_t > 0.0 { cal_t.min(12.0 / chi.sigma) } else { 12.0 / chi.sigma };
    let integrand = |t: f64| {
        let l = log_sum(dist, terms, t);
        chi.hat(t).abs() * (-l).exp()
    };
    let fastest = terms.iter().map(|term| term.weight.abs()).fold(4.0 * eps, f64::max);
    let step = 0.5 * std::f64::consts::PI / fastest;
    let split = split.min(cutoff);
    let inner = integrate_pieces(&integrand, &breaks(0.0, split, step), 1e-13, 1e-10)?;
    let outer = integrate_pieces(&integrand, &breaks(split, cutoff, step), 1e-13, 1e-10)?;
    let gauss_tail = 2.0 * (2.0 * std::f64::consts::PI).sqrt() / chi.sigma
        * 0.5
        * erfc(chi.sigma * cutoff / std::f64::consts::SQRT_2);
    Ok(SmoothedParts {
        cal_t,
        cutoff,
        inner: 2.0 * inner.value,
        outer: 2.0 * outer.value,
        j2: (4.0 * eps).min(1.0 / cutoff) * gauss_tail,
        error: 2.0 * (inner.error + outer.error),
    })
}

/// Upper bound on `sup_c P{Y + Σ_n 𝔞_n X_n ∈ [c-ε, c+ε]}` for any `Y` independent
/// of the sum, with no restriction on `ε`.
pub fn interval_mass_bound(dist: &AmplitudeDistribution, terms: &[ShellTerm], eps: f64) -> Result<f64> {
    if dist.is_degenerate() {
        return Err(Error::Degenerate);
    }
    let p = smoothed_parts(dist, terms, eps, f64::INFINITY)?;
    Ok((p.inner + p.outer + p.j2 + p.error).min(1.0))
}

fn breaks(a: f64, b: f64, step: f64) -> Vec<f64> {
    if b <= a {
        return vec![a, a];
    }
    let pieces = ((b - a) / step).ceil().clamp(1.0, 1e6) as usize;
    (0..=pieces)
        .map(|i| a + (b - a) * i as f64 / pieces as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InteractionPotential;
    use crate::quadrature::integrate;

    #[test]
    fn smoothed_indicator_dominates() {
        for eps in [1e-3, 0.1, 2.0] {
            let chi = SmoothedIndicator::new(eps).unwrap();
            assert!(chi.dominates_indicator(4000));
        }
    }

    #[test]
    fn hat_is_fourier_transform() {
        let chi = SmoothedIndicator::new(0.3).unwrap();
        for t in [0.0, 0.7, 3.1, 9.0] {
            let r = integrate(|x| chi.value(x) * (t * x).cos(), -8.0, 8.0, 1e-12, 0.0, 10_000).unwrap();
            assert!((r.value - 2.0 * std::f64::consts::PI * chi.hat(t)).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn refuses_small_eps_and_degenerate_law() {
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let w = ShellWeights::shells(&pot, 1, 1, 4).unwrap();
        let d = AmplitudeDistribution::BernoulliSym;
        match concentration_bound(&d, &w, 0.0, 0.1, 1.0, None) {
            Err(Error::BelowThreshold { threshold, .. }) => assert!((threshold - 0.25).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        let p1 = AmplitudeDistribution::BernoulliP { p: 1.0 };
        assert!(matches!(
            concentration_bound(&p1, &w, 0.0, 0.5, 1.0, None),
            Err(Error::Degenerate)
        ));
    }

    #[test]
    fn bound_roughly_linear_in_eps() {
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let w = ShellWeights::shells(&pot, 1, 1, 30).unwrap();
        let d = AmplitudeDistribution::Uniform01;
        let a = concentration_bound(&d, &w, 0.0, 0.05, 1.0, None).unwrap();
        let b = concentration_bound(&d, &w, 0.0, 0.1, 1.0, None).unwrap();
        let ratio = b.bound / a.bound;
        assert!(ratio > 1.5 && ratio < 2.5, "ratio {ratio}");
    }
}
