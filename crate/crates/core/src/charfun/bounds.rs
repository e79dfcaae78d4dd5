use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charfun::shells::{log_sum, shell_product, ShellTerm, ShellWeights};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_line, log_space, LineFit};
use crate::model::AmplitudeDistribution;

/// `φ_X(t)` in closed form.
pub fn single_char_fun(dist: &AmplitudeDistribution, t: f64) -> Complex64 {
    dist.char_fn(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `|e^{is} - Σ_{k<=n} (is)^k/k!| <= |s|^{n+1}/(n+1)!`.
pub fn taylor_remainder_check(n: u32, s: f64) -> TaylorCheck {
    let mut partial = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    let is = Complex64::new(0.0, s);
    for k in 0..=n {
        if k > 0 {
            term = term * is / k as f64;
        }
        partial += term;
    }
    let lhs = (Complex64::from_polar(1.0, s) - partial).norm();
    let mut rhs = 1.0;
    for k in 1..=(n + 1) {
        rhs *= s.abs() / k as f64;
    }
    // the partial sum cancels catastrophically for large |s|
    let tol = 1e-12 * (1.0 + partial.norm());
    TaylorCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBound {
    pub applies: bool,
    pub threshold: f64,
    pub lower: f64,
    pub exact: f64,
    /// `exact >= lower`; meaningful only where the bound applies.
    pub holds: bool,
}

/// `ln|φ(t)|^{-1} >= σ²t²/4` for `|t| <= min(σ²/m₃, (3/5)σ^{1/2})`.
pub fn quadratic_log_bound(dist: &AmplitudeDistribution, t: f64) -> Result<QuadraticBound> {
    let threshold = dist.quadratic_regime()?;
    let lower = 0.25 * dist.moments().variance * t * t;
    let exact = dist.log_inv_modulus(t);
    Ok(QuadraticBound {
        applies: t.abs() <= threshold,
        threshold,
        lower,
        exact,
        holds: exact >= lower,
    })
}

/// Split of `ln|φ_S(t)|^{-1}` at `N_t`, with the quantities around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t: f64,
    pub t0: f64,
    pub n_t: u64,
    /// `T_N = t₀/𝔞_N` for the upper end of the weights.
    pub t_big_n: f64,
    /// `𝒯_ε`, when an interval is involved.
    pub cal_t: Option<f64>,
    /// Head `Σ_{n <= N_t}`.
    pub s1: f64,
    /// Tail `Σ_{n > N_t}`.
    pub s2: f64,
    pub total: f64,
    /// `(σ²/4) t² Σ_{n > N_t} K_n 𝔞_n²`.
    pub s2_lower: f64,
    pub s2_bound_holds: bool,
    /// No explicit term beyond `N_t`.
    pub empty_tail: bool,
    /// `S₂ / (t² Σ_{n > N_t} K_n 𝔞_n²)`.
    pub fitted_c: Option<f64>,
    pub j1: Option<f64>,
    pub j2: Option<f64>,
}

/// `S₂(t) = Σ_{n > N_t} K_n ln|φ_X(𝔞_n t)|^{-1}` against the quadratic bound.
pub fn tail_bound_s2(
    dist: &AmplitudeDistribution,
    weights: &ShellWeights,
    t: f64,
    t0: f64,
) -> Result<BoundReport> {
    let certified = dist.quadratic_regime()?;
    if !(t0 > 0.0) || t0 > certified * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "t0 = {t0} outside the certified quadratic regime (0, {certified}]"
        )));
    }
    let n_t = weights.n_t(t, t0);
    let (head, tail): (Vec<ShellTerm>, Vec<ShellTerm>) =
        weights.terms.iter().partition(|term| term.index <= n_t);
    let s1 = log_sum(dist, &head, t);
    let s2 = log_sum(dist, &tail, t);
    let k2: f64 = tail
        .iter()
        .map(|term| term.count as f64 * term.weight * term.weight)
        .sum();
    let s2_lower = 0.25 * dist.moments().variance * t * t * k2;
    Ok(BoundReport {
        t,
        t0,
        n_t,
        t_big_n: weights.t_big(t0),
        cal_t: None,
        s1,
        s2,
        total: s1 + s2,
        s2_lower,
        s2_bound_holds: s2 >= s2_lower * (1.0 - 1e-12),
        empty_tail: tail.is_empty(),
        fitted_c: (k2 > 0.0 && t != 0.0).then(|| s2 / (t * t * k2)),
        j1: None,
        j2: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialLogBound {
    pub value: f64,
    /// All factors satisfy `𝔞_n |t| <= t₀`.
    pub all_quadratic: bool,
    /// Log-sum restricted to the factors inside the quadratic regime.
    pub quadratic_part: f64,
    /// `(σ²/4) t² Σ K_n 𝔞_n²` over the same factors.
    pub quadratic_lower: f64,
    /// `value / (N^{d-2A} t²)`.
    pub fitted_c: f64,
}

/// `ln|E e^{itS_{M,N}}|^{-1} = Σ_{n=M}^{N} K_n ln|φ_X(𝔞_n t)|^{-1}`.
pub fn partial_log_bound(
    dist: &AmplitudeDistribution,
    weights: &ShellWeights,
    t: f64,
) -> Result<PartialLogBound> {
    if weights.m > weights.n {
        return Err(invalid("M exceeds N"));
    }
    let t0 = dist.quadratic_regime()?;
    let value = log_sum(dist, &weights.terms, t);
    let inside: Vec<ShellTerm> = weights
        .terms
        .iter()
        .copied()
        .filter(|term| term.weight * t.abs() <= t0)
        .collect();
    let quadratic_part = log_sum(dist, &inside, t);
    let k2: f64 = inside
        .iter()
        .map(|term| term.count as f64 * term.weight * term.weight)
        .sum();
    let a = weights.potential.exponent;
    let scale = (weights.n.max(1) as f64).powf(weights.dim as f64 - 2.0 * a) * t * t;
    Ok(PartialLogBound {
        value,
        all_quadratic: inside.len() == weights.terms.len(),
        quadratic_part,
        quadratic_lower: 0.25 * dist.moments().variance * t * t * k2,
        fitted_c: if scale > 0.0 { value / scale } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CramerReport {
    pub applicable: bool,
    pub zeta: f64,
    pub s_star: Option<f64>,
    pub n_t: u64,
    /// Head factors with `|𝔞_n t| >= s*`, counted with multiplicity `K_n`.
    pub counted: u64,
    pub bound: f64,
    pub s1_exact: f64,
    pub holds: bool,
}

/// `S₁(t) >= ln(ζ^{-1}) · #{head factors with |𝔞_n t| >= s*}`.
pub fn cramer_ripple_bound(
    dist: &AmplitudeDistribution,
    zeta: f64,
    weights: &ShellWeights,
    t: f64,
) -> Result<CramerReport> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(invalid(format!("ζ must lie in (0, 1), got {zeta}")));
    }
    let t0 = dist.quadratic_regime()?;
    let n_t = weights.n_t(t, t0);
    let head: Vec<ShellTerm> = weights
        .terms
        .iter()
        .copied()
        .filter(|term| term.index <= n_t)
        .collect();
    let s1_exact = if n_t == 0 { 0.0 } else { log_sum(dist, &head, t) };
    let Some(s_star) = dist.cramer_threshold(zeta) else {
        return Ok(CramerReport {
            applicable: false,
            zeta,
            s_star: None,
            n_t,
            counted: 0,
            bound: 0.0,
            s1_exact,
            holds: false,
        });
    };
    let counted: u64 = if n_t == 0 {
        0
    } else {
        head.iter()
            .filter(|term| (term.weight * t).abs() >= s_star)
            .map(|term| term.count)
            .sum()
    };
    let bound = (1.0 / zeta).ln() * counted as f64;
    Ok(CramerReport {
        applicable: true,
        zeta,
        s_star: Some(s_star),
        n_t,
        counted,
        bound,
        s1_exact,
        holds: s1_exact >= bound * (1.0 - 1e-12),
    })
}

/// Slope of `ln ln|φ_S(t)|^{-1}` against `ln t` on a log grid.
pub fn decay_exponent_fit(
    dist: &AmplitudeDistribution,
    weights: &ShellWeights,
    t_lo: f64,
    t_hi: f64,
    points: usize,
) -> Result<(LineFit, Vec<f64>, Vec<f64>)> {
    let ts = log_space(t_lo, t_hi, points);
    let grid = shell_product(dist, weights, &ts);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, l) in ts.iter().zip(&grid.log_inv_modulus) {
        if l.is_finite() && *l > 0.0 {
            xs.push(t.ln());
            ys.push(l.ln());
        }
    }
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::Unsupported("too few finite points to fit".into()))?;
    Ok((fit, ts, grid.log_inv_modulus))
}
