use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::integrate_capped;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyaSzego {
    pub c: f64,
    pub ups: f64,
    pub lambda: f64,
    pub t_values: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: f64,
    pub rhs_error: f64,
    /// `|lhs(t_max) - rhs|`.
    pub gap: f64,
}

/// `N_t^{-1} Σ_{r_n <= ct} f(r_n/t)` with `r_n = ⌊n^υ⌋`, `N_t = #{n >= 1: r_n <= t}`.
pub fn polya_szego_lhs<F: Fn(f64) -> f64>(f: &F, c: f64, ups: f64, t: f64) -> f64 {
    let r = |n: u64| -> f64 {
        if ups == 1.0 {
            n as f64
        } else {
            (n as f64).powf(ups).floor()
        }
    };
    let mut count = 0u64;
    let mut sum = 0.0;
    let mut n = 1u64;
    loop {
        let rn = r(n);
        if rn > c.max(1.0) * t {
            break;
        }
        if rn <= t {
            count += 1;
        }
        if rn <= c * t {
            sum += f(rn / t);
        }
        n += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Compares the normalized sums with `∫_0^{c^λ} f(s^{1/λ}) ds`, `λ = 1/υ`.
///
/// The integral is taken over `[δ, c^λ]` adaptively; on `[0, δ]` the mean of the
/// integrand over `[δ, 2δ]` stands in, `δ = 10^{-6} c^λ`. Integrands that
/// oscillate too fast near 0 stop at the segment cap, and the remaining
/// quadrature error is carried in `rhs_error`.
pub fn polya_szego_limit<F: Fn(f64) -> f64 + Sync>(
    f: F,
    c: f64,
    ups: f64,
    t_values: &[f64],
) -> Result<PolyaSzego> {
    if !(c > 0.0) || !(ups >= 1.0) {
        return Err(invalid("need c > 0 and υ >= 1"));
    }
    let lambda = 1.0 / ups;
    for k in 1..=64 {
        let x = c * k as f64 / 64.0;
        if !f(x).is_finite() {
            return Err(invalid(format!("f is not finite at {x}")));
        }
    }
    let g = |s: f64| f(s.powf(1.0 / lambda));
    let top = c.powf(lambda);
    let delta = 1e-6 * top;
    let main = integrate_capped(&g, delta, top, 1e-9, 1e-10, 1_000_000)?;
    let near = integrate_capped(&g, delta, 2.0 * delta, 1e-15, 1e-8, 100_000)?;
    let rhs = main.value + near.value;
    let lhs: Vec<f64> = t_values.iter().map(|&t| polya_szego_lhs(&f, c, ups, t)).collect();
    let gap = lhs.last().map(|l| (l - rhs).abs()).unwrap_or(f64::NAN);
    Ok(PolyaSzego {
        c,
        ups,
        lambda,
        t_values: t_values.to_vec(),
        lhs,
        rhs,
        rhs_error: main.error + near.error + near.value.abs(),
        gap,
    })
}

/// `ln max[cos(1/s), 1/2]`.
pub fn wintner_f(s: f64) -> f64 {
    (1.0 / s).cos().max(0.5).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_linear() {
        let r = polya_szego_limit(|_| 1.0, 1.0, 1.0, &[10.0, 1e3]).unwrap();
        assert!(r.lhs.iter().all(|&l| l == 1.0));
        assert!((r.rhs - 1.0).abs() < 1e-9);
        let r = polya_szego_limit(|s| s, 1.0, 1.0, &[1e4]).unwrap();
        assert!((r.rhs - 0.5).abs() < 1e-9);
        assert!(r.gap < 1e-3);
    }

    #[test]
    fn sparse_sequence_uses_lambda() {
        // r_n = ⌊n²⌋, λ = 1/2: ∫_0^{1} (s²) ds = 1/3 for f(s) = s
        let r = polya_szego_limit(|s| s, 1.0, 2.0, &[1e6]).unwrap();
        assert!((r.rhs - 1.0 / 3.0).abs() < 1e-8);
        assert!(r.gap < 2e-3);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(polya_szego_limit(|s: f64| 1.0 / (s - 0.5), 1.0, 1.0, &[10.0]).is_err());
    }
}
