use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Form of the comparison product `Ψ_n(t) = Π_k ψ_k(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiForm {
    /// `ψ_k = 1 - σ_k² t² / B_n`.
    Literal,
    /// `ψ_k = 1 - σ_k² t² / (2 B_n)`.
    SecondOrder,
}

/// Stationary `±1` chain that flips sign with probability `flip` at each step;
/// `flip = 1/2` gives independent symmetric signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignChain {
    pub n: usize,
    pub flip: f64,
}

impl SignChain {
    pub fn new(n: usize, flip: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("chain length must be positive"));
        }
        if !(flip > 0.0 && flip < 1.0) {
            return Err(invalid(format!("flip probability must lie in (0, 1), got {flip}")));
        }
        Ok(SignChain { n, flip })
    }

    /// One-step correlation `ρ = 1 - 2q`.
    pub fn rho(&self) -> f64 {
        1.0 - 2.0 * self.flip
    }

    /// `B_n = Var S_n = n + 2 Σ_{k<l} ρ^{l-k}`.
    pub fn variance(&self) -> f64 {
        let rho = self.rho();
        let n = self.n;
        let mut b = n as f64;
        let mut p = 1.0;
        for j in 1..n {
            p *= rho;
            b += 2.0 * (n - j) as f64 * p;
        }
        b
    }

    /// `E e^{isS_n}` by the transfer product.
    pub fn char_fn_transfer(&self, s: f64) -> Complex64 {
        let (q, stay) = (self.flip, 1.0 - self.flip);
        let up = Complex64::from_polar(1.0, s);
        let down = Complex64::from_polar(1.0, -s);
        let mut minus = 0.5 * down;
        let mut plus = 0.5 * up;
        for _ in 1..self.n {
            let m = (minus * stay + plus * q) * down;
            let p = (plus * stay + minus * q) * up;
            minus = m;
            plus = p;
        }
        minus + plus
    }

    /// `E e^{isS_n}` by summing over all `2^n` paths.
    pub fn char_fn_enumerated(&self, s: f64) -> Result<Complex64> {
        if self.n > 20 {
            return Err(Error::Unsupported(format!(
                "enumeration limited to n <= 20, got {}",
                self.n
            )));
        }
        let mut total = Complex64::new(0.0, 0.0);
        for mask in 0u32..(1u32 << self.n) {
            let mut prob = 0.5;
            let mut sum = 0i64;
            let mut prev = 0i64;
            for k in 0..self.n {
                let x = if mask >> k & 1 == 1 { 1 } else { -1 };
                if k > 0 {
                    prob *= if x == prev { 1.0 - self.flip } else { self.flip };
                }
                sum += x;
                prev = x;
            }
            total += prob * Complex64::from_polar(1.0, s * sum as f64);
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub chain: SignChain,
    pub form: PsiForm,
    pub t_max: f64,
    pub b_n: f64,
    pub t_values: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub psi: Vec<f64>,
    pub sup_gap: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub c: Vec<f64>,
    /// Smallest constant with `max_x |E[e^{isX_k} | X_{k-1} = x] - ψ_k| <= C_T w_k`.
    pub c_t: f64,
    pub eta: Vec<f64>,
    pub eta_sum: f64,
    pub holds: bool,
}

/// `φ_n(t) = E e^{itS_n/√B_n}` against `Ψ_n(t)` on `|t| <= T`.
pub fn bernstein_approximation(
    chain: SignChain,
    t_max: f64,
    points: usize,
    form: PsiForm,
    enumerate: bool,
) -> Result<BernsteinReport> {
    if !(t_max > 0.0) || points < 2 {
        return Err(invalid("need T > 0 and at least two grid points"));
    }
    let b = chain.variance();
    let half = match form {
        PsiForm::Literal => 1.0,
        PsiForm::SecondOrder => 0.5,
    };
    if half * t_max * t_max > 2.0 * b {
        return Err(invalid(format!(
            "T = {t_max} too large for |ψ_k| <= 1 with B_n = {b}"
        )));
    }
    let rho = chain.rho();
    let n = chain.n;
    let alpha: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { rho.abs() }).collect();
    let beta = vec![0.0; n];
    let c = vec![1.0; n];
    let weight = |k: usize| alpha[k] / b.sqrt() + beta[k] / b + c[k] / b.powf(1.5);

    let t_values: Vec<f64> = (0..points)
        .map(|i| -t_max + 2.0 * t_max * i as f64 / (points - 1) as f64)
        .collect();
    let mut phi = Vec::with_capacity(points);
    let mut psi = Vec::with_capacity(points);
    let mut sup_gap: f64 = 0.0;
    let mut c_t: f64 = 0.0;
    for &t in &t_values {
        let s = t / b.sqrt();
        let p = if enumerate {
            chain.char_fn_enumerated(s)?
        } else {
            chain.char_fn_transfer(s)
        };
        let single = 1.0 - half * t * t / b;
        let big_psi = single.powi(n as i32);
        sup_gap = sup_gap.max((p - big_psi).norm());
        phi.push(p);
        psi.push(big_psi);
        let first = (s.cos() - single).abs();
        let later = ((s.cos() - single).powi(2) + (rho * s.sin()).powi(2)).sqrt();
        c_t = c_t.max(first / weight(0));
        if n > 1 {
            c_t = c_t.max(later / weight(1));
        }
    }
    let eta: Vec<f64> = (0..n).map(|k| c_t * weight(k)).collect();
    let eta_sum: f64 = eta.iter().sum();
    Ok(BernsteinReport {
        chain,
        form,
        t_max,
        b_n: b,
        t_values,
        phi,
        psi,
        sup_gap,
        alpha,
        beta,
        c,
        c_t,
        eta,
        eta_sum,
        holds: sup_gap <= eta_sum * (1.0 + 1e-12) + 1e-15,
    })
}
