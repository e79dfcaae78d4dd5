use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Law of the IID scatterer amplitudes `ω_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AmplitudeDistribution {
    /// `±1` with probability 1/2 each.
    BernoulliSym,
    /// `1` with probability `p`, else `0`.
    BernoulliP { p: f64 },
    /// Uniform on `[0, 1]`.
    Uniform01,
}

/// Moments used by the characteristic-function bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// `σ̄² = E ω²`.
    pub second: f64,
    /// `μ̄₃ = E|ω|³`.
    pub abs_third: f64,
    /// Centered variance `σ²`.
    pub variance: f64,
    /// Centered absolute third moment `m₃ = E|ω - Eω|³`.
    pub centered_abs_third: f64,
}

impl AmplitudeDistribution {
    pub fn bernoulli_p(p: f64) -> Result<Self> {
        let d = AmplitudeDistribution::BernoulliP { p };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if let AmplitudeDistribution::BernoulliP { p } = *self {
            if !(p > 0.0 && p <= 1.0) {
                return Err(invalid(format!("Bernoulli parameter must lie in (0, 1], got {p}")));
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            AmplitudeDistribution::BernoulliSym => (-1.0, 1.0),
            AmplitudeDistribution::BernoulliP { p } if *p >= 1.0 => (1.0, 1.0),
            AmplitudeDistribution::BernoulliP { .. } | AmplitudeDistribution::Uniform01 => (0.0, 1.0),
        }
    }

    pub fn sup_support(&self) -> f64 {
        self.support().1
    }

    pub fn inf_support(&self) -> f64 {
        self.support().0
    }

    pub fn is_nonnegative(&self) -> bool {
        self.inf_support() >= 0.0
    }

    pub fn moments(&self) -> Moments {
        match *self {
            AmplitudeDistribution::BernoulliSym => Moments {
                mean: 0.0,
                second: 1.0,
                abs_third: 1.0,
                variance: 1.0,
                centered_abs_third: 1.0,
            },
            AmplitudeDistribution::BernoulliP { p } => {
                let q = 1.0 - p;
                Moments {
                    mean: p,
                    second: p,
                    abs_third: p,
                    variance: p * q,
                    centered_abs_third: p * q * (p * p + q * q),
                }
            }
            AmplitudeDistribution::Uniform01 => Moments {
                mean: 0.5,
                second: 1.0 / 3.0,
                abs_third: 0.25,
                variance: 1.0 / 12.0,
                centered_abs_third: 1.0 / 32.0,
            },
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.moments().variance <= 0.0
    }

    /// `φ(t) = E e^{itω}`.
    pub fn char_fn(&self, t: f64) -> Complex64 {
        match *self {
            AmplitudeDistribution::BernoulliSym => Complex64::new(t.cos(), 0.0),
            AmplitudeDistribution::BernoulliP { p } => {
                Complex64::new(1.0 - p + p * t.cos(), p * t.sin())
            }
            AmplitudeDistribution::Uniform01 => {
                if t.abs() < 1e-4 {
                    // series of (e^{it} - 1)/(it)
                    let t2 = t * t;
                    Complex64::new(1.0 - t2 / 6.0 + t2 * t2 / 120.0, t / 2.0 - t * t2 / 24.0)
                } else {
                    Complex64::new(t.sin() / t, (1.0 - t.cos()) / t)
                }
            }
        }
    }

    /// `ln |φ(t)|^{-1}`, `+∞` where `φ` vanishes.
    pub fn log_inv_modulus(&self, t: f64) -> f64 {
        match *self {
            AmplitudeDistribution::BernoulliSym => -t.cos().abs().ln(),
            AmplitudeDistribution::BernoulliP { p } => {
                // |φ|² = 1 - 2p(1-p)(1 - cos t) = 1 - 4p(1-p) sin²(t/2)
                let s = (0.5 * t).sin();
                let m2 = 1.0 - 4.0 * p * (1.0 - p) * s * s;
                if m2 <= 0.0 {
                    f64::INFINITY
                } else {
                    -0.5 * m2.ln()
                }
            }
            AmplitudeDistribution::Uniform01 => {
                let h = 0.5 * t;
                if h.abs() < 1e-4 {
                    h * h / 6.0
                } else {
                    -(h.sin() / h).abs().ln()
                }
            }
        }
    }

    /// Certified quadratic regime `t₀ = min(σ²/m₃, (3/5)σ^{1/2})` on which
    /// `ln|φ(t)|^{-1} >= σ² t² / 4`.
    pub fn quadratic_regime(&self) -> Result<f64> {
        let m = self.moments();
        if m.variance <= 0.0 {
            return Err(Error::Degenerate);
        }
        let sigma = m.variance.sqrt();
        Ok((m.variance / m.centered_abs_third).min(0.6 * sigma.sqrt()))
    }

    /// Smallest `s*` with `sup_{|s| >= s*} |φ(s)| <= ζ`, when the law satisfies
    /// Cramér's condition at level `ζ`.
    pub fn cramer_threshold(&self, zeta: f64) -> Option<f64> {
        match self {
            // |φ(s)| = |sin(s/2)/(s/2)| <= 2/|s|
            AmplitudeDistribution::Uniform01 => Some(2.0 / zeta),
            AmplitudeDistribution::BernoulliSym | AmplitudeDistribution::BernoulliP { .. } => None,
        }
    }

    /// Finite atoms `(value, probability)` for discrete laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            AmplitudeDistribution::BernoulliSym => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            AmplitudeDistribution::BernoulliP { p } => Some(vec![(0.0, 1.0 - p), (1.0, p)]),
            AmplitudeDistribution::Uniform01 => None,
        }
    }

    /// `P{ω <= κ}`.
    pub fn cdf(&self, kappa: f64) -> f64 {
        match *self {
            AmplitudeDistribution::BernoulliSym => {
                if kappa < -1.0 {
                    0.0
                } else if kappa < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            AmplitudeDistribution::BernoulliP { p } => {
                if kappa < 0.0 {
                    0.0
                } else if kappa < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
            AmplitudeDistribution::Uniform01 => kappa.clamp(0.0, 1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AmplitudeDistribution::BernoulliSym => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            AmplitudeDistribution::BernoulliP { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            AmplitudeDistribution::Uniform01 => rng.random::<f64>(),
        }
    }
}

impl fmt::Display for AmplitudeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AmplitudeDistribution::BernoulliSym => write!(f, "bernoulli-sym"),
            AmplitudeDistribution::BernoulliP { p } => write!(f, "bernoulli-p:{p}"),
            AmplitudeDistribution::Uniform01 => write!(f, "uniform01"),
        }
    }
}

impl FromStr for AmplitudeDistribution {
    type Err = Error;

    /// `bernoulli-sym`, `bernoulli-p:<p>` (default `p = 0.5`) or `uniform01`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match name.replace('_', "-").as_str() {
            "bernoulli-sym" => Ok(AmplitudeDistribution::BernoulliSym),
            "bernoulli-p" => {
                let p = match arg {
                    Some(a) => a
                        .parse::<f64>()
                        .map_err(|_| invalid(format!("bad Bernoulli parameter '{a}'")))?,
                    None => 0.5,
                };
                AmplitudeDistribution::bernoulli_p(p)
            }
            "uniform01" | "uniform" => Ok(AmplitudeDistribution::Uniform01),
            _ => Err(invalid(format!("unknown distribution '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;
    use std::f64::consts::PI;

    const ALL: [AmplitudeDistribution; 3] = [
        AmplitudeDistribution::BernoulliSym,
        AmplitudeDistribution::BernoulliP { p: 0.3 },
        AmplitudeDistribution::Uniform01,
    ];

    #[test]
    fn closed_form_char_functions() {
        let z = AmplitudeDistribution::BernoulliSym.char_fn(PI);
        assert!((z.re + 1.0).abs() < 1e-15 && z.im.abs() < 1e-15);
        assert_eq!(AmplitudeDistribution::Uniform01.char_fn(0.0), Complex64::new(1.0, 0.0));
        let z = AmplitudeDistribution::BernoulliP { p: 0.5 }.char_fn(PI);
        assert!(z.norm() < 1e-15);
        assert_eq!(
            AmplitudeDistribution::BernoulliP { p: 0.5 }.log_inv_modulus(PI),
            f64::INFINITY
        );
    }

    #[test]
    fn char_function_matches_quadrature_for_uniform() {
        let d = AmplitudeDistribution::Uniform01;
        for &t in &[1e-6, 1e-3, 0.7, 3.0, 25.0] {
            let n = 20_000;
            let h = 1.0 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..n {
                let x = (k as f64 + 0.5) * h;
                re += (t * x).cos() * h;
                im += (t * x).sin() * h;
            }
            let z = d.char_fn(t);
            assert!((z.re - re).abs() < 1e-7 && (z.im - im).abs() < 1e-7, "t={t}");
            assert!((d.log_inv_modulus(t) + z.norm().ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn log_modulus_agrees_with_char_fn() {
        for d in ALL {
            for k in 0..200 {
                let t = -20.0 + 0.2 * k as f64 + 0.013;
                let want = -d.char_fn(t).norm().ln();
                assert!((d.log_inv_modulus(t) - want).abs() < 1e-9, "{d} t={t}");
            }
        }
    }

    #[test]
    fn moments_by_enumeration_and_quadrature() {
        for d in ALL {
            let m = d.moments();
            assert!(m.second > 0.0 && m.second <= 1.0);
            assert!(m.abs_third > 0.0 && m.abs_third <= 1.0);
            assert!(m.variance.powi(3) <= m.centered_abs_third.powi(2) + 1e-15);
            let (lo, hi) = d.support();
            assert!(lo >= -1.0 && hi <= 1.0);
            match d.atoms() {
                Some(atoms) => {
                    let mean: f64 = atoms.iter().map(|(x, p)| x * p).sum();
                    let var: f64 = atoms.iter().map(|(x, p)| (x - mean).powi(2) * p).sum();
                    let c3: f64 = atoms.iter().map(|(x, p)| (x - mean).abs().powi(3) * p).sum();
                    assert!((mean - m.mean).abs() < 1e-15);
                    assert!((var - m.variance).abs() < 1e-15);
                    assert!((c3 - m.centered_abs_third).abs() < 1e-15);
                }
                None => {
                    let n = 100_000;
                    let h = 1.0 / n as f64;
                    let c3: f64 = (0..n).map(|k| ((k as f64 + 0.5) * h - 0.5).abs().powi(3) * h).sum();
                    assert!((c3 - m.centered_abs_third).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn uniform_sample_mean() {
        let mut rng = StreamId::new(1, "mean", 0).rng();
        let d = AmplitudeDistribution::Uniform01;
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn parse_roundtrip() {
        for d in ALL {
            let back: AmplitudeDistribution = d.to_string().parse().unwrap();
            assert_eq!(back, d);
        }
        assert!("bernoulli-p:1.5".parse::<AmplitudeDistribution>().is_err());
        assert!("gauss".parse::<AmplitudeDistribution>().is_err());
    }

    #[test]
    fn quadratic_regime_values() {
        assert!((AmplitudeDistribution::BernoulliSym.quadratic_regime().unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(
            AmplitudeDistribution::BernoulliP { p: 1.0 }.quadratic_regime(),
            Err(Error::Degenerate)
        ));
    }
}
