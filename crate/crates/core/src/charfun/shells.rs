use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::ball_count;
use crate::model::{AmplitudeDistribution, InteractionPotential};

/// One group of `K` sites sharing the weight `𝔞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellTerm {
    pub index: u64,
    pub count: u64,
    pub weight: f64,
}

/// Moments `Σ K_n 𝔞_n^j` (`j = 1, 2, 3`) of the shells beyond the explicit ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellTail {
    pub first_weight: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// `(r_{n-1}, r_n]` with weight `r_n^{-A}`.
    Shells,
    /// `[r_n, r_{n+1})` with the exact weight `u(r_n)`.
    Plateaus,
}

/// Weights of `S_{M,N} = Σ_{n=M}^{N} 𝔞_n X_n`, `X_n` a sum of `K_n` IID amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellWeights {
    pub potential: InteractionPotential,
    pub dim: usize,
    pub grouping: Grouping,
    pub m: u64,
    pub n: u64,
    pub terms: Vec<ShellTerm>,
    /// Present when the weights stand for the infinite sum truncated after `N`.
    pub tail: Option<ShellTail>,
}

impl ShellWeights {
    /// Shells `𝒳_n = {0 < |x| ... r_{n-1} < |x| <= r_n}` with `𝔞_n = r_n^{-A}`;
    /// `n = 0` is the origin with `𝔞_0 = u(0)`.
    pub fn shells(pot: &InteractionPotential, d: usize, m: u64, n: u64) -> Result<Self> {
        pot.validate(d)?;
        if m > n {
            return Err(invalid(format!("shell range M={m} exceeds N={n}")));
        }
        let terms = (m..=n)
            .map(|k| {
                let count = if k == 0 {
                    1
                } else {
                    ball_count(pot.shell_radius(k), d) - ball_count(pot.shell_radius(k - 1), d)
                };
                ShellTerm {
                    index: k,
                    count,
                    weight: pot.shell_weight(k),
                }
            })
            .collect();
        Ok(ShellWeights {
            potential: pot.clone(),
            dim: d,
            grouping: Grouping::Shells,
            m,
            n,
            terms,
            tail: None,
        })
    }

    /// Sites grouped by plateau `[r_k, r_{k+1})` with the true weight `u(r_k)`,
    /// so `Σ_n 𝔞_n X_n` reproduces `V(0)` over `|y| <= r_{N+1} - 1`. Plateau 0
    /// is the origin.
    pub fn plateaus(pot: &InteractionPotential, d: usize, m: u64, n: u64) -> Result<Self> {
        pot.validate(d)?;
        if m > n {
            return Err(invalid(format!("plateau range M={m} exceeds N={n}")));
        }
        let terms = (m..=n)
            .map(|k| {
                let count = if k == 0 {
                    1
                } else {
                    let lo = pot.plateau_start(k);
                    let hi = pot.plateau_start(k + 1) - 1;
                    ball_count(hi, d) - ball_count(lo - 1, d)
                };
                ShellTerm {
                    index: k,
                    count,
                    weight: pot.shell_weight(k),
                }
            })
            .collect();
        Ok(ShellWeights {
            potential: pot.clone(),
            dim: d,
            grouping: Grouping::Plateaus,
            m,
            n,
            terms,
            tail: None,
        })
    }

    /// Attaches bounds on the shells beyond `N`, read as part of an infinite sum.
    pub fn with_tail(mut self) -> Self {
        let r = self.outer_radius();
        let moment = |j: f64| {
            let mut p = self.potential.clone();
            p.exponent *= j;
            p.tail_sum(r, self.dim)
        };
        self.tail = Some(ShellTail {
            first_weight: self.potential.value_at(r + 1),
            m1: moment(1.0),
            m2: moment(2.0),
            m3: moment(3.0),
        });
        self
    }

    /// Largest `|x|` covered by the explicit terms.
    pub fn outer_radius(&self) -> u64 {
        match self.grouping {
            Grouping::Shells => self.potential.shell_radius(self.n),
            Grouping::Plateaus => self.potential.plateau_start(self.n + 1) - 1,
        }
    }

    /// `𝔞_n` for any `n`, inside the explicit range or not.
    pub fn weight_of(&self, n: u64) -> f64 {
        self.potential.shell_weight(n)
    }

    pub fn site_count(&self) -> u64 {
        self.terms.iter().map(|t| t.count).sum()
    }

    /// `N_t = min{n >= 0 : 𝔞_n |t| <= t₀}`.
    pub fn n_t(&self, t: f64, t0: f64) -> u64 {
        let t = t.abs();
        if self.weight_of(0) * t <= t0 {
            return 0;
        }
        let mut hi = 1u64;
        while self.weight_of(hi) * t > t0 {
            hi *= 2;
            if hi > 1 << 40 {
                return u64::MAX;
            }
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.weight_of(mid) * t > t0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// `T_N = t₀ / 𝔞_N`.
    pub fn t_big(&self, t0: f64) -> f64 {
        t0 / self.weight_of(self.n)
    }
}

/// `φ_S` on a grid of `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFunGrid {
    pub t_values: Vec<f64>,
    pub values: Vec<Complex64>,
    /// `ln |φ_S(t)|^{-1}`, possibly `+∞`.
    pub log_inv_modulus: Vec<f64>,
    /// Bound on `|φ_S - φ_explicit|` from the dropped shells.
    pub truncation_bound: Vec<f64>,
    /// Bound on the dropped part of the log-sum (`+∞` when uncertified).
    pub log_tail_bound: Vec<f64>,
}

/// `Σ_n K_n ln|φ_X(𝔞_n t)|^{-1}` over the explicit terms.
pub fn log_sum(dist: &AmplitudeDistribution, terms: &[ShellTerm], t: f64) -> f64 {
    let mut acc = 0.0;
    for term in terms {
        let l = dist.log_inv_modulus(term.weight * t);
        if l == f64::INFINITY {
            return f64::INFINITY;
        }
        acc += term.count as f64 * l;
    }
    acc
}

fn product_at(dist: &AmplitudeDistribution, w: &ShellWeights, t: f64) -> (Complex64, f64, f64, f64) {
    let mut log = 0.0;
    let mut phase = 0.0;
    for term in &w.terms {
        let s = term.weight * t;
        let l = dist.log_inv_modulus(s);
        if l == f64::INFINITY {
            log = f64::INFINITY;
            break;
        }
        log += term.count as f64 * l;
        phase += term.count as f64 * dist.char_fn(s).arg();
    }
    let value = if log == f64::INFINITY {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar((-log).exp(), phase.rem_euclid(std::f64::consts::TAU))
    };
    let (trunc, log_tail) = match w.tail {
        None => (0.0, 0.0),
        Some(tail) => {
            let m = dist.moments();
            let at = t.abs();
            let trunc = m.mean.abs() * at * tail.m1 + 0.5 * m.second * at * at * tail.m2;
            let s1 = tail.first_weight * at;
            let x_max = 0.5 * m.variance * s1 * s1 + m.centered_abs_third * s1.powi(3) / 6.0;
            let log_tail = if x_max <= 0.5 {
                (1.0 + x_max)
                    * (0.5 * m.variance * at * at * tail.m2
                        + m.centered_abs_third * at.powi(3) / 6.0 * tail.m3)
            } else {
                f64::INFINITY
            };
            (trunc, log_tail)
        }
    };
    (value, log, trunc, log_tail)
}

/// `φ_S(t) = Π_n φ_X(𝔞_n t)^{K_n}`, accumulated in the log domain.
pub fn shell_product(dist: &AmplitudeDistribution, weights: &ShellWeights, grid: &[f64]) -> CharFunGrid {
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&t| product_at(dist, weights, t))
        .collect();
    let mut out = CharFunGrid {
        t_values: grid.to_vec(),
        values: Vec::with_capacity(grid.len()),
        log_inv_modulus: Vec::with_capacity(grid.len()),
        truncation_bound: Vec::with_capacity(grid.len()),
        log_tail_bound: Vec::with_capacity(grid.len()),
    };
    for (v, l, tr, lt) in rows {
        out.values.push(v);
        out.log_inv_modulus.push(l);
        out.truncation_bound.push(tr);
        out.log_tail_bound.push(lt);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pot2() -> InteractionPotential {
        InteractionPotential::piecewise(2.0, 1.0).unwrap()
    }

    #[test]
    fn single_shell_is_cos_squared() {
        let w = ShellWeights::shells(&pot2(), 1, 1, 1).unwrap();
        assert_eq!(w.terms, vec![ShellTerm { index: 1, count: 2, weight: 1.0 }]);
        let g = shell_product(&AmplitudeDistribution::BernoulliSym, &w, &[0.0, 0.3, 2.0]);
        assert_eq!(g.values[0], Complex64::new(1.0, 0.0));
        for (t, v) in g.t_values.iter().zip(&g.values) {
            assert!((v.re - t.cos().powi(2)).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn three_shells_direct_product() {
        let w = ShellWeights::shells(&pot2(), 1, 1, 3).unwrap();
        let g = shell_product(&AmplitudeDistribution::BernoulliSym, &w, &[1.0]);
        let want = (1f64.cos() * 0.25f64.cos() * (1.0f64 / 9.0).cos()).powi(2);
        assert!((g.values[0].re - want).abs() < 1e-14);
    }

    #[test]
    fn log_sum_is_additive_and_modulus_monotone() {
        let pot = InteractionPotential::piecewise(2.5, 1.5).unwrap();
        for dist in [
            AmplitudeDistribution::BernoulliP { p: 0.3 },
            AmplitudeDistribution::Uniform01,
        ] {
            let grid: Vec<f64> = (0..50).map(|i| -7.0 + 0.29 * i as f64).collect();
            let mut prev = vec![0.0; grid.len()];
            for n in 1..8 {
                let w = ShellWeights::shells(&pot, 2, 1, n).unwrap();
                let g = shell_product(&dist, &w, &grid);
                for (i, t) in grid.iter().enumerate() {
                    let manual: f64 = w
                        .terms
                        .iter()
                        .map(|term| term.count as f64 * dist.log_inv_modulus(term.weight * t))
                        .sum();
                    assert!((g.log_inv_modulus[i] - manual).abs() <= 1e-10 * manual.max(1.0));
                    assert!(g.log_inv_modulus[i] >= prev[i] - 1e-15);
                    assert!(g.values[i].norm() <= 1.0 + 1e-12);
                    prev[i] = g.log_inv_modulus[i];
                }
            }
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let pot = InteractionPotential::piecewise(3.0, 1.0).unwrap();
        let w = ShellWeights::shells(&pot, 2, 1, 4).unwrap();
        let dist = AmplitudeDistribution::Uniform01;
        let g = shell_product(&dist, &w, &[-1.7, 1.7]);
        assert!((g.values[0] - g.values[1].conj()).norm() < 1e-12);
    }

    #[test]
    fn plateau_grouping_counts() {
        let pot = InteractionPotential::piecewise(3.0, 2.0).unwrap();
        let w = ShellWeights::plateaus(&pot, 1, 0, 3).unwrap();
        // plateaus [0,1) ∪ {0}, [1,4), [4,9), [9,16)
        let counts: Vec<u64> = w.terms.iter().map(|t| t.count).collect();
        assert_eq!(counts, vec![1, 6, 10, 14]);
        assert_eq!(w.outer_radius(), 15);
        let s = ShellWeights::shells(&pot, 1, 1, 3).unwrap();
        assert_eq!(s.terms[2].count, 10);
        assert_eq!(s.outer_radius(), 9);
    }

    #[test]
    fn truncation_bound_covers_dropped_shells() {
        let pot = pot2();
        let dist = AmplitudeDistribution::BernoulliSym;
        let big = ShellWeights::shells(&pot, 1, 1, 4000).unwrap();
        let small = ShellWeights::shells(&pot, 1, 1, 40).unwrap().with_tail();
        for t in [0.5, 3.0, 20.0] {
            let a = shell_product(&dist, &big, &[t]);
            let b = shell_product(&dist, &small, &[t]);
            assert!((a.values[0] - b.values[0]).norm() <= b.truncation_bound[0]);
            let dropped = a.log_inv_modulus[0] - b.log_inv_modulus[0];
            assert!(dropped >= 0.0 && dropped <= b.log_tail_bound[0]);
        }
    }

    #[test]
    fn n_t_examples() {
        let w = ShellWeights::shells(&pot2(), 1, 1, 100).unwrap();
        assert_eq!(w.n_t(100.0, 0.5), 15);
        assert_eq!(w.n_t(0.4, 0.5), 0);
        assert!((w.t_big(0.5) - 0.5 * 1e4).abs() < 1e-9);
    }
}
