use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::ball_count;

/// Shape of the single-scatterer profile `u(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// Constant `r_k^{-A}` on `[r_k, r_{k+1})` with `r_k = ⌊k^υ⌋`.
    PiecewiseConstant { ups: f64 },
    /// `max(r, 1)^{-A}`.
    SmoothPower,
}

/// Screened interaction `u(r)` with decay exponent `A`.
///
/// Below the first plateau start `r_1 = 1` the first plateau is extended to
/// the origin, so `u(0) = 1` and the self-term of the cumulative potential is
/// well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionPotential {
    pub kind: PotentialKind,
    pub exponent: f64,
    /// Truncation radius of lattice sums; `None` picks one from the tail bound.
    #[serde(default)]
    pub truncation: Option<u64>,
}

/// Default target for the truncated tail mass.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;
/// Hard cap on automatically chosen truncation radii.
pub const MAX_AUTO_TRUNCATION: u64 = 10_000_000;

impl InteractionPotential {
    pub fn piecewise(exponent: f64, ups: f64) -> Result<Self> {
        if !(ups >= 1.0) || !ups.is_finite() {
            return Err(invalid(format!("plateau growth exponent must be >= 1, got {ups}")));
        }
        Self::checked(PotentialKind::PiecewiseConstant { ups }, exponent)
    }

    pub fn smooth(exponent: f64) -> Result<Self> {
        Self::checked(PotentialKind::SmoothPower, exponent)
    }

    fn checked(kind: PotentialKind, exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(invalid(format!("decay exponent must be positive, got {exponent}")));
        }
        Ok(InteractionPotential {
            kind,
            exponent,
            truncation: None,
        })
    }

    pub fn with_truncation(mut self, r_max: u64) -> Self {
        self.truncation = Some(r_max);
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if let PotentialKind::PiecewiseConstant { ups } = self.kind {
            if !(ups >= 1.0) {
                return Err(invalid(format!("plateau growth exponent must be >= 1, got {ups}")));
            }
        }
        if !(self.exponent > d as f64) {
            return Err(invalid(format!(
                "decay exponent A = {} must exceed the dimension d = {d}",
                self.exponent
            )));
        }
        if self.truncation == Some(0) {
            return Err(invalid("truncation radius must be at least 1"));
        }
        Ok(())
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self.kind, PotentialKind::PiecewiseConstant { .. })
    }

    /// `r_k = ⌊k^υ⌋`; for the smooth kind every integer starts a "plateau".
    pub fn plateau_start(&self, k: u64) -> u64 {
        match self.kind {
            PotentialKind::PiecewiseConstant { ups } => floor_pow(k, ups),
            PotentialKind::SmoothPower => k,
        }
    }

    /// Largest `k` with `r_k <= r` (0 for `r = 0`).
    pub fn plateau_index(&self, r: u64) -> u64 {
        let ups = match self.kind {
            PotentialKind::PiecewiseConstant { ups } => ups,
            PotentialKind::SmoothPower => return r,
        };
        if r == 0 {
            return 0;
        }
        let mut k = ((r as f64).powf(1.0 / ups).floor() as u64).max(1);
        while self.plateau_start(k) > r {
            k -= 1;
        }
        while self.plateau_start(k + 1) <= r {
            k += 1;
        }
        k
    }

    /// Half-open plateau `[r_k, r_{k+1})` containing the integer distance `r`.
    pub fn plateau_of(&self, r: u64) -> (u64, u64, u64) {
        let k = self.plateau_index(r.max(1));
        (k, self.plateau_start(k), self.plateau_start(k + 1))
    }

    /// `u` at an integer distance.
    pub fn value_at(&self, r: u64) -> f64 {
        let a = self.exponent;
        match self.kind {
            PotentialKind::PiecewiseConstant { .. } => {
                let k = self.plateau_index(r.max(1));
                (self.plateau_start(k) as f64).powf(-a)
            }
            PotentialKind::SmoothPower => (r.max(1) as f64).powf(-a),
        }
    }

    /// `u(r)` for real `r >= 0`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(invalid(format!("distance must be nonnegative, got {r}")));
        }
        Ok(match self.kind {
            PotentialKind::PiecewiseConstant { .. } => self.value_at(r.floor() as u64),
            PotentialKind::SmoothPower => r.max(1.0).powf(-self.exponent),
        })
    }

    /// Outer radius of shell `n` (`r_n`, with `r_0 = 0`).
    pub fn shell_radius(&self, n: u64) -> u64 {
        self.plateau_start(n)
    }

    /// `𝔞_n = u(r_n)`; `𝔞_0 = u(0)`.
    pub fn shell_weight(&self, n: u64) -> f64 {
        self.value_at(self.shell_radius(n))
    }

    /// `sup_{s > r} s^A u(s)` over integer `s`, used by the analytic tail bound.
    fn tail_profile_constant(&self, r: u64) -> f64 {
        match self.kind {
            PotentialKind::SmoothPower => 1.0,
            PotentialKind::PiecewiseConstant { .. } => {
                let k0 = self.plateau_index(r + 1);
                (k0..k0 + 256)
                    .map(|k| {
                        let lo = self.plateau_start(k).max(r + 1) as f64;
                        let hi = (self.plateau_start(k + 1) - 1) as f64;
                        let start = self.plateau_start(k) as f64;
                        (hi.max(lo) / start).powf(self.exponent)
                    })
                    .fold(1.0, f64::max)
            }
        }
    }

    /// Analytic upper bound on `Σ_{|y| > r} u(|y|)` in dimension `d`.
    pub fn tail_bound(&self, r: u64, d: usize) -> f64 {
        let a = self.exponent;
        let dd = d as f64;
        let r = r.max(1) as f64;
        2.0 * dd * 3f64.powi(d as i32 - 1) * self.tail_profile_constant(r as u64) * r.powf(dd - a)
            / (a - dd)
    }

    /// `Σ_{r < |y| <= r2} u(|y|)` summed plateau by plateau.
    fn block_sum(&self, r: u64, r2: u64, d: usize) -> f64 {
        let mut total = 0.0;
        let mut lo = r + 1;
        while lo <= r2 {
            let (_, start, next) = self.plateau_of(lo);
            let hi = (next - 1).min(r2);
            let count = big_ball_count(hi, d) - big_ball_count(lo - 1, d);
            total += count as f64 * (start as f64).powf(-self.exponent);
            lo = hi + 1;
        }
        total
    }

    /// Tail mass `Σ_{|y| > r} u(|y|)`: exact out to a multiple of `r`, then the
    /// analytic bound.
    pub fn tail_sum(&self, r: u64, d: usize) -> f64 {
        let r2 = (4 * r).max(r + 64).min(r + 2_000_000);
        self.block_sum(r, r2, d) + self.tail_bound(r2, d)
    }

    /// `Σ_{|y| <= r} u(|y|)`, origin included.
    pub fn ball_sum(&self, r: u64, d: usize) -> f64 {
        self.value_at(0) + self.block_sum(0, r, d)
    }

    /// Truncation radius in dimension `d`: the explicit one, or the smallest
    /// radius whose tail bound is below [`DEFAULT_TAIL_TOLERANCE`] (capped).
    pub fn truncation_for(&self, d: usize) -> u64 {
        if let Some(r) = self.truncation {
            return r;
        }
        let a = self.exponent;
        let dd = d as f64;
        let mut r = 1u64;
        for _ in 0..4 {
            let c = self.tail_profile_constant(r);
            let need = (2.0 * dd * 3f64.powi(d as i32 - 1) * c / ((a - dd) * DEFAULT_TAIL_TOLERANCE))
                .powf(1.0 / (a - dd));
            r = (need.ceil() as u64).clamp(1, MAX_AUTO_TRUNCATION);
        }
        while r < MAX_AUTO_TRUNCATION && self.tail_bound(r, d) >= DEFAULT_TAIL_TOLERANCE {
            r = (r + r / 8 + 1).min(MAX_AUTO_TRUNCATION);
        }
        r
    }
}

/// `⌊k^υ⌋`, robust to `powf` rounding just below an integer.
fn floor_pow(k: u64, ups: f64) -> u64 {
    if k == 0 {
        return 0;
    }
    if ups == 1.0 {
        return k;
    }
    let x = (k as f64).powf(ups);
    let f = x.floor();
    if f + 1.0 - x < 1e-9 * x.max(1.0) {
        f as u64 + 1
    } else {
        f as u64
    }
}

fn big_ball_count(r: u64, d: usize) -> u128 {
    if d <= 2 && r < 1_000_000 {
        return ball_count(r, d) as u128;
    }
    (2 * r as u128 + 1).pow(d as u32)
}
