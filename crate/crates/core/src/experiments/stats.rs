use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Binomial proportion with a two-sided Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub method: CiMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Wilson,
}

impl Proportion {
    pub fn wilson(successes: u64, trials: u64, confidence: f64) -> Self {
        assert!(successes <= trials && trials > 0, "invalid binomial counts");
        assert!(confidence > 0.0 && confidence < 1.0);
        let z = Normal::standard().inverse_cdf(0.5 + 0.5 * confidence);
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Proportion {
            successes,
            trials,
            estimate: p,
            lower: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
            upper: if successes == trials { 1.0 } else { (center + half).min(1.0) },
            confidence,
            method: CiMethod::Wilson,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // closed form with z = 1.959964 for 0/10 and 5/10
        let zero = Proportion::wilson(0, 10, 0.95);
        assert_eq!(zero.lower, 0.0);
        let z2: f64 = 1.959963984540054f64.powi(2);
        assert!((zero.upper - z2 / (10.0 + z2)).abs() < 1e-12);
        let half = Proportion::wilson(5, 10, 0.95);
        assert!((half.lower + half.upper - 1.0).abs() < 1e-12);
        assert!((half.upper - 0.7634069).abs() < 1e-6);
    }

    #[test]
    fn wider_at_higher_confidence() {
        let a = Proportion::wilson(30, 200, 0.95);
        let b = Proportion::wilson(30, 200, 0.99);
        assert!(b.lower < a.lower && b.upper > a.upper);
        assert!(a.contains(0.15));
    }
}
