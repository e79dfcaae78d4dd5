use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{distance, Ball, Site};
use crate::model::{Background, FieldSample, InteractionPotential};

/// Truncated `V(x) = Σ_{|y-x| <= r_max} u(|y-x|) ω_y` at a list of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativePotential {
    pub targets: Vec<Site>,
    pub values: Vec<f64>,
    pub r_max: u64,
    /// Bound on the dropped part `Σ_{|y-x| > r_max}` for amplitudes bounded as in the field.
    pub tail_error: f64,
}

impl CumulativePotential {
    pub fn get(&self, x: &Site) -> Option<f64> {
        self.targets.iter().position(|t| t == x).map(|i| self.values[i])
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Linear map `ω ↦ V` for a fixed domain and fixed targets.
///
/// `V_i = Σ_j w_ij ω_j + b · c_i`, where `b` is the background value and `c_i`
/// the interaction mass of the part of `B_{r_max}(x_i)` outside the domain.
#[derive(Debug, Clone)]
pub struct InfluenceMap {
    pub domain: Ball,
    pub targets: Vec<Site>,
    pub r_max: u64,
    /// Row-major `targets × domain`.
    pub weights: Vec<f64>,
    pub outside_mass: Vec<f64>,
    /// Whether `B_{r_max}(x_i)` sticks out of the domain.
    pub needs_background: Vec<bool>,
    tail: f64,
}

impl InfluenceMap {
    pub fn new(pot: &InteractionPotential, domain: &Ball, targets: &[Site], r_max: u64) -> Result<Self> {
        let d = domain.dim();
        pot.validate(d)?;
        if r_max < 1 {
            return Err(invalid("truncation radius must be at least 1"));
        }
        for x in targets {
            if x.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.dim(),
                });
            }
        }
        let sites = domain.sites();
        let full = pot.ball_sum(r_max, d);
        let n = sites.len();
        let mut weights = vec![0.0; targets.len() * n];
        let mut outside_mass = Vec::with_capacity(targets.len());
        let mut needs_background = Vec::with_capacity(targets.len());
        for (i, x) in targets.iter().enumerate() {
            let row = &mut weights[i * n..(i + 1) * n];
            let mut inside = 0.0;
            for (j, y) in sites.iter().enumerate() {
                let r = distance(x, y);
                if r <= r_max {
                    let w = pot.value_at(r);
                    row[j] = w;
                    inside += w;
                }
            }
            let covered = Ball {
                center: x.clone(),
                radius: r_max,
            };
            let sticks_out = !covers(domain, &covered);
            needs_background.push(sticks_out);
            outside_mass.push(if sticks_out { (full - inside).max(0.0) } else { 0.0 });
        }
        Ok(InfluenceMap {
            domain: domain.clone(),
            targets: targets.to_vec(),
            r_max,
            weights,
            outside_mass,
            needs_background,
            tail: pot.tail_sum(r_max, d),
        })
    }

    /// `Σ_{|y| > r_max} u(|y|)`.
    pub fn tail_mass(&self) -> f64 {
        self.tail
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.domain.len();
        &self.weights[i * n..(i + 1) * n]
    }

    /// Writes `V` into `out` for raw domain values and a background value.
    pub fn apply_into(&self, values: &[f64], background: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut s = 0.0;
            for (w, v) in row.iter().zip(values) {
                s += w * v;
            }
            *o = s + background * self.outside_mass[i];
        }
    }

    pub fn apply(&self, field: &FieldSample) -> Result<CumulativePotential> {
        if field.domain != self.domain {
            return Err(invalid("field domain differs from the influence map domain"));
        }
        let bg = match field.background.value() {
            Some(b) => b,
            None => {
                if let Some(i) = self.needs_background.iter().position(|&b| b) {
                    let site = first_outside(&self.domain, &self.targets[i], self.r_max);
                    return Err(Error::FieldDomain {
                        site: site.0,
                        target: self.targets[i].0.clone(),
                    });
                }
                0.0
            }
        };
        let mut values = vec![0.0; self.targets.len()];
        self.apply_into(&field.values, bg, &mut values);
        let amp = field
            .values
            .iter()
            .fold(bg.abs(), |m, v| m.max(v.abs()));
        let amp = match field.background {
            Background::Undefined => amp.max(1.0),
            _ => amp,
        };
        Ok(CumulativePotential {
            targets: self.targets.clone(),
            values,
            r_max: self.r_max,
            tail_error: amp * self.tail,
        })
    }
}

fn covers(outer: &Ball, inner: &Ball) -> bool {
    outer
        .center
        .0
        .iter()
        .zip(&inner.center.0)
        .all(|(c, x)| x - inner.radius as i64 >= c - outer.radius as i64 && x + inner.radius as i64 <= c + outer.radius as i64)
}

fn first_outside(domain: &Ball, x: &Site, r: u64) -> Site {
    let mut s = x.clone();
    for (k, (c, xc)) in domain.center.0.iter().zip(&x.0).enumerate() {
        if xc + r as i64 > c + domain.radius as i64 {
            s.0[k] = c + domain.radius as i64 + 1;
            return s;
        }
        if xc - (r as i64) < c - domain.radius as i64 {
            s.0[k] = c - domain.radius as i64 - 1;
            return s;
        }
    }
    s
}

/// `V` at `targets` with truncation `r_max` (the potential's own if `None`).
pub fn cumulative_potential(
    pot: &InteractionPotential,
    field: &FieldSample,
    targets: &[Site],
    r_max: Option<u64>,
) -> Result<CumulativePotential> {
    let r = r_max.unwrap_or_else(|| pot.truncation_for(field.dim()));
    InfluenceMap::new(pot, &field.domain, targets, r)?.apply(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{plus_modification, sample_field, AmplitudeDistribution};
    use crate::rng::StreamId;
    use proptest::prelude::*;

    fn brute(pot: &InteractionPotential, field: &FieldSample, x: &Site, r_max: u64) -> f64 {
        let d = field.dim();
        let ball = Ball {
            center: x.clone(),
            radius: r_max,
        };
        let _ = d;
        ball.sites()
            .iter()
            .map(|y| pot.value_at(distance(x, y)) * field.get(y).unwrap())
            .sum()
    }

    #[test]
    fn zero_field_gives_zero() {
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let f = FieldSample::zeros(Ball::centered(1, 5));
        let v = cumulative_potential(&pot, &f, &[Site::from(0)], Some(50)).unwrap();
        assert_eq!(v.values, vec![0.0]);
        assert!(v.tail_error >= 0.0);
    }

    #[test]
    fn hand_sum_on_three_neighbours() {
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let mut f = FieldSample::constant(Ball::centered(1, 10), 1.0, Background::FrozenZero);
        let x = Site::from(0);
        f.set(&x, 0.0).unwrap();
        for y in 4..=10 {
            f.set(&Site::from(y), 0.0).unwrap();
            f.set(&Site::from(-y), 0.0).unwrap();
        }
        let oracle = 2.0 * (1.0 + 1.0 / 4.0 + 1.0 / 9.0);
        let v = cumulative_potential(&pot, &f, &[x.clone()], Some(40)).unwrap();
        assert!((v.values[0] - oracle).abs() < 1e-14);
        f.set(&x, 1.0).unwrap();
        let v = cumulative_potential(&pot, &f, &[x], Some(40)).unwrap();
        assert!((v.values[0] - oracle - 1.0).abs() < 1e-14);
    }

    #[test]
    fn background_matches_brute_force() {
        let pot = InteractionPotential::piecewise(2.5, 1.5).unwrap();
        let f = sample_field(
            &AmplitudeDistribution::Uniform01,
            &Ball::centered(2, 3),
            StreamId::new(1, "bg", 0),
            Background::FrozenValue { value: 0.7 },
        );
        let targets = vec![Site::from((0, 0)), Site::from((3, -2)), Site::from((1, 2))];
        let v = cumulative_potential(&pot, &f, &targets, Some(9)).unwrap();
        for (x, got) in targets.iter().zip(&v.values) {
            assert!((got - brute(&pot, &f, x, 9)).abs() < 1e-12);
        }
    }

    #[test]
    fn undefined_background_is_refused() {
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let mut f = FieldSample::zeros(Ball::centered(1, 5));
        f.background = Background::Undefined;
        assert!(cumulative_potential(&pot, &f, &[Site::from(0)], Some(5)).is_ok());
        let err = cumulative_potential(&pot, &f, &[Site::from(1)], Some(5)).unwrap_err();
        assert!(matches!(err, Error::FieldDomain { ref site, .. } if site == &vec![6]));
    }

    #[test]
    fn all_ones_partial_sums_increase_and_converge() {
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let f = FieldSample::constant(Ball::centered(1, 0), 1.0, Background::FrozenValue { value: 1.0 });
        let limit = 1.0 + 2.0 * std::f64::consts::PI.powi(2) / 6.0;
        let mut prev = 0.0;
        for r in [1u64, 10, 100, 1000, 100_000] {
            let v = cumulative_potential(&pot, &f, &[Site::from(0)], Some(r)).unwrap();
            assert!(v.values[0] > prev);
            assert!(v.values[0] <= limit);
            assert!(limit - v.values[0] <= v.tail_error + 1e-12);
            prev = v.values[0];
        }
        assert!(limit - prev < 3e-5);
    }

    #[test]
    fn plus_modification_dominates() {
        let pot = InteractionPotential::piecewise(2.0, 1.0).unwrap();
        let dist = AmplitudeDistribution::BernoulliP { p: 0.5 };
        let big = Ball::centered(1, 12);
        let bplus = Ball::centered(1, 4);
        let targets = bplus.sites();
        for i in 0..100 {
            let f = sample_field(&dist, &big, StreamId::new(5, "plus", i), Background::FrozenZero);
            let plus = plus_modification(&f, &bplus, &dist).unwrap();
            let v = cumulative_potential(&pot, &f, &targets, Some(30)).unwrap();
            let vp = cumulative_potential(&pot, &plus, &targets, Some(30)).unwrap();
            for (a, b) in v.values.iter().zip(&vp.values) {
                assert!(a <= b);
            }
        }
    }

    proptest! {
        #[test]
        fn linear_in_the_field(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let pot = InteractionPotential::piecewise(3.0, 1.3).unwrap();
            let dom = Ball::centered(2, 3);
            let dist = AmplitudeDistribution::Uniform01;
            let f = sample_field(&dist, &dom, StreamId::new(seed, "lin", 0), Background::FrozenZero);
            let g = sample_field(&dist, &dom, StreamId::new(seed, "lin", 1), Background::FrozenZero);
            let mut h = f.clone();
            for (k, v) in h.values.iter_mut().enumerate() {
                *v = a * f.values[k] + b * g.values[k];
            }
            let t = dom.sites();
            let vf = cumulative_potential(&pot, &f, &t, Some(6)).unwrap();
            let vg = cumulative_potential(&pot, &g, &t, Some(6)).unwrap();
            let vh = cumulative_potential(&pot, &h, &t, Some(6)).unwrap();
            for i in 0..t.len() {
                prop_assert!((vh.values[i] - a * vf.values[i] - b * vg.values[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn translation_invariant(seed in 0u64..1000, sx in -5i64..5, sy in -5i64..5) {
            let pot = InteractionPotential::piecewise(2.5, 1.0).unwrap();
            let dom = Ball::centered(2, 3);
            let f = sample_field(&AmplitudeDistribution::BernoulliSym, &dom, StreamId::new(seed, "tr", 0), Background::FrozenZero);
            let shifted_dom = Ball { center: Site::from((sx, sy)), radius: 3 };
            let g = FieldSample::new(shifted_dom, f.values.clone(), Background::FrozenZero).unwrap();
            let t: Vec<Site> = dom.sites();
            let ts: Vec<Site> = t.iter().map(|x| x.translate(&[sx, sy])).collect();
            let v = cumulative_potential(&pot, &f, &t, Some(8)).unwrap();
            let w = cumulative_potential(&pot, &g, &ts, Some(8)).unwrap();
            prop_assert_eq!(v.values, w.values);
        }
    }
}
