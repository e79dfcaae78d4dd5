use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, Site};
use crate::model::AmplitudeDistribution;
use crate::rng::StreamId;

/// Value rule for sites outside the explicit domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Background {
    FrozenZero,
    FrozenValue { value: f64 },
    /// `sup supp μ`, recorded as a number.
    SupSupport { value: f64 },
    Undefined,
}

impl Background {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Background::FrozenZero => Some(0.0),
            Background::FrozenValue { value } | Background::SupSupport { value } => Some(value),
            Background::Undefined => None,
        }
    }
}

/// Amplitudes on a ball plus a background rule elsewhere.
///
/// Values are stored in the ball's lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub domain: Ball,
    pub values: Vec<f64>,
    pub background: Background,
    /// Set when `ω⁺` was built from a law with negative support, so the
    /// pointwise bound `V(ω) <= V(ω⁺)` is not guaranteed.
    pub monotonicity_warning: bool,
}

impl FieldSample {
    pub fn new(domain: Ball, values: Vec<f64>, background: Background) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(invalid(format!(
                "field has {} values for a domain of {} sites",
                values.len(),
                domain.len()
            )));
        }
        Ok(FieldSample {
            domain,
            values,
            background,
            monotonicity_warning: false,
        })
    }

    pub fn constant(domain: Ball, value: f64, background: Background) -> Self {
        let n = domain.len();
        FieldSample {
            domain,
            values: vec![value; n],
            background,
            monotonicity_warning: false,
        }
    }

    pub fn zeros(domain: Ball) -> Self {
        Self::constant(domain, 0.0, Background::FrozenZero)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// `ω_y`, falling back to the background outside the domain.
    pub fn get(&self, y: &Site) -> Option<f64> {
        match self.domain.index_of(y) {
            Some(i) => Some(self.values[i]),
            None => self.background.value(),
        }
    }

    pub fn set(&mut self, y: &Site, value: f64) -> Result<()> {
        let i = self
            .domain
            .index_of(y)
            .ok_or_else(|| invalid(format!("site {:?} outside the field domain", y.0)))?;
        self.values[i] = value;
        Ok(())
    }

    /// Checks every explicit value lies in the support of `dist`.
    pub fn in_support(&self, dist: &AmplitudeDistribution) -> bool {
        let (lo, hi) = dist.support();
        self.values.iter().all(|&v| v >= lo - 1e-15 && v <= hi + 1e-15)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, f64> = self
            .domain
            .sites()
            .iter()
            .zip(&self.values)
            .map(|(s, v)| (site_key(s), *v))
            .collect();
        serde_json::json!({
            "domain": self.domain,
            "background": self.background,
            "monotonicity_warning": self.monotonicity_warning,
            "values": map,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let domain: Ball = serde_json::from_value(v["domain"].clone())?;
        let background: Background = serde_json::from_value(v["background"].clone())?;
        let map: BTreeMap<String, f64> = serde_json::from_value(v["values"].clone())?;
        let mut field = FieldSample::constant(domain, 0.0, background);
        if map.len() != field.values.len() {
            return Err(invalid("field JSON does not cover its domain"));
        }
        for (key, value) in map {
            let site = parse_site_key(&key)?;
            field.set(&site, value)?;
        }
        field.monotonicity_warning = v["monotonicity_warning"].as_bool().unwrap_or(false);
        Ok(field)
    }
}

impl Serialize for FieldSample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FieldSample {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        FieldSample::from_json(&v).map_err(serde::de::Error::custom)
    }
}

fn site_key(s: &Site) -> String {
    s.0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_site_key(key: &str) -> Result<Site> {
    let coords = key
        .split(',')
        .map(|c| c.trim().parse::<i64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| invalid(format!("bad site key '{key}'")))?;
    Site::new(coords)
}

/// IID draws of `dist` on `region`, reproducible from `stream`.
pub fn sample_field(
    dist: &AmplitudeDistribution,
    region: &Ball,
    stream: StreamId,
    background: Background,
) -> FieldSample {
    let mut rng = stream.rng();
    let values = (0..region.len()).map(|_| dist.sample(&mut rng)).collect();
    FieldSample {
        domain: region.clone(),
        values,
        background,
        monotonicity_warning: false,
    }
}

/// Fills `values` with IID draws; used for in-place resampling in hot loops.
pub fn resample<R: Rng + ?Sized>(dist: &AmplitudeDistribution, values: &mut [f64], rng: &mut R) {
    for v in values {
        *v = dist.sample(rng);
    }
}

/// `ω⁺`: `ω` on `ball_plus`, `sup supp μ` everywhere else.
pub fn plus_modification(
    field: &FieldSample,
    ball_plus: &Ball,
    dist: &AmplitudeDistribution,
) -> Result<FieldSample> {
    if ball_plus.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: ball_plus.dim(),
        });
    }
    let top = dist.sup_support();
    let mut values = Vec::with_capacity(ball_plus.len());
    for y in ball_plus.sites() {
        let v = field
            .domain
            .index_of(&y)
            .map(|i| field.values[i])
            .ok_or_else(|| invalid(format!("field is not explicit at {:?} inside B⁺", y.0)))?;
        values.push(v);
    }
    Ok(FieldSample {
        domain: ball_plus.clone(),
        values,
        background: Background::SupSupport { value: top },
        monotonicity_warning: !dist.is_nonnegative(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_reproducible_and_in_support() {
        let ball = Ball::centered(2, 3);
        for dist in [
            AmplitudeDistribution::BernoulliSym,
            AmplitudeDistribution::BernoulliP { p: 0.4 },
            AmplitudeDistribution::Uniform01,
        ] {
            let a = sample_field(&dist, &ball, StreamId::new(3, "f", 1), Background::FrozenZero);
            let b = sample_field(&dist, &ball, StreamId::new(3, "f", 1), Background::FrozenZero);
            assert_eq!(a, b);
            assert!(a.in_support(&dist));
        }
        let f = sample_field(
            &AmplitudeDistribution::BernoulliSym,
            &ball,
            StreamId::new(0, "f", 0),
            Background::FrozenZero,
        );
        assert!(f.values.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn plus_modification_rules() {
        let dist = AmplitudeDistribution::BernoulliP { p: 0.5 };
        let field = FieldSample::zeros(Ball::centered(1, 6));
        let plus = plus_modification(&field, &Ball::centered(1, 2), &dist).unwrap();
        assert_eq!(plus.get(&Site::from(1)), Some(0.0));
        assert_eq!(plus.get(&Site::from(3)), Some(1.0));
        assert!(!plus.monotonicity_warning);
        let again = plus_modification(&plus, &Ball::centered(1, 2), &dist).unwrap();
        assert_eq!(again, plus);
        let sym = plus_modification(&field, &Ball::centered(1, 2), &AmplitudeDistribution::BernoulliSym)
            .unwrap();
        assert!(sym.monotonicity_warning);
        assert!(plus_modification(&field, &Ball::centered(1, 7), &dist).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let f = sample_field(
            &AmplitudeDistribution::Uniform01,
            &Ball::new(Site::from((1, -2)), 2, 2).unwrap(),
            StreamId::new(9, "json", 0),
            Background::FrozenValue { value: 0.25 },
        );
        let text = serde_json::to_string(&f).unwrap();
        let back: FieldSample = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert!(text.contains("\"1,-2\""));
    }
}
