//! Interaction potential, amplitude laws, field samples and the cumulative
//! potential `V(x) = Σ_y u(|y - x|) ω_y`.

mod cumulative;
mod distribution;
mod field;
mod potential;

pub use cumulative::{cumulative_potential, CumulativePotential, InfluenceMap};
pub use distribution::{AmplitudeDistribution, Moments};
pub use field::{plus_modification, resample, sample_field, Background, FieldSample};
pub use potential::{InteractionPotential, PotentialKind, DEFAULT_TAIL_TOLERANCE, MAX_AUTO_TRUNCATION};
