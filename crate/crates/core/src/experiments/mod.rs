//! Probabilistic experiments: frozen-bath Wegner estimates, initial length
//! scale estimates and the fixed-energy multiscale step.

mod ils;
mod msa;
mod stats;
mod wegner;

pub use stats::{CiMethod, Proportion};
pub use wegner::{wegner_exact, wegner_experiment, WegnerConfig, WegnerPoint, WegnerReport, MAX_ENUMERATION};
pub use ils::{
    ils_strong_disorder, ils_thin_tail, thin_tail_exact, Conditioning, StrongDisorderConfig, StrongDisorderReport,
    ThinTailConfig, ThinTailExact, ThinTailReport,
};
pub use msa::{
    admissible_centers, max_boundary_green, max_separated, msa_run, nr_predicate, ns_predicate, sample_window,
    sns_probe, MsaConfig, MsaParams, MsaReport, ProbeOutcome, ScaleReport, SnsCertificate, SnsProbe, StabilityMode,
    StepReport,
};
