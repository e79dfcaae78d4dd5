//! Long-range, polynomially screened Anderson model: geometry, potentials,
//! characteristic-function bounds, finite-volume spectra and the
//! probabilistic experiments built on them.

pub mod charfun;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod lattice;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
