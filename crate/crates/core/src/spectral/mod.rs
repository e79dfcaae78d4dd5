//! Finite-volume Hamiltonians `H_Λ = -Δ_Λ + gV`, their spectra, Green
//! functions, plateau decomposition, density of states and eigenfunction
//! correlators.

mod ensemble;
mod hamiltonian;
mod plateau;

pub use ensemble::{
    dos_histogram, efc_estimate, efc_profile, map_ensemble, DosHistogram, EfcProfile, EnsembleConfig,
    RefinementLevel,
};
pub use hamiltonian::{
    assemble_hamiltonian, eigensystem, green_function, hamiltonian_from_values, laplacian, spectral_distance,
    spectrum, HamiltonianMatrix, SpectralDecomposition, SpectrumSummary, MAX_SITES,
};
pub use plateau::{plateau_decompose, plateau_weight, PlateauDecomposition, PlateauSummary};
