use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Ball, Site};
use crate::model::{FieldSample, InteractionPotential};
use crate::spectral::hamiltonian::{assemble_hamiltonian, HamiltonianMatrix};

/// `H = H̃ + ξ·I` with `ξ` carried by exterior sites on a single plateau.
#[derive(Debug, Clone)]
pub struct PlateauDecomposition {
    pub plateau_sites: Vec<Site>,
    /// `u` seen by every box site from each plateau site.
    pub plateau_weights: Vec<f64>,
    pub xi: f64,
    pub h: HamiltonianMatrix,
    /// Built from the field with every plateau amplitude set to zero.
    pub h_tilde: HamiltonianMatrix,
    /// `max |H - H̃ - ξI|`.
    pub reconstruction_defect: f64,
}

/// Serializable view of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSummary {
    pub plateau_sites: Vec<Site>,
    pub plateau_weights: Vec<f64>,
    pub xi: f64,
    pub reconstruction_defect: f64,
    /// Sum and sum of squares of `H̃` entries.
    pub h_tilde_checksum: (f64, f64),
}

impl PlateauDecomposition {
    pub fn summary(&self) -> PlateauSummary {
        let m = &self.h_tilde.matrix;
        PlateauSummary {
            plateau_sites: self.plateau_sites.clone(),
            plateau_weights: self.plateau_weights.clone(),
            xi: self.xi,
            reconstruction_defect: self.reconstruction_defect,
            h_tilde_checksum: (m.sum(), m.norm_squared()),
        }
    }
}

/// Weight `u(r)` if `y` sees every site of the box at distances from a single
/// plateau, all within the truncation radius.
pub fn plateau_weight(domain: &Ball, pot: &InteractionPotential, y: &Site, r_max: u64) -> Option<f64> {
    if domain.contains(y) {
        return None;
    }
    let (lo, hi) = domain.distance_range(y);
    if hi > r_max || pot.plateau_index(lo) != pot.plateau_index(hi) {
        return None;
    }
    Some(pot.value_at(lo))
}

pub fn plateau_decompose(
    domain: &Ball,
    pot: &InteractionPotential,
    field: &FieldSample,
    g: f64,
    exterior: &[Site],
    r_max: u64,
) -> Result<PlateauDecomposition> {
    if !pot.is_piecewise() {
        return Err(Error::Unsupported(
            "plateau decomposition needs a piecewise-constant potential".into(),
        ));
    }
    let mut plateau_sites = Vec::new();
    let mut plateau_weights = Vec::new();
    let mut zeroed = field.clone();
    let mut xi = 0.0;
    for y in exterior {
        if let Some(w) = plateau_weight(domain, pot, y, r_max) {
            let omega = field
                .domain
                .index_of(y)
                .map(|i| field.values[i])
                .ok_or_else(|| invalid(format!("plateau site {:?} outside the field domain", y.0)))?;
            zeroed.set(y, 0.0)?;
            xi += g * w * omega;
            plateau_sites.push(y.clone());
            plateau_weights.push(w);
        }
    }
    let h = assemble_hamiltonian(domain, pot, field, g, Some(r_max))?;
    let h_tilde = assemble_hamiltonian(domain, pot, &zeroed, g, Some(r_max))?;
    let n = domain.len();
    let diff = &h.matrix - &h_tilde.matrix - DMatrix::<f64>::identity(n, n) * xi;
    Ok(PlateauDecomposition {
        plateau_sites,
        plateau_weights,
        xi,
        reconstruction_defect: diff.amax(),
        h,
        h_tilde,
    })
}
