//! Separation of the resonance area into back-action and residual spin
//! noise from a coherent and a squeezed measurement.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::CONVENTION_TAG;

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub stderr: f64,
}

impl Measured {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self {
            value,
            stderr: stderr.abs(),
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    pub fn relative(&self) -> f64 {
        self.stderr / self.value.abs()
    }

    /// Distance from `target` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseAreas {
    pub convention: String,
    pub a_total: Measured,
    pub a_squeezed: Measured,
    pub eps_z: Measured,
    pub bana: Measured,
    pub rsn: Measured,
    pub snl: Option<Measured>,
    pub pna_inferred: Option<Measured>,
}

/// Back-action and residual areas from the coherent (`ε_z = 1`) area, the
/// squeezed area and the squeezed probe's `ε_z`. Errors propagate to first
/// order; the two areas are independent measurements.
pub fn decompose(a_coh: Measured, a_sq: Measured, eps_z: Measured) -> Result<NoiseAreas> {
    let e = eps_z.value;
    if !(e - 1.0 >= 0.1) {
        return Err(Error::EpsTooCloseToOne(e - 1.0));
    }
    let d = e - 1.0;
    let bana = (a_sq.value - a_coh.value) / d;
    let rsn = a_coh.value - bana;
    let bana_err = ((a_sq.stderr / d).powi(2)
        + (a_coh.stderr / d).powi(2)
        + (bana / d * eps_z.stderr).powi(2))
    .sqrt();
    let rsn_err = ((e / d * a_coh.stderr).powi(2)
        + (a_sq.stderr / d).powi(2)
        + (bana / d * eps_z.stderr).powi(2))
    .sqrt();
    Ok(NoiseAreas {
        convention: CONVENTION_TAG.to_string(),
        a_total: a_coh,
        a_squeezed: a_sq,
        eps_z,
        bana: Measured::new(bana, bana_err),
        rsn: Measured::new(rsn, rsn_err),
        snl: None,
        pna_inferred: None,
    })
}

/// Projection-noise area from a measured back-action area and shot-noise
/// level: `2·sqrt(π·Γ·BANA·SNL)`.
pub fn infer_pna_from_measurement(bana: Measured, snl: Measured, gamma_hz: Measured) -> Result<Measured> {
    for (name, m) in [("bana", bana), ("snl", snl), ("gamma_Hz", gamma_hz)] {
        if !(m.value > 0.0) {
            return Err(Error::NonPositiveInput {
                name,
                value: m.value,
            });
        }
    }
    let pna = 2.0 * (PI * gamma_hz.value * bana.value * snl.value).sqrt();
    let rel = (bana.relative().powi(2) + snl.relative().powi(2) + gamma_hz.relative().powi(2)).sqrt();
    Ok(Measured::new(pna, 0.5 * pna * rel))
}

impl NoiseAreas {
    pub fn with_inferred_pna(mut self, snl: Measured, gamma_hz: Measured) -> Result<Self> {
        self.pna_inferred = Some(infer_pna_from_measurement(self.bana, snl, gamma_hz)?);
        self.snl = Some(snl);
        Ok(self)
    }
}
