//! Closed-form frequency-domain results for the probe-spin system.
//!
//! All functions take frequencies in Hz. Internally the Lorentzian is
//! evaluated with angular quantities, `(Ω−ω)² + Γ²` with `ω = 2πf`, so the
//! returned PSD is a two-sided density per Hz. Areas are integrals of that
//! density over ordinary frequency across the resonance at `+Ω`; they are
//! `1/(2π)` times the corresponding integrals over angular frequency.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, Context, ExperimentParams};

/// Narrowband response of `J_y` and `J_z` to the three inputs at one
/// frequency. Units are per rad/s of the input spectral amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinTransfer {
    pub jy_from_sz: Complex64,
    pub jy_from_fy: Complex64,
    pub jy_from_fz: Complex64,
    pub jz_from_sz: Complex64,
    pub jz_from_fy: Complex64,
    pub jz_from_fz: Complex64,
}

impl SpinTransfer {
    pub fn channels(&self) -> [Complex64; 6] {
        [
            self.jy_from_sz,
            self.jy_from_fy,
            self.jy_from_fz,
            self.jz_from_sz,
            self.jz_from_fy,
            self.jz_from_fz,
        ]
    }
}

fn analytic_params(params: &ExperimentParams) -> Result<()> {
    validate(params, Context::Analytic).map(|_| ())
}

pub fn spin_transfer(params: &ExperimentParams, freq_hz: f64) -> Result<SpinTransfer> {
    analytic_params(params)?;
    let detuning = 2.0 * PI * (params.larmor_hz - freq_hz);
    let den = Complex64::new(detuning, -params.gamma_angular());
    let half = Complex64::new(0.5, 0.0) / den;
    let i = Complex64::i();
    let ajx = params.coupling_a * params.spin_jx;
    Ok(SpinTransfer {
        jy_from_sz: -half * i * ajx,
        jy_from_fy: -half * i,
        jy_from_fz: -half,
        jz_from_sz: half * ajx,
        jz_from_fy: half,
        jz_from_fz: -half * i,
    })
}

/// The individual contributions to the output spectrum at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiTerms {
    pub floor: f64,
    pub backaction: f64,
    pub projection: f64,
    pub technical: f64,
}

impl PhiTerms {
    pub fn total(&self) -> f64 {
        self.floor + self.backaction + self.projection + self.technical
    }
}

/// Output PSD split into optical floor, back-action, projection and
/// technical terms. Assumes already-validated parameters.
pub fn phi_terms(params: &ExperimentParams, freq_hz: f64) -> PhiTerms {
    let sx = params.flux_sx;
    let a2 = params.coupling_a * params.coupling_a;
    let gamma = params.gamma_angular();
    let detuning = 2.0 * PI * (params.larmor_hz - freq_hz);
    let lorentz = 0.25 * a2 * sx * sx / (detuning * detuning + gamma * gamma);
    PhiTerms {
        floor: params.eps_y * sx / 2.0,
        backaction: lorentz * params.backaction_strength(),
        projection: lorentz * 2.0 * gamma * params.spin_jx,
        technical: lorentz * 2.0 * params.tech_noise_k,
    }
}

pub fn spectrum_phi(params: &ExperimentParams, freq_hz: f64) -> Result<f64> {
    analytic_params(params)?;
    Ok(phi_terms(params, freq_hz).total())
}

pub fn spectrum_phi_grid(params: &ExperimentParams, freq_hz: &[f64]) -> Result<Vec<f64>> {
    analytic_params(params)?;
    Ok(freq_hz.iter().map(|&f| phi_terms(params, f).total()).collect())
}

/// Narrowband spectrum plus its mirror resonance at `−Ω`. This is the exact
/// stationary PSD of a rotating-wave (rotating frame) simulation.
pub fn rotating_frame_phi(params: &ExperimentParams, freq_hz: f64) -> f64 {
    let here = phi_terms(params, freq_hz);
    let mirror = phi_terms(params, -freq_hz);
    here.total() + mirror.total() - mirror.floor
}

/// Exact stationary PSD of the detected output for the lab-frame
/// equations of motion, without the narrowband approximation. Includes
/// both resonances and the non-rotating-wave distortion of the
/// back-action term.
pub fn lab_spectrum_phi(params: &ExperimentParams, freq_hz: f64) -> f64 {
    let sx = params.flux_sx;
    let a2 = params.coupling_a * params.coupling_a;
    let gamma = params.gamma_angular();
    let omega = params.larmor_angular();
    let w = 2.0 * PI * freq_hz;
    let g2 = gamma * gamma;
    let l_minus = g2 + (w - omega) * (w - omega);
    let l_plus = g2 + (w + omega) * (w + omega);
    let isotropic = params.langevin_strength() + params.tech_noise_k;
    let spin = (isotropic * (omega * omega + g2 + w * w)
        + params.backaction_strength() * omega * omega)
        / (l_minus * l_plus);
    params.eps_y * sx / 2.0 + a2 * sx * sx * spin
}

/// Back-action noise area of the `+Ω` resonance.
pub fn bana_closed_form(params: &ExperimentParams) -> Result<f64> {
    analytic_params(params)?;
    let a = params.coupling_a;
    let half_sx = params.flux_sx / 2.0;
    // π a⁴ J_x² ε_z (S_x/2)³ / Γ is the area over angular frequency.
    let over_angular = PI * a.powi(4) * params.spin_jx.powi(2) * params.eps_z * half_sx.powi(3)
        / params.gamma_angular();
    Ok(over_angular / (2.0 * PI))
}

/// Projection noise area of the `+Ω` resonance; independent of Γ and ε.
pub fn pna_closed_form(params: &ExperimentParams) -> Result<f64> {
    analytic_params(params)?;
    let half_sx = params.flux_sx / 2.0;
    let over_angular = 2.0 * PI * params.coupling_a.powi(2) * params.spin_jx * half_sx * half_sx;
    Ok(over_angular / (2.0 * PI))
}

/// Area contributed by the technical spin force, `∝ k_tech/Γ`.
pub fn technical_area(params: &ExperimentParams) -> Result<f64> {
    analytic_params(params)?;
    let half_sx = params.flux_sx / 2.0;
    Ok(params.coupling_a.powi(2) * half_sx * half_sx * params.tech_noise_k
        / params.gamma_angular())
}

/// Projection noise area inferred from a coherent-probe back-action area
/// and the shot-noise level, `2·sqrt(π·Γ·BANA·SNL)` with Γ in Hz.
pub fn infer_pna(bana: f64, snl: f64, gamma_hz: f64) -> Result<f64> {
    for (name, value) in [("bana", bana), ("snl", snl), ("gamma_Hz", gamma_hz)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveInput { name, value });
        }
    }
    Ok(2.0 * (PI * gamma_hz * bana * snl).sqrt())
}

/// Stationary variance of `J_z` split by source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBudget {
    pub var_jz_quantum: f64,
    pub var_jz_backaction: f64,
    pub var_jz_technical: f64,
}

impl VarianceBudget {
    pub fn total(&self) -> f64 {
        self.var_jz_quantum + self.var_jz_backaction + self.var_jz_technical
    }
}

/// Stationary covariance `[[yy, yz], [yz, zz]]` of the lab-frame spin for
/// white forces of strength `d_y`, `d_z` (angular rates).
pub fn lab_stationary_covariance(d_y: f64, d_z: f64, gamma: f64, omega: f64) -> [[f64; 2]; 2] {
    let sum = (d_y + d_z) / (2.0 * gamma);
    let diff = (d_y - d_z) * gamma / (2.0 * (gamma * gamma + omega * omega));
    let yz = omega * diff / (2.0 * gamma);
    let yy = 0.5 * (sum + diff);
    let zz = 0.5 * (sum - diff);
    [[yy, yz], [yz, zz]]
}

/// Variance decomposition of `J_z`, integrating both the `+Ω` and `−Ω`
/// resonances. The back-action share is exact for the lab-frame dynamics;
/// it differs from the narrowband `D/(4Γ)` by the factor `Ω²/(Ω²+Γ²)`.
pub fn variance_budget(params: &ExperimentParams) -> Result<VarianceBudget> {
    validate(params, Context::Simulation)?;
    let gamma = params.gamma_angular();
    let omega = params.larmor_angular();
    let zz = |d_y: f64, d_z: f64| lab_stationary_covariance(d_y, d_z, gamma, omega)[1][1];
    let q = params.langevin_strength();
    let k = params.tech_noise_k;
    Ok(VarianceBudget {
        var_jz_quantum: zz(q, q),
        var_jz_backaction: zz(params.backaction_strength(), 0.0),
        var_jz_technical: zz(k, k),
    })
}
