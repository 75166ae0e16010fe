//! Physical parameters, unit conventions and the value types shared by the
//! simulator and the spectral analysis.
//!
//! Frequencies on every public surface are ordinary frequencies in Hz. The
//! decay rate `gamma_Hz` is stored as the half-width at half-maximum of the
//! spin resonance; angular quantities (`2π·f`) only appear inside the
//! dynamics and the analytic formulas.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};

/// Tag embedded in every serialized area or spectrum: areas are integrals of
/// a two-sided PSD over ordinary frequency.
pub const CONVENTION_TAG: &str = "area-over-Hz, two-sided";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    /// Light-atom coupling constant `a`.
    pub coupling_a: f64,
    /// Classical Stokes flux `S_x` in photons/s.
    #[serde(rename = "flux_Sx")]
    pub flux_sx: f64,
    /// Macroscopic longitudinal spin `J_x`.
    #[serde(rename = "spin_Jx")]
    pub spin_jx: f64,
    /// Larmor frequency in Hz.
    #[serde(rename = "larmor_Hz")]
    pub larmor_hz: f64,
    /// Transverse spin decay rate as HWHM in Hz.
    #[serde(rename = "gamma_Hz")]
    pub gamma_hz: f64,
    /// Noise factor of the `S_y` input quadrature (1 = coherent).
    pub eps_y: f64,
    /// Noise factor of the `S_z` input quadrature (1 = coherent).
    pub eps_z: f64,
    /// White classical spin force strength in s⁻¹, same units as the
    /// quantum Langevin strength `Γ·J_x` (angular Γ).
    #[serde(default)]
    pub tech_noise_k: f64,
}

impl ExperimentParams {
    pub fn larmor_angular(&self) -> f64 {
        2.0 * PI * self.larmor_hz
    }

    pub fn gamma_angular(&self) -> f64 {
        2.0 * PI * self.gamma_hz
    }

    /// Shot-noise level `S_x/2` of a coherent probe.
    pub fn shot_noise_level(&self) -> f64 {
        self.flux_sx / 2.0
    }

    /// Diffusion strength of each quantum Langevin force, `Γ·J_x`.
    pub fn langevin_strength(&self) -> f64 {
        self.gamma_angular() * self.spin_jx
    }

    /// Diffusion strength of the back-action drive on `J_y`,
    /// `a²J_x²·ε_z·S_x/2`.
    pub fn backaction_strength(&self) -> f64 {
        let a = self.coupling_a;
        a * a * self.spin_jx * self.spin_jx * self.eps_z * self.flux_sx / 2.0
    }

    /// The same parameters with a coherent probe (`ε_y = ε_z = 1`).
    pub fn coherent(&self) -> Self {
        Self {
            eps_y: 1.0,
            eps_z: 1.0,
            ..*self
        }
    }

    /// Stable 64-bit digest of the parameter values, used to tie output
    /// files to the configuration that produced them.
    pub fn hash64(&self) -> u64 {
        let mut h = Sha256::new();
        for v in [
            self.coupling_a,
            self.flux_sx,
            self.spin_jx,
            self.larmor_hz,
            self.gamma_hz,
            self.eps_y,
            self.eps_z,
            self.tech_noise_k,
        ] {
            h.update(v.to_le_bytes());
        }
        let digest = h.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(first)
    }
}

/// Where the parameters are going to be used. The narrowband condition is
/// a hard requirement for the closed-form results only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    Analytic,
    Simulation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// `ε_y·ε_z < 1`: the optical input is below minimum uncertainty.
    SubMinimumUncertainty { product: f64 },
    /// `Γ ≥ Ω` in a time-domain run.
    OutsideNarrowband { gamma_hz: f64, larmor_hz: f64 },
    /// Run shorter than `10/Γ`; the spectrum is not stationary.
    DurationTooShort { duration_s: f64, min_s: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::SubMinimumUncertainty { product } => {
                write!(f, "eps_y*eps_z = {product} < 1 (below minimum uncertainty)")
            }
            Warning::OutsideNarrowband {
                gamma_hz,
                larmor_hz,
            } => write!(
                f,
                "gamma_Hz = {gamma_hz} >= larmor_Hz = {larmor_hz}; analytic results do not apply"
            ),
            Warning::DurationTooShort { duration_s, min_s } => write!(
                f,
                "duration {duration_s} s is shorter than 10/gamma = {min_s} s"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub params: ExperimentParams,
    pub warnings: Vec<Warning>,
}

/// Checks every parameter invariant and reports all violations at once.
///
/// `spin_Jx = 0` is accepted as the no-atom limit; negative values are not.
pub fn validate(params: &ExperimentParams, ctx: Context) -> Result<Validated> {
    let mut violations = Vec::new();
    let fields: [(&'static str, f64, bool); 8] = [
        ("coupling_a", params.coupling_a, false),
        ("flux_Sx", params.flux_sx, true),
        ("spin_Jx", params.spin_jx, false),
        ("larmor_Hz", params.larmor_hz, true),
        ("gamma_Hz", params.gamma_hz, true),
        ("eps_y", params.eps_y, true),
        ("eps_z", params.eps_z, true),
        ("tech_noise_k", params.tech_noise_k, false),
    ];
    for (field, value, strict) in fields {
        if !value.is_finite() {
            violations.push(Violation::NonFinite { field });
        } else if strict && value <= 0.0 {
            violations.push(Violation::NonPositiveParameter { field, value });
        }
    }
    for (field, value) in [
        ("spin_Jx", params.spin_jx),
        ("tech_noise_k", params.tech_noise_k),
    ] {
        if value.is_finite() && value < 0.0 {
            violations.push(Violation::NonPositiveParameter { field, value });
        }
    }

    let mut warnings = Vec::new();
    let narrowband_ok = !(params.gamma_hz >= params.larmor_hz);
    if !narrowband_ok && params.gamma_hz.is_finite() && params.larmor_hz.is_finite() {
        match ctx {
            Context::Analytic => violations.push(Violation::NarrowbandViolated {
                gamma_hz: params.gamma_hz,
                larmor_hz: params.larmor_hz,
            }),
            Context::Simulation => warnings.push(Warning::OutsideNarrowband {
                gamma_hz: params.gamma_hz,
                larmor_hz: params.larmor_hz,
            }),
        }
    }

    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let product = params.eps_y * params.eps_z;
    if product < 1.0 {
        warnings.push(Warning::SubMinimumUncertainty { product });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Validated {
        params: *params,
        warnings,
    })
}

/// Ways of quoting the spin decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateConvention {
    /// Half-width at half-maximum in Hz (canonical).
    HwhmHz,
    /// Full width at half-maximum in Hz.
    FwhmHz,
    /// Angular decay rate in rad/s.
    AngularRadPerS,
    /// Amplitude lifetime `1/(2π·Γ)` in seconds.
    LifetimeS,
}

impl FromStr for RateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hwhm-hz" => Ok(Self::HwhmHz),
            "fwhm-hz" => Ok(Self::FwhmHz),
            "angular-rad/s" => Ok(Self::AngularRadPerS),
            "lifetime-s" => Ok(Self::LifetimeS),
            _ => Err(Error::UnknownConvention(s.to_string())),
        }
    }
}

impl RateConvention {
    fn self_to_hwhm(self, value: f64) -> f64 {
        match self {
            Self::HwhmHz => value,
            Self::FwhmHz => value / 2.0,
            Self::AngularRadPerS => value / (2.0 * PI),
            Self::LifetimeS => 1.0 / (2.0 * PI * value),
        }
    }

    fn hwhm_to_self(self, hwhm: f64) -> f64 {
        match self {
            Self::HwhmHz => hwhm,
            Self::FwhmHz => 2.0 * hwhm,
            Self::AngularRadPerS => 2.0 * PI * hwhm,
            Self::LifetimeS => 1.0 / (2.0 * PI * hwhm),
        }
    }
}

pub fn unit_convert(value: f64, from: RateConvention, to: RateConvention) -> f64 {
    if from == to {
        return value;
    }
    to.hwhm_to_self(from.self_to_hwhm(value))
}

/// String-keyed variant of [`unit_convert`] for configuration files and
/// the command line.
pub fn unit_convert_named(value: f64, from: &str, to: &str) -> Result<f64> {
    Ok(unit_convert(value, from.parse()?, to.parse()?))
}

/// One realization of the spin and detected-output time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt_s: f64,
    pub jy: Vec<f64>,
    pub jz: Vec<f64>,
    pub sy_out: Vec<f64>,
    pub seed: u64,
    /// Stream index within the ensemble keyed by `seed`.
    pub realization: u32,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.sy_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sy_out.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.sy_out.len();
        if self.jy.len() != n || self.jz.len() != n {
            return Err(Error::Format("trajectory columns differ in length".into()));
        }
        if n < 2 {
            return Err(Error::Format("trajectory needs at least 2 samples".into()));
        }
        if !(self.dt_s > 0.0) {
            return Err(Error::Format("trajectory dt must be positive".into()));
        }
        Ok(())
    }
}

/// Two-sided power spectral density on the non-negative frequency bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub convention: String,
    #[serde(rename = "freq_Hz")]
    pub freq_hz: Vec<f64>,
    pub psd: Vec<f64>,
    /// Per-bin standard error, estimated from the scatter between
    /// realizations when more than one was averaged.
    #[serde(default)]
    pub stderr: Option<Vec<f64>>,
    #[serde(rename = "rbw_Hz")]
    pub rbw_hz: f64,
    /// Number of averaged segments over all realizations.
    pub n_avg: usize,
    /// Effective number of independent averages per bin after accounting
    /// for segment overlap; the periodogram variance is `psd²/n_eff`.
    pub n_eff: f64,
    /// Correlation of periodogram values between bins at lag 0, 1, 2, ...
    pub bin_corr: Vec<f64>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        if self.freq_hz.len() < 2 {
            return 0.0;
        }
        self.freq_hz[1] - self.freq_hz[0]
    }

    /// Indices of bins with `lo <= f <= hi`.
    pub fn range(&self, lo_hz: f64, hi_hz: f64) -> std::ops::Range<usize> {
        let start = self.freq_hz.partition_point(|&f| f < lo_hz);
        let end = self.freq_hz.partition_point(|&f| f <= hi_hz);
        start..end.max(start)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.freq_hz.len();
        if n == 0 || self.psd.len() != n {
            return Err(Error::Format("spectrum arrays empty or mismatched".into()));
        }
        if self.psd.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Format("negative or NaN PSD value".into()));
        }
        if let Some(se) = &self.stderr {
            if se.len() != n {
                return Err(Error::Format("stderr length mismatch".into()));
            }
        }
        if n >= 2 {
            let df = self.bin_width();
            let tol = 1e-9 * self.freq_hz[n - 1].abs().max(df.abs());
            for w in self.freq_hz.windows(2) {
                if ((w[1] - w[0]) - df).abs() > tol || df <= 0.0 {
                    return Err(Error::Format("frequency grid not equally spaced".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentParams {
        ExperimentParams {
            coupling_a: 3.8e-10,
            flux_sx: 1e12,
            spin_jx: 1e10,
            larmor_hz: 2400.0,
            gamma_hz: 80.0,
            eps_y: 1.0,
            eps_z: 1.0,
            tech_noise_k: 0.0,
        }
    }

    #[test]
    fn typical_parameters_are_valid() {
        let v = validate(&base(), Context::Analytic).unwrap();
        assert_eq!(v.params, base());
        assert!(v.warnings.is_empty());
    }

    #[test]
    fn zero_flux_is_rejected() {
        let p = ExperimentParams {
            flux_sx: 0.0,
            ..base()
        };
        match validate(&p, Context::Analytic) {
            Err(Error::Validation(v)) => assert_eq!(
                v,
                vec![Violation::NonPositiveParameter {
                    field: "flux_Sx",
                    value: 0.0
                }]
            ),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported() {
        let p = ExperimentParams {
            flux_sx: -1.0,
            eps_z: 0.0,
            gamma_hz: 5000.0,
            tech_noise_k: -2.0,
            ..base()
        };
        let Err(Error::Validation(v)) = validate(&p, Context::Analytic) else {
            panic!("expected failure");
        };
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(v.contains(&Violation::NarrowbandViolated {
            gamma_hz: 5000.0,
            larmor_hz: 2400.0
        }));
    }

    #[test]
    fn narrowband_is_only_a_warning_for_simulation() {
        let p = ExperimentParams {
            gamma_hz: 3000.0,
            ..base()
        };
        assert!(validate(&p, Context::Analytic).is_err());
        let v = validate(&p, Context::Simulation).unwrap();
        assert!(matches!(v.warnings[0], Warning::OutsideNarrowband { .. }));
    }

    #[test]
    fn squeezed_below_minimum_uncertainty_warns() {
        let p = ExperimentParams {
            eps_y: 0.5,
            eps_z: 0.5,
            ..base()
        };
        let v = validate(&p, Context::Analytic).unwrap();
        assert_eq!(
            v.warnings,
            vec![Warning::SubMinimumUncertainty { product: 0.25 }]
        );
    }

    #[test]
    fn no_atoms_is_allowed() {
        let p = ExperimentParams {
            spin_jx: 0.0,
            ..base()
        };
        assert!(validate(&p, Context::Simulation).is_ok());
    }

    #[test]
    fn unit_conversions() {
        let hw = unit_convert(264.0, RateConvention::FwhmHz, RateConvention::HwhmHz);
        assert_eq!(hw, 132.0);
        let tau = unit_convert(80.0, RateConvention::HwhmHz, RateConvention::LifetimeS);
        assert!((tau - 1.989e-3).abs() < 1e-6, "{tau}");
        let w = unit_convert(1.0, RateConvention::HwhmHz, RateConvention::AngularRadPerS);
        assert_eq!(w, 2.0 * PI);
        assert!(matches!(
            unit_convert_named(1.0, "hwhm-hz", "furlongs"),
            Err(Error::UnknownConvention(_))
        ));
    }

    #[test]
    fn json_uses_declared_field_names_and_rejects_unknown_keys() {
        let json = serde_json::to_string(&base()).unwrap();
        for key in [
            "coupling_a",
            "flux_Sx",
            "spin_Jx",
            "larmor_Hz",
            "gamma_Hz",
            "eps_y",
            "eps_z",
            "tech_noise_k",
        ] {
            assert!(json.contains(&format!("\"{key}\"")), "{json}");
        }
        let back: ExperimentParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, base());
        let typo = json.replace("eps_z", "eps_zz");
        assert!(serde_json::from_str::<ExperimentParams>(&typo).is_err());
    }

    #[test]
    fn hash_distinguishes_parameters() {
        let p = base();
        let q = ExperimentParams { eps_z: 7.0, ..p };
        assert_eq!(p.hash64(), base().hash64());
        assert_ne!(p.hash64(), q.hash64());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn convention() -> impl Strategy<Value = RateConvention> {
            prop_oneof![
                Just(RateConvention::HwhmHz),
                Just(RateConvention::FwhmHz),
                Just(RateConvention::AngularRadPerS),
                Just(RateConvention::LifetimeS),
            ]
        }

        proptest! {
            #[test]
            fn conversion_round_trips(x in 1e-3f64..1e6, a in convention(), b in convention()) {
                let there = unit_convert(x, a, b);
                let back = unit_convert(there, b, a);
                prop_assert!(((back - x) / x).abs() < 4.0 * f64::EPSILON);
            }

            #[test]
            fn validate_is_idempotent(
                sx in -1.0f64..1e13,
                gamma in -10.0f64..5000.0,
                eps_y in 0.0f64..3.0,
                eps_z in 0.0f64..10.0,
            ) {
                let p = ExperimentParams { flux_sx: sx, gamma_hz: gamma, eps_y, eps_z, ..base() };
                let once = validate(&p, Context::Analytic);
                match once {
                    Ok(v) => {
                        let twice = validate(&v.params, Context::Analytic).unwrap();
                        prop_assert_eq!(v, twice);
                    }
                    Err(Error::Validation(_)) => {}
                    Err(e) => prop_assert!(false, "unexpected {e}"),
                }
            }
        }
    }
}
