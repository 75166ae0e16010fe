//! PSD estimation, resonance fitting and noise-area decomposition.

pub mod areas;
pub mod fit;
pub mod psd;

pub use areas::{decompose, infer_pna_from_measurement, Measured, NoiseAreas};
pub use fit::{direct_area, fit_lorentzian, FitOptions, LorentzianFit};
pub use psd::{estimate_psd, estimate_psd_signals, Welch, WelchOptions, Window};
