//! End-to-end orchestration: simulated spectra, sweeps and figure
//! reproductions. Parallelism lives in the ensemble runs; every reduction is
//! ordered, so results do not depend on the worker count.

pub mod figures;
pub mod pipeline;
pub mod regression;
pub mod sweep;

use crate::model::ExperimentParams;

pub use figures::{reproduce_fig2, reproduce_fig3, reproduce_fig4, Fig2Plan, Fig3Plan, Fig4Plan};
pub use pipeline::{simulate_pair, simulate_spectra, simulated_spectrum, AnalysisOptions, PairAnalysis, SimSettings};
pub use regression::{fit_line, fit_power_law, LineFit, PowerLaw};
pub use sweep::{run_sweep, Axis, ScalingResult, SweepPlan};

pub const DEFAULT_PARAMS_JSON: &str = include_str!("../../default_params.json");

/// The shipped desk-scale parameter set.
pub fn default_params() -> ExperimentParams {
    serde_json::from_str(DEFAULT_PARAMS_JSON).expect("shipped parameters parse")
}
