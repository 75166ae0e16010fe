//! Parameter sweeps and power-law regression of the noise areas.

use serde::{Deserialize, Serialize};

use crate::analytic::{bana_closed_form, pna_closed_form, technical_area};
use crate::error::{Error, Result};
use crate::harness::pipeline::{simulate_pair, AnalysisOptions, SimSettings};
use crate::harness::regression::{fit_power_law, PowerLaw};
use crate::model::{validate, Context, ExperimentParams, CONVENTION_TAG};
use crate::rng::derive_seed;
use crate::sde;
use crate::spectral::{decompose, Measured, NoiseAreas};

pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "flux_Sx")]
    FluxSx,
    #[serde(rename = "spin_Jx")]
    SpinJx,
    #[serde(rename = "gamma_Hz")]
    GammaHz,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::FluxSx => "flux_Sx",
            Axis::SpinJx => "spin_Jx",
            Axis::GammaHz => "gamma_Hz",
        }
    }

    pub fn apply(self, base: &ExperimentParams, value: f64) -> ExperimentParams {
        let mut p = *base;
        match self {
            Axis::FluxSx => p.flux_sx = value,
            Axis::SpinJx => p.spin_jx = value,
            Axis::GammaHz => p.gamma_hz = value,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// Squeezed-probe parameters; the coherent run of each point uses
    /// `ε_y = ε_z = 1`.
    pub base: ExperimentParams,
    pub axis: Axis,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    /// Standard error of the squeezed `ε_z`, propagated into BANA and RSN.
    #[serde(default)]
    pub eps_z_stderr: f64,
    /// Substitutes closed-form areas for simulation.
    #[serde(default)]
    pub dry_run: bool,
}

fn one() -> usize {
    1
}

impl SweepPlan {
    pub fn point_params(&self) -> Vec<ExperimentParams> {
        self.grid.iter().map(|&v| self.axis.apply(&self.base, v)).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.grid.len() < MIN_POINTS {
            return Err(Error::InvalidConfig(format!(
                "sweep grid needs at least {MIN_POINTS} points (got {})",
                self.grid.len()
            )));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("sweep grid must be strictly increasing".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidConfig("realizations must be >= 1".into()));
        }
        let ctx = if self.dry_run {
            Context::Analytic
        } else {
            Context::Simulation
        };
        for p in self.point_params() {
            validate(&p, ctx)?;
            validate(&p.coherent(), ctx)?;
            if !self.dry_run {
                sde::check(&p, &self.sim.config(&p, 0))?;
            }
        }
        Ok(())
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub seeds: [u64; 2],
    pub areas: Option<NoiseAreas>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub convention: String,
    pub axis: Axis,
    pub dry_run: bool,
    pub bana: PowerLaw,
    pub pna: PowerLaw,
    pub points: Vec<PointRecord>,
}

impl ScalingResult {
    pub fn successful(&self) -> impl Iterator<Item = (f64, &NoiseAreas)> {
        self.points
            .iter()
            .filter_map(|p| p.areas.as_ref().map(|a| (p.x, a)))
    }
}

/// Closed-form coherent and squeezed areas for a dry run.
pub fn analytic_pair(params: &ExperimentParams) -> Result<NoiseAreas> {
    let coh = params.coherent();
    let area = |p: &ExperimentParams| -> Result<f64> {
        Ok(bana_closed_form(p)? + pna_closed_form(p)? + technical_area(p)?)
    };
    decompose(
        Measured::exact(area(&coh)?),
        Measured::exact(area(params)?),
        Measured::exact(params.eps_z),
    )?
    .with_inferred_pna(
        Measured::exact(coh.shot_noise_level()),
        Measured::exact(params.gamma_hz),
    )
}

/// Seeds of the coherent and squeezed ensembles at grid point `index`.
pub fn point_seeds(seed: u64, index: usize) -> [u64; 2] {
    [
        derive_seed(seed, 2 * index as u64),
        derive_seed(seed, 2 * index as u64 + 1),
    ]
}

pub fn run_sweep(plan: &SweepPlan) -> Result<ScalingResult> {
    plan.check()?;
    let mut points = Vec::with_capacity(plan.grid.len());
    for (i, (&x, params)) in plan.grid.iter().zip(plan.point_params()).enumerate() {
        let seeds = point_seeds(plan.seed, i);
        let outcome = if plan.dry_run {
            analytic_pair(&params)
        } else {
            simulate_pair(
                &params,
                &plan.sim,
                plan.realizations,
                &plan.analysis,
                seeds,
                plan.eps_z_stderr,
            )
            .map(|(pair, _)| pair.areas)
        };
        let record = match outcome {
            Ok(areas) if areas.bana.value > 0.0 && areas.pna_inferred.is_some() => {
                log::info!(
                    "{} = {x:e}: BANA {:e} ± {:e}",
                    plan.axis.name(),
                    areas.bana.value,
                    areas.bana.stderr
                );
                PointRecord {
                    x,
                    seeds,
                    areas: Some(areas),
                    error: None,
                }
            }
            Ok(areas) => PointRecord {
                x,
                seeds,
                areas: None,
                error: Some(format!("non-positive BANA {:e}", areas.bana.value)),
            },
            Err(e) if e.is_numerical() || matches!(e, Error::NonPositiveInput { .. }) => {
                log::warn!("{} = {x:e} failed: {e}", plan.axis.name());
                PointRecord {
                    x,
                    seeds,
                    areas: None,
                    error: Some(e.to_string()),
                }
            }
            Err(e) => return Err(e),
        };
        points.push(record);
    }
    let ok: Vec<(f64, &NoiseAreas)> = points
        .iter()
        .filter_map(|p| p.areas.as_ref().map(|a| (p.x, a)))
        .collect();
    if ok.len() < MIN_POINTS {
        return Err(Error::TooFewPoints {
            ok: ok.len(),
            need: MIN_POINTS,
        });
    }
    let xs: Vec<f64> = ok.iter().map(|(x, _)| *x).collect();
    let bana: Vec<Measured> = ok.iter().map(|(_, a)| a.bana).collect();
    let pna: Vec<Measured> = ok
        .iter()
        .map(|(_, a)| a.pna_inferred.expect("checked above"))
        .collect();
    Ok(ScalingResult {
        convention: CONVENTION_TAG.to_string(),
        axis: plan.axis,
        dry_run: plan.dry_run,
        bana: fit_power_law(&xs, &bana)?,
        pna: fit_power_law(&xs, &pna)?,
        points,
    })
}
