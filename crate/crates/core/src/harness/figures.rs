//! Canned reproductions: squeezed-vs-coherent spectra, the decay-rate
//! table and the projection-noise line.

use serde::{Deserialize, Serialize};

use crate::analytic::{bana_closed_form, pna_closed_form, technical_area};
use crate::error::{Error, Result};
use crate::harness::pipeline::{simulate_pair, simulate_spectra, AnalysisOptions, PairAnalysis, SimSettings};
use crate::harness::regression::{fit_line, fit_power_law, LineFit, PowerLaw};
use crate::harness::sweep::point_seeds;
use crate::model::{validate, Context, ExperimentParams, Spectrum, CONVENTION_TAG};
use crate::spectral::{LorentzianFit, Measured};

fn one() -> usize {
    1
}

/// Ratio `a/b` with first-order error.
pub fn ratio(a: Measured, b: Measured) -> Measured {
    let r = a.value / b.value;
    Measured::new(r, r.abs() * (a.relative().powi(2) + b.relative().powi(2)).sqrt())
}

fn product(a: Measured, b: Measured) -> Measured {
    let r = a.value * b.value;
    Measured::new(r, r.abs() * (a.relative().powi(2) + b.relative().powi(2)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Plan {
    /// Squeezed-probe parameters (`ε_y < 1 < ε_z`).
    pub params: ExperimentParams,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    /// Band for the wing level; defaults to 50 % to 90 % of the Nyquist
    /// frequency.
    #[serde(default, rename = "wing_band_Hz")]
    pub wing_band_hz: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Annotations {
    pub convention: String,
    #[serde(rename = "wing_band_Hz")]
    pub wing_band_hz: [f64; 2],
    pub wing_coherent: Measured,
    pub wing_squeezed: Measured,
    pub wing_ratio: Measured,
    pub wing_ratio_expected: f64,
    pub area_coherent: Measured,
    pub area_squeezed: Measured,
    pub area_ratio: Measured,
    pub area_ratio_expected: f64,
    pub fit_coherent: LorentzianFit,
    pub fit_squeezed: LorentzianFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Result {
    pub coherent: Spectrum,
    pub squeezed: Spectrum,
    pub annotations: Fig2Annotations,
}

/// Mean PSD over `band` with the error implied by the periodogram
/// statistics. The band should lie where the resonance has decayed.
pub fn wing_level(spectrum: &Spectrum, band: [f64; 2]) -> Result<Measured> {
    let range = spectrum.range(band[0], band[1]);
    let n = range.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "wing band {band:?} Hz holds {n} bins"
        )));
    }
    let level = spectrum.psd[range].iter().sum::<f64>() / n as f64;
    let mut corr = 1.0;
    for (lag, rho) in spectrum.bin_corr.iter().enumerate().skip(1).take(n - 1) {
        corr += 2.0 * rho * (1.0 - lag as f64 / n as f64);
    }
    let var = level * level / spectrum.n_eff / n as f64 * corr;
    Ok(Measured::new(level, var.sqrt()))
}

/// `[0.5, 0.9]` of the Nyquist frequency, far from the resonance.
fn default_wing_band(spectrum: &Spectrum) -> [f64; 2] {
    let nyquist = *spectrum.freq_hz.last().unwrap_or(&0.0);
    [0.5 * nyquist, 0.9 * nyquist]
}

fn total_area(p: &ExperimentParams) -> Result<f64> {
    Ok(bana_closed_form(p)? + pna_closed_form(p)? + technical_area(p)?)
}

pub fn reproduce_fig2(plan: &Fig2Plan) -> Result<Fig2Result> {
    let p = &plan.params;
    validate(p, Context::Simulation)?;
    if !(p.eps_y < 1.0 && p.eps_z > 1.0) {
        log::warn!("fig2 squeezed case expects eps_y < 1 < eps_z");
    }
    let ([fit_coherent, fit_squeezed], [coherent, squeezed]) = simulate_spectra(
        p,
        &plan.sim,
        plan.realizations,
        &plan.analysis,
        point_seeds(plan.seed, 0),
    )?;
    let band = plan
        .wing_band_hz
        .unwrap_or_else(|| default_wing_band(&coherent));
    let wing_coherent = wing_level(&coherent, band)?;
    let wing_squeezed = wing_level(&squeezed, band)?;
    let area_coherent = fit_coherent.fit.area_measured();
    let area_squeezed = fit_squeezed.fit.area_measured();
    let annotations = Fig2Annotations {
        convention: CONVENTION_TAG.to_string(),
        wing_band_hz: band,
        wing_coherent,
        wing_squeezed,
        wing_ratio: ratio(wing_squeezed, wing_coherent),
        wing_ratio_expected: p.eps_y,
        area_coherent,
        area_squeezed,
        area_ratio: ratio(area_squeezed, area_coherent),
        area_ratio_expected: total_area(p)? / total_area(&p.coherent())?,
        fit_coherent: fit_coherent.fit,
        fit_squeezed: fit_squeezed.fit,
    };
    Ok(Fig2Result {
        coherent,
        squeezed,
        annotations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Plan {
    pub params: ExperimentParams,
    #[serde(rename = "gamma_grid_Hz")]
    pub gamma_grid_hz: Vec<f64>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub eps_z_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    #[serde(rename = "gamma_Hz")]
    pub gamma_hz: f64,
    pub bana: Measured,
    pub rsn: Measured,
    pub pna_inferred: Measured,
    pub pna_closed_form: f64,
    pub bana_times_gamma: Measured,
    pub rsn_over_pna: Measured,
    pub pair: PairAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Result {
    pub convention: String,
    pub rows: Vec<Fig3Row>,
    pub bana_vs_gamma: PowerLaw,
}

pub fn reproduce_fig3(plan: &Fig3Plan) -> Result<Fig3Result> {
    let g = &plan.gamma_grid_hz;
    if g.len() < 2 || g.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig(
            "gamma grid must be strictly increasing with at least 2 points".into(),
        ));
    }
    if g[g.len() - 1] < 4.0 * g[0] {
        return Err(Error::InvalidConfig(
            "gamma grid must span at least a factor of 4".into(),
        ));
    }
    if plan.params.tech_noise_k == 0.0 {
        log::info!("tech_noise_k = 0: RSN should equal PNA at every decay rate");
    }
    let mut rows = Vec::with_capacity(g.len());
    for (i, &gamma_hz) in g.iter().enumerate() {
        let p = ExperimentParams {
            gamma_hz,
            ..plan.params
        };
        validate(&p, Context::Simulation)?;
        let (pair, _) = simulate_pair(
            &p,
            &plan.sim,
            plan.realizations,
            &plan.analysis,
            point_seeds(plan.seed, i),
            plan.eps_z_stderr,
        )?;
        let a = &pair.areas;
        let pna = a.pna_inferred.expect("set by simulate_pair");
        let pna_cf = pna_closed_form(&p)?;
        rows.push(Fig3Row {
            gamma_hz,
            bana: a.bana,
            rsn: a.rsn,
            pna_inferred: pna,
            pna_closed_form: pna_cf,
            bana_times_gamma: product(a.bana, Measured::exact(gamma_hz)),
            rsn_over_pna: ratio(a.rsn, Measured::exact(pna_cf)),
            pair,
        });
    }
    let bana: Vec<Measured> = rows.iter().map(|r| r.bana).collect();
    let bana_vs_gamma = if g.len() >= 3 {
        fit_power_law(g, &bana)?
    } else {
        return Err(Error::TooFewPoints { ok: g.len(), need: 3 });
    };
    Ok(Fig3Result {
        convention: CONVENTION_TAG.to_string(),
        rows,
        bana_vs_gamma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig4Plan {
    pub params: ExperimentParams,
    /// Decay rates (HWHM) of the series.
    #[serde(rename = "gammas_Hz")]
    pub gammas_hz: Vec<f64>,
    pub jx_grid: Vec<f64>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub eps_z_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Point {
    pub spin_jx: f64,
    pub pna_inferred: Measured,
    pub pna_closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Series {
    #[serde(rename = "gamma_Hz")]
    pub gamma_hz: f64,
    pub points: Vec<Fig4Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Result {
    pub convention: String,
    pub series: Vec<Fig4Series>,
    /// Joint straight line `PNA = intercept + slope·J_x` through every series.
    pub joint_line: LineFit,
}

pub fn reproduce_fig4(plan: &Fig4Plan) -> Result<Fig4Result> {
    if plan.gammas_hz.is_empty() || plan.jx_grid.len() < 2 {
        return Err(Error::InvalidConfig(
            "fig4 needs at least one decay rate and two J_x values".into(),
        ));
    }
    let mut series = Vec::new();
    let mut index = 0;
    for &gamma_hz in &plan.gammas_hz {
        let mut points = Vec::new();
        for &spin_jx in &plan.jx_grid {
            let p = ExperimentParams {
                gamma_hz,
                spin_jx,
                ..plan.params
            };
            validate(&p, Context::Simulation)?;
            let (pair, _) = simulate_pair(
                &p,
                &plan.sim,
                plan.realizations,
                &plan.analysis,
                point_seeds(plan.seed, index),
                plan.eps_z_stderr,
            )?;
            index += 1;
            points.push(Fig4Point {
                spin_jx,
                pna_inferred: pair.areas.pna_inferred.expect("set by simulate_pair"),
                pna_closed_form: pna_closed_form(&p)?,
            });
        }
        series.push(Fig4Series { gamma_hz, points });
    }
    let all = series.iter().flat_map(|s| &s.points);
    let x: Vec<f64> = all.clone().map(|p| p.spin_jx).collect();
    let y: Vec<f64> = all.clone().map(|p| p.pna_inferred.value).collect();
    let e: Vec<f64> = all.map(|p| p.pna_inferred.stderr).collect();
    Ok(Fig4Result {
        convention: CONVENTION_TAG.to_string(),
        joint_line: fit_line(&x, &y, &e)?,
        series,
    })
}
