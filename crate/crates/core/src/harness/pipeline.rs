//! Simulate → PSD → fit → decompose for one parameter set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentParams, Spectrum};
use crate::sde::{self, Frame, InitialSpin, Integrator, NoiseSources, SimConfig};
use crate::spectral::{
    decompose, direct_area, fit_lorentzian, FitOptions, LorentzianFit, Measured, NoiseAreas, Welch,
    WelchOptions, Window,
};

/// Time-domain settings shared by every point of a run. The default frame
/// is the rotating frame, whose stationary spectrum is exactly the
/// Lorentzian-pair model the fitter uses. `dt_s` defaults to the lab-frame
/// step limit so that the carrier is sampled in either frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub dt_s: Option<f64>,
    #[serde(default = "rotating")]
    pub frame: Frame,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub initial_spin: InitialSpin,
    #[serde(default)]
    pub sources: NoiseSources,
}

fn default_duration() -> f64 {
    1.0
}

fn rotating() -> Frame {
    Frame::Rotating
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            duration_s: default_duration(),
            dt_s: None,
            frame: Frame::Rotating,
            integrator: Integrator::default(),
            initial_spin: InitialSpin::default(),
            sources: NoiseSources::default(),
        }
    }
}

impl SimSettings {
    pub fn config(&self, params: &ExperimentParams, seed: u64) -> SimConfig {
        SimConfig {
            duration_s: self.duration_s,
            dt_s: self.dt_s.unwrap_or_else(|| sde::max_step(params, Frame::Lab)),
            seed,
            frame: self.frame,
            initial_spin: self.initial_spin,
            integrator: self.integrator,
            sources: self.sources,
            sz_window_s: None,
        }
    }
}

/// Spectral estimation and fitting settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Welch segment length; defaults to `8/gamma_Hz`, giving eight bins
    /// per half-width.
    #[serde(default)]
    pub segment_s: Option<f64>,
    #[serde(default)]
    pub window: Window,
    #[serde(default = "half")]
    pub overlap: f64,
    /// Half-width of the fit window around the Larmor frequency; defaults to
    /// `min(10Γ, 0.6Ω)` but at least `6Γ`.
    #[serde(default, rename = "fit_half_width_Hz")]
    pub fit_half_width_hz: Option<f64>,
    #[serde(default = "yes")]
    pub mirror: bool,
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            segment_s: None,
            window: Window::Hann,
            overlap: 0.5,
            fit_half_width_hz: None,
            mirror: true,
        }
    }
}

impl AnalysisOptions {
    pub fn welch(&self, params: &ExperimentParams, dt_s: f64) -> WelchOptions {
        let seg = self.segment_s.unwrap_or(8.0 / params.gamma_hz);
        WelchOptions {
            segment_len: ((seg / dt_s).round() as usize).max(4),
            window: self.window,
            overlap: self.overlap,
        }
    }

    pub fn fit_options(&self, params: &ExperimentParams) -> FitOptions {
        let g = params.gamma_hz;
        let half = self
            .fit_half_width_hz
            .unwrap_or_else(|| (10.0 * g).min(0.6 * params.larmor_hz).max(6.0 * g));
        FitOptions {
            lo_hz: (params.larmor_hz - half).max(0.0),
            hi_hz: params.larmor_hz + half,
            mirror: self.mirror,
        }
    }
}

/// Welch PSD of `S_y_out` averaged over `realizations` simulated runs. Only
/// per-realization periodogram sums are held in memory.
pub fn simulated_spectrum(
    params: &ExperimentParams,
    config: &SimConfig,
    realizations: usize,
    analysis: &AnalysisOptions,
) -> Result<Spectrum> {
    let welch = Welch::new(analysis.welch(params, config.dt_s))?;
    let n = config.n_samples();
    if welch.options().segment_len > n {
        return Err(Error::SegmentTooLong {
            segment: welch.options().segment_len,
            len: n,
        });
    }
    let parts = sde::map_ensemble(params, config, realizations, |t| {
        welch.accumulate(&t.sy_out, t.dt_s)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    welch.finish(&parts, config.dt_s)
}

/// Fits and summary of one spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumAnalysis {
    pub fit: LorentzianFit,
    /// Tail-corrected summation of the excess, a cross-check of `fit.area`.
    pub direct_area: f64,
}

pub fn analyze_spectrum(
    spectrum: &Spectrum,
    params: &ExperimentParams,
    analysis: &AnalysisOptions,
) -> Result<SpectrumAnalysis> {
    let fit = fit_lorentzian(spectrum, &analysis.fit_options(params))?;
    let direct_area = direct_area(spectrum, &fit);
    Ok(SpectrumAnalysis { fit, direct_area })
}

/// Coherent and squeezed analyses at one parameter set and their
/// decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAnalysis {
    pub coherent: SpectrumAnalysis,
    pub squeezed: SpectrumAnalysis,
    pub areas: NoiseAreas,
}

/// Decomposes a coherent/squeezed pair of fits. The shot-noise level is the
/// fitted coherent floor; `Γ` is taken from `params`.
pub fn decompose_pair(
    params: &ExperimentParams,
    coherent: SpectrumAnalysis,
    squeezed: SpectrumAnalysis,
    eps_z_stderr: f64,
) -> Result<PairAnalysis> {
    let areas = decompose(
        coherent.fit.area_measured(),
        squeezed.fit.area_measured(),
        Measured::new(params.eps_z, eps_z_stderr),
    )?
    .with_inferred_pna(coherent.fit.floor_measured(), Measured::exact(params.gamma_hz))?;
    Ok(PairAnalysis {
        coherent,
        squeezed,
        areas,
    })
}

/// Coherent (`seeds[0]`) and squeezed (`seeds[1]`) spectra for `params`
/// with their fits.
pub fn simulate_spectra(
    params: &ExperimentParams,
    settings: &SimSettings,
    realizations: usize,
    analysis: &AnalysisOptions,
    seeds: [u64; 2],
) -> Result<([SpectrumAnalysis; 2], [Spectrum; 2])> {
    let coherent_params = params.coherent();
    let coh = simulated_spectrum(
        &coherent_params,
        &settings.config(&coherent_params, seeds[0]),
        realizations,
        analysis,
    )?;
    let sq = simulated_spectrum(params, &settings.config(params, seeds[1]), realizations, analysis)?;
    let fits = [
        analyze_spectrum(&coh, &coherent_params, analysis)?,
        analyze_spectrum(&sq, params, analysis)?,
    ];
    Ok((fits, [coh, sq]))
}

/// Runs [`simulate_spectra`] and decomposes the fitted areas.
pub fn simulate_pair(
    params: &ExperimentParams,
    settings: &SimSettings,
    realizations: usize,
    analysis: &AnalysisOptions,
    seeds: [u64; 2],
    eps_z_stderr: f64,
) -> Result<(PairAnalysis, [Spectrum; 2])> {
    let ([coherent, squeezed], spectra) = simulate_spectra(params, settings, realizations, analysis, seeds)?;
    let pair = decompose_pair(params, coherent, squeezed, eps_z_stderr)?;
    Ok((pair, spectra))
}
