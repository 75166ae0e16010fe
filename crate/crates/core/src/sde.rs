//! Time-domain Monte Carlo integration of the spin Langevin equations.
//!
//! The state `(J_y, J_z)` obeys
//!
//! ```text
//! dJ_z = ( Ω J_y − Γ J_z) dt + dW_z
//! dJ_y = (−Ω J_z − Γ J_y) dt + dW_y + a J_x S_z_in dt
//! ```
//!
//! with `⟨dW²⟩ = (Γ J_x + k_tech) dt` and `S_z_in` white with two-sided
//! density `ε_z S_x/2`. The detected output is
//! `S_y_out = S_y_in + a S_x J_z` with `S_y_in` white of density `ε_y S_x/2`.
//!
//! The default integrator advances the linear system with its exact
//! discrete-time transition (rotation, decay and the exact integrated noise
//! covariance), so it is exact in distribution for any step. Euler–Maruyama
//! is kept for comparison; note its amplification factor per step is
//! `sqrt((1−Γdt)² + Ω²dt²)`, which exceeds one unless `dt < 2Γ/Ω²`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::lab_stationary_covariance;
use crate::error::{Error, Result};
use crate::model::{validate, Context, ExperimentParams, Trajectory, Warning};
use crate::rng::{Channel, CounterRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Integrates the equations of motion directly.
    #[default]
    Lab,
    /// Integrates the complex envelope `(J_y + iJ_z)e^{−iΩt}` with
    /// rotating-wave noise, then reconstructs lab-frame samples. The
    /// narrowband spectrum is exact in this frame.
    Rotating,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpin {
    /// `J_y = J_z = 0`.
    Deterministic,
    /// Independent Gaussians with the coherent-spin-state variance `J_x/2`.
    Thermal,
    /// Draw from the exact stationary distribution of the configured noise.
    #[default]
    Stationary,
    Fixed { jy: f64, jz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Exact,
    EulerMaruyama,
}

/// Switches for the individual noise inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSources {
    /// Quantum and technical Langevin forces.
    pub langevin: bool,
    /// Back-action drive by `S_z_in`.
    pub sz_in: bool,
    /// Optical shot noise of the detected `S_y_in`.
    pub sy_in: bool,
}

impl Default for NoiseSources {
    fn default() -> Self {
        Self {
            langevin: true,
            sz_in: true,
            sy_in: true,
        }
    }
}

impl NoiseSources {
    pub const NONE: Self = Self {
        langevin: false,
        sz_in: false,
        sy_in: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub duration_s: f64,
    pub dt_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub frame: Frame,
    #[serde(default)]
    pub initial_spin: InitialSpin,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub sources: NoiseSources,
    /// If set, `S_z_in` drives the spin only for `t` in `[start, end)`.
    #[serde(default)]
    pub sz_window_s: Option<[f64; 2]>,
}

impl SimConfig {
    /// Lab-frame configuration at the largest step allowed for `params`.
    pub fn for_params(params: &ExperimentParams, duration_s: f64, seed: u64) -> Self {
        Self {
            duration_s,
            dt_s: max_step(params, Frame::Lab),
            seed,
            frame: Frame::Lab,
            initial_spin: InitialSpin::Stationary,
            integrator: Integrator::Exact,
            sources: NoiseSources::default(),
            sz_window_s: None,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }
}

/// Step limit: 50 steps per Larmor period in the lab frame, 50 per decay
/// time `1/Γ` (Γ in Hz) in the rotating frame.
pub fn max_step(params: &ExperimentParams, frame: Frame) -> f64 {
    match frame {
        Frame::Lab => 1.0 / (50.0 * params.larmor_hz),
        Frame::Rotating => 1.0 / (50.0 * params.gamma_hz),
    }
}

/// Validates a parameter/config pair for time-domain use and returns the
/// non-fatal warnings.
pub fn check(params: &ExperimentParams, config: &SimConfig) -> Result<Vec<Warning>> {
    let mut warnings = validate(params, Context::Simulation)?.warnings;
    if !(config.dt_s > 0.0) || !config.dt_s.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "dt_s must be positive (got {})",
            config.dt_s
        )));
    }
    if !(config.duration_s > 0.0) || !config.duration_s.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "duration_s must be positive (got {})",
            config.duration_s
        )));
    }
    let max_s = max_step(params, config.frame);
    if config.dt_s > max_s * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            dt_s: config.dt_s,
            max_s,
        });
    }
    if config.n_samples() < 2 {
        return Err(Error::InvalidConfig(
            "duration must span at least two steps".into(),
        ));
    }
    if let Some([start, end]) = config.sz_window_s {
        if !(start <= end) {
            return Err(Error::InvalidConfig(format!(
                "sz_window_s start {start} after end {end}"
            )));
        }
    }
    let min_s = 10.0 / params.gamma_hz;
    if config.duration_s < min_s {
        let w = Warning::DurationTooShort {
            duration_s: config.duration_s,
            min_s,
        };
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(warnings)
}

/// Per-step variance of the sampled `S_z_in`, `ε_z S_x/(2 dt)`.
pub fn sz_step_variance(params: &ExperimentParams, dt_s: f64) -> f64 {
    params.eps_z * params.flux_sx / (2.0 * dt_s)
}

/// Per-step variance of the sampled `S_y_in`, `ε_y S_x/(2 dt)`.
pub fn sy_step_variance(params: &ExperimentParams, dt_s: f64) -> f64 {
    params.eps_y * params.flux_sx / (2.0 * dt_s)
}

/// Runs realization 0 of the stream keyed by `config.seed`.
pub fn simulate(params: &ExperimentParams, config: &SimConfig) -> Result<Trajectory> {
    check(params, config)?;
    Ok(run(params, config, 0))
}

/// Runs one realization of the stream keyed by `config.seed`.
pub fn simulate_realization(
    params: &ExperimentParams,
    config: &SimConfig,
    realization: u32,
) -> Result<Trajectory> {
    check(params, config)?;
    Ok(run(params, config, realization))
}

/// `n` independent realizations; realization `i` uses stream `i` under
/// `config.seed`. The output does not depend on the worker count.
pub fn simulate_ensemble(
    params: &ExperimentParams,
    config: &SimConfig,
    n_realizations: usize,
) -> Result<Vec<Trajectory>> {
    map_ensemble(params, config, n_realizations, |t| t)
}

/// Runs `n` realizations in parallel and maps each through `f` as soon as it
/// is produced, so that only the mapped values are held in memory. Results
/// are returned in realization order.
pub fn map_ensemble<T, F>(
    params: &ExperimentParams,
    config: &SimConfig,
    n_realizations: usize,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Trajectory) -> T + Sync,
{
    if n_realizations == 0 {
        return Err(Error::InvalidConfig("n_realizations must be >= 1".into()));
    }
    let n = u32::try_from(n_realizations)
        .map_err(|_| Error::InvalidConfig("too many realizations".into()))?;
    check(params, config)?;
    Ok((0..n)
        .into_par_iter()
        .map(|r| f(run(params, config, r)))
        .collect())
}

struct Rates {
    gamma: f64,
    omega: f64,
    /// Isotropic Langevin strength, quantum plus technical.
    d_f: f64,
    /// Back-action strength on `J_y`.
    d_ba: f64,
    sy_sigma: f64,
    readout: f64,
}

impl Rates {
    fn new(p: &ExperimentParams, c: &SimConfig) -> Self {
        let src = c.sources;
        Self {
            gamma: p.gamma_angular(),
            omega: p.larmor_angular(),
            d_f: if src.langevin {
                p.langevin_strength() + p.tech_noise_k
            } else {
                0.0
            },
            d_ba: if src.sz_in {
                p.backaction_strength()
            } else {
                0.0
            },
            sy_sigma: if src.sy_in {
                sy_step_variance(p, c.dt_s).sqrt()
            } else {
                0.0
            },
            readout: p.coupling_a * p.flux_sx,
        }
    }
}

/// Lower Cholesky factor of a symmetric 2×2 covariance.
fn cholesky2(m: [[f64; 2]; 2]) -> [f64; 3] {
    let l11 = m[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { m[0][1] / l11 } else { 0.0 };
    let l22 = (m[1][1] - l21 * l21).max(0.0).sqrt();
    [l11, l21, l22]
}

/// Covariance of `∫₀ʰ e^{As} e_y e_yᵀ e^{Aᵀs} ds` for unit back-action
/// strength, with `A` the lab-frame drift matrix.
fn backaction_step_covariance(gamma: f64, omega: f64, h: f64) -> [[f64; 2]; 2] {
    let i0 = -(-2.0 * gamma * h).exp_m1() / (2.0 * gamma);
    let rate = Complex64::new(-2.0 * gamma, 2.0 * omega);
    let k = ((rate * h).exp() - 1.0) / rate;
    [
        [0.5 * (i0 + k.re), 0.5 * k.im],
        [0.5 * k.im, 0.5 * (i0 - k.re)],
    ]
}

fn draw_initial(
    params: &ExperimentParams,
    config: &SimConfig,
    rates: &Rates,
    rng: &CounterRng,
) -> (f64, f64) {
    match config.initial_spin {
        InitialSpin::Deterministic => (0.0, 0.0),
        InitialSpin::Fixed { jy, jz } => (jy, jz),
        InitialSpin::Thermal => {
            let (x, y) = rng.normal_pair(0, Channel::Initial);
            let s = (params.spin_jx / 2.0).sqrt();
            (s * x, s * y)
        }
        InitialSpin::Stationary => {
            let cov = match config.frame {
                Frame::Lab => lab_stationary_covariance(
                    rates.d_f + rates.d_ba,
                    rates.d_f,
                    rates.gamma,
                    rates.omega,
                ),
                Frame::Rotating => {
                    let v = (rates.d_f + 0.5 * rates.d_ba) / (2.0 * rates.gamma);
                    [[v, 0.0], [0.0, v]]
                }
            };
            let [l11, l21, l22] = cholesky2(cov);
            let (x, y) = rng.normal_pair(0, Channel::Initial);
            (l11 * x, l21 * x + l22 * y)
        }
    }
}

/// One realization; inputs must already be checked.
fn run(params: &ExperimentParams, config: &SimConfig, realization: u32) -> Trajectory {
    let n = config.n_samples();
    let h = config.dt_s;
    let rng = CounterRng::new(config.seed, realization);
    let rates = Rates::new(params, config);
    let mut jy = vec![0.0; n];
    let mut jz = vec![0.0; n];
    let mut sy_out = vec![0.0; n];

    // detection noise: one Box–Muller pair covers two consecutive samples
    for i in (0..n).step_by(2) {
        let (x, y) = if rates.sy_sigma > 0.0 {
            rng.normal_pair((i / 2) as u64, Channel::Detection)
        } else {
            (0.0, 0.0)
        };
        sy_out[i] = rates.sy_sigma * x;
        if i + 1 < n {
            sy_out[i + 1] = rates.sy_sigma * y;
        }
    }

    if params.spin_jx > 0.0 {
        let sz_active = |step: usize| match config.sz_window_s {
            None => true,
            Some([start, end]) => {
                let t = step as f64 * h;
                t >= start && t < end
            }
        };
        let (y0, z0) = draw_initial(params, config, &rates, &rng);
        let stepper = Stepper::new(&rates, config, h);
        match config.frame {
            Frame::Lab => stepper.run_lab(&rng, (y0, z0), &sz_active, &mut jy, &mut jz),
            Frame::Rotating => {
                stepper.run_rotating(&rng, (y0, z0), &sz_active, &mut jy, &mut jz)
            }
        }
        for (s, z) in sy_out.iter_mut().zip(&jz) {
            *s += rates.readout * z;
        }
    }

    Trajectory {
        dt_s: h,
        jy,
        jz,
        sy_out,
        seed: config.seed,
        realization,
    }
}

/// Precomputed per-step coefficients.
struct Stepper {
    integrator: Integrator,
    langevin: bool,
    backaction: bool,
    h: f64,
    gamma: f64,
    omega: f64,
    decay: f64,
    cos: f64,
    sin: f64,
    sigma_f: f64,
    /// Lab frame: Cholesky factor of the back-action step covariance.
    /// Rotating frame: `[σ, 0, σ]` per envelope quadrature.
    ba_chol: [f64; 3],
}

impl Stepper {
    fn new(rates: &Rates, config: &SimConfig, h: f64) -> Self {
        let gamma = rates.gamma;
        let omega = rates.omega;
        let (sigma_f, ba_chol) = match config.integrator {
            Integrator::Exact => {
                let var_unit = -(-2.0 * gamma * h).exp_m1() / (2.0 * gamma);
                let sigma_f = (rates.d_f * var_unit).sqrt();
                let ba = match config.frame {
                    Frame::Lab => {
                        let q = backaction_step_covariance(gamma, omega, h);
                        let [a, b, c] = cholesky2(q);
                        let s = rates.d_ba.sqrt();
                        [a * s, b * s, c * s]
                    }
                    Frame::Rotating => {
                        let s = (0.5 * rates.d_ba * var_unit).sqrt();
                        [s, 0.0, s]
                    }
                };
                (sigma_f, ba)
            }
            Integrator::EulerMaruyama => {
                let sigma_f = (rates.d_f * h).sqrt();
                let ba = match config.frame {
                    Frame::Lab => [(rates.d_ba * h).sqrt(), 0.0, 0.0],
                    Frame::Rotating => {
                        let s = (0.5 * rates.d_ba * h).sqrt();
                        [s, 0.0, s]
                    }
                };
                (sigma_f, ba)
            }
        };
        let (sin, cos) = (omega * h).sin_cos();
        Self {
            integrator: config.integrator,
            langevin: rates.d_f > 0.0,
            backaction: rates.d_ba > 0.0,
            h,
            gamma,
            omega,
            decay: (-gamma * h).exp(),
            cos,
            sin,
            sigma_f,
            ba_chol,
        }
    }

    #[inline]
    fn forces(
        &self,
        rng: &CounterRng,
        step: usize,
        sz_on: bool,
    ) -> ((f64, f64), (f64, f64)) {
        let f = if self.langevin {
            let (a, b) = rng.normal_pair(step as u64, Channel::Langevin);
            (self.sigma_f * a, self.sigma_f * b)
        } else {
            (0.0, 0.0)
        };
        let ba = if self.backaction && sz_on {
            let (a, b) = rng.normal_pair(step as u64, Channel::Backaction);
            let [l11, l21, l22] = self.ba_chol;
            (l11 * a, l21 * a + l22 * b)
        } else {
            (0.0, 0.0)
        };
        (f, ba)
    }

    fn run_lab(
        &self,
        rng: &CounterRng,
        start: (f64, f64),
        sz_active: &dyn Fn(usize) -> bool,
        jy: &mut [f64],
        jz: &mut [f64],
    ) {
        let (mut y, mut z) = start;
        let n = jy.len();
        for i in 0..n {
            jy[i] = y;
            jz[i] = z;
            if i + 1 == n {
                break;
            }
            let ((fy, fz), (by, bz)) = self.forces(rng, i, sz_active(i));
            match self.integrator {
                Integrator::Exact => {
                    let ny = self.decay * (self.cos * y - self.sin * z);
                    let nz = self.decay * (self.sin * y + self.cos * z);
                    y = ny + fy + by;
                    z = nz + fz + bz;
                }
                Integrator::EulerMaruyama => {
                    let dy = (-self.omega * z - self.gamma * y) * self.h;
                    let dz = (self.omega * y - self.gamma * z) * self.h;
                    y += dy + fy + by;
                    z += dz + fz;
                }
            }
        }
    }

    fn run_rotating(
        &self,
        rng: &CounterRng,
        start: (f64, f64),
        sz_active: &dyn Fn(usize) -> bool,
        jy: &mut [f64],
        jz: &mut [f64],
    ) {
        // envelope coincides with the lab state at t = 0
        let (mut uy, mut uz) = start;
        let keep = match self.integrator {
            Integrator::Exact => self.decay,
            Integrator::EulerMaruyama => 1.0 - self.gamma * self.h,
        };
        let n = jy.len();
        for i in 0..n {
            let (s, c) = (self.omega * self.h * i as f64).sin_cos();
            jy[i] = c * uy - s * uz;
            jz[i] = s * uy + c * uz;
            if i + 1 == n {
                break;
            }
            let ((fy, fz), (by, bz)) = self.forces(rng, i, sz_active(i));
            uy = keep * uy + fy + by;
            uz = keep * uz + fz + bz;
        }
    }
}

/// Empirical autocorrelation envelope of `J_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub lags_s: Vec<f64>,
    /// `⟨J_z(t+τ)J_z(t)⟩` envelope, i.e. the correlation amplitude with the
    /// Larmor oscillation `cos(Ωτ)` removed.
    pub envelope: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_realizations: usize,
}

/// Estimates the decay of spin correlations with the probe decoupled.
///
/// Each realization contributes `Re[C(τ)e^{−iΩτ}]/2` where
/// `C(τ) = ⟨c(t+τ) c*(t)⟩` for `c = J_y + iJ_z`; for isotropic forcing this
/// equals the envelope of the `J_z` autocorrelation. Errors are the
/// standard error across realizations.
pub fn decay_autocorrelation(
    params: &ExperimentParams,
    config: &SimConfig,
    lags_s: &[f64],
    n_realizations: usize,
) -> Result<Autocorrelation> {
    if params.coupling_a != 0.0 {
        return Err(Error::InvalidConfig(
            "decay autocorrelation requires coupling_a = 0".into(),
        ));
    }
    if n_realizations < 2 {
        return Err(Error::InsufficientData(
            "need at least two realizations for error bars".into(),
        ));
    }
    check(params, config)?;
    let n = config.n_samples();
    let lag_steps: Vec<usize> = lags_s
        .iter()
        .map(|&t| (t / config.dt_s).round().max(0.0) as usize)
        .collect();
    if let Some(&max) = lag_steps.iter().max() {
        if max + 2 > n {
            return Err(Error::InsufficientData(format!(
                "lag of {max} steps does not fit in {n} samples"
            )));
        }
    } else {
        return Err(Error::EmptyInput);
    }
    let omega = params.larmor_angular();
    let per_real = map_ensemble(params, config, n_realizations, |t| {
        lag_steps
            .iter()
            .map(|&k| {
                let m = n - k;
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    let later = Complex64::new(t.jy[i + k], t.jz[i + k]);
                    let now = Complex64::new(t.jy[i], -t.jz[i]);
                    acc += later * now;
                }
                let c = acc / m as f64;
                let phase = Complex64::from_polar(1.0, -omega * k as f64 * config.dt_s);
                0.5 * (c * phase).re
            })
            .collect::<Vec<f64>>()
    })?;
    let r = per_real.len() as f64;
    let mut envelope = Vec::with_capacity(lag_steps.len());
    let mut stderr = Vec::with_capacity(lag_steps.len());
    for j in 0..lag_steps.len() {
        let mean = per_real.iter().map(|v| v[j]).sum::<f64>() / r;
        let var = per_real.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (r - 1.0);
        envelope.push(mean);
        stderr.push((var / r).sqrt());
    }
    Ok(Autocorrelation {
        lags_s: lag_steps
            .iter()
            .map(|&k| k as f64 * config.dt_s)
            .collect(),
        envelope,
        stderr,
        n_realizations,
    })
}

/// Time average of `J_z²` over samples `start..`.
pub fn mean_square_jz(t: &Trajectory, start: usize) -> f64 {
    let s = &t.jz[start.min(t.jz.len())..];
    s.iter().map(|z| z * z).sum::<f64>() / s.len().max(1) as f64
}

/// Angular Larmor phase advanced over `duration_s`; handy for checks.
pub fn larmor_phase(params: &ExperimentParams, duration_s: f64) -> f64 {
    2.0 * PI * params.larmor_hz * duration_s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ExperimentParams {
        ExperimentParams {
            coupling_a: 3.8e-10,
            flux_sx: 1e12,
            spin_jx: 1e10,
            larmor_hz: 2400.0,
            gamma_hz: 80.0,
            eps_y: 0.5,
            eps_z: 7.0,
            tech_noise_k: 0.0,
        }
    }

    fn quiet(p: &ExperimentParams, integrator: Integrator, dt: f64, dur: f64) -> SimConfig {
        SimConfig {
            duration_s: dur,
            dt_s: dt,
            seed: 1,
            frame: Frame::Lab,
            initial_spin: InitialSpin::Fixed {
                jy: p.spin_jx / 2.0,
                jz: 0.0,
            },
            integrator,
            sources: NoiseSources::NONE,
            sz_window_s: None,
        }
    }

    #[test]
    fn exact_scheme_reproduces_damped_precession() {
        let p = ExperimentParams {
            coupling_a: 0.0,
            ..params()
        };
        let cfg = quiet(&p, Integrator::Exact, max_step(&p, Frame::Lab), 0.02);
        let t = simulate(&p, &cfg).unwrap();
        let amp = p.spin_jx / 2.0;
        for (i, z) in t.jz.iter().enumerate() {
            let time = i as f64 * cfg.dt_s;
            let exact =
                amp * (-p.gamma_angular() * time).exp() * (p.larmor_angular() * time).sin();
            assert!((z - exact).abs() < 1e-9 * amp, "step {i}");
        }
    }

    #[test]
    fn euler_error_is_first_order() {
        let p = ExperimentParams {
            coupling_a: 0.0,
            ..params()
        };
        let amp = p.spin_jx / 2.0;
        let horizon = 1e-3;
        let err = |dt: f64| {
            let t = simulate(&p, &quiet(&p, Integrator::EulerMaruyama, dt, horizon)).unwrap();
            let last = t.jz.len() - 1;
            let time = last as f64 * dt;
            let exact =
                amp * (-p.gamma_angular() * time).exp() * (p.larmor_angular() * time).sin();
            (t.jz[last] - exact).abs() / amp
        };
        let dt0 = max_step(&p, Frame::Lab) / 8.0;
        let (e1, e2) = (err(dt0), err(dt0 / 2.0));
        assert!(e1 < 0.05, "{e1}");
        let order = (e1 / e2).log2();
        assert!((order - 1.0).abs() < 0.15, "order {order}");
    }

    #[test]
    fn determinism_and_stream_identity() {
        let p = params();
        let cfg = SimConfig::for_params(&p, 0.01, 77);
        let a = simulate(&p, &cfg).unwrap();
        let b = simulate(&p, &cfg).unwrap();
        assert_eq!(a, b);
        let ens = simulate_ensemble(&p, &cfg, 1).unwrap();
        assert_eq!(ens[0], a);
        let other = simulate_realization(&p, &cfg, 1).unwrap();
        assert_ne!(other.sy_out, a.sy_out);
    }

    #[test]
    fn step_limit_enforced() {
        let p = params();
        let mut cfg = SimConfig::for_params(&p, 0.2, 0);
        cfg.dt_s *= 1.5;
        assert!(matches!(
            simulate(&p, &cfg),
            Err(Error::StepTooLarge { .. })
        ));
        cfg.frame = Frame::Rotating;
        assert!(simulate(&p, &cfg).is_ok());
    }

    #[test]
    fn short_runs_warn_but_succeed() {
        let p = params();
        let cfg = SimConfig::for_params(&p, 0.01, 0);
        let w = check(&p, &cfg).unwrap();
        assert!(w
            .iter()
            .any(|w| matches!(w, Warning::DurationTooShort { .. })));
    }

    #[test]
    fn no_atoms_gives_pure_shot_noise() {
        let p = ExperimentParams {
            spin_jx: 0.0,
            ..params()
        };
        let t = simulate(&p, &SimConfig::for_params(&p, 0.2, 3)).unwrap();
        assert!(t.jz.iter().all(|&z| z == 0.0));
        let var = t.sy_out.iter().map(|s| s * s).sum::<f64>() / t.len() as f64;
        let expected = sy_step_variance(&p, t.dt_s);
        assert!((var / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn sz_step_variance_is_density_invariant() {
        let p = params();
        let v1 = sz_step_variance(&p, 1e-5);
        let v2 = sz_step_variance(&p, 2e-5);
        assert!((v1 / (2.0 * v2) - 1.0).abs() < 1e-15);
        assert!((v1 * 1e-5 / (p.eps_z * p.flux_sx / 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn backaction_step_covariance_matches_quadrature() {
        let (g, w, h) = (500.0, 15000.0, 8e-6);
        let q = backaction_step_covariance(g, w, h);
        let n = 20_000;
        let mut m = [[0.0; 2]; 2];
        for i in 0..n {
            let s = (i as f64 + 0.5) * h / n as f64;
            let e = (-g * s).exp();
            let v = [e * (w * s).cos(), e * (w * s).sin()];
            for a in 0..2 {
                for b in 0..2 {
                    m[a][b] += v[a] * v[b] * h / n as f64;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                assert!((q[a][b] - m[a][b]).abs() < 1e-8 * q[0][0], "{a}{b}");
            }
        }
    }

    #[test]
    fn stationary_start_has_stationary_variance() {
        let p = params();
        let cfg = SimConfig {
            duration_s: 2.0 * max_step(&p, Frame::Lab),
            ..SimConfig::for_params(&p, 1.0, 5)
        };
        let ens = simulate_ensemble(&p, &cfg, 4000).unwrap();
        let var = ens.iter().map(|t| t.jz[0] * t.jz[0]).sum::<f64>() / ens.len() as f64;
        let expected = crate::analytic::variance_budget(&p).unwrap().total();
        assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
    }

    #[test]
    fn autocorrelation_requires_decoupled_probe() {
        let p = params();
        let cfg = SimConfig::for_params(&p, 0.5, 0);
        assert!(matches!(
            decay_autocorrelation(&p, &cfg, &[0.0], 2),
            Err(Error::InvalidConfig(_))
        ));
        let q = ExperimentParams {
            coupling_a: 0.0,
            ..p
        };
        assert!(matches!(
            decay_autocorrelation(&q, &cfg, &[0.0], 1),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            decay_autocorrelation(&q, &cfg, &[10.0], 2),
            Err(Error::InsufficientData(_))
        ));
    }
}
