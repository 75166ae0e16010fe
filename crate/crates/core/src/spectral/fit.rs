//! Lorentzian-plus-floor fitting of a resonance in a PSD.
//!
//! The model is
//! `floor + (A/π)·γ·[1/((f−f₀)²+γ²) + m/((f+f₀)²+γ²)]`
//! with `m = 1` when the mirror resonance at `−f₀` is included. `A` is the
//! area of the full Lorentzian at `+f₀` over ordinary frequency, so a
//! window that clips the wings needs no further correction.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{Spectrum, CONVENTION_TAG};
use crate::spectral::areas::Measured;

pub const MIN_BINS: usize = 20;
const MAX_ITER: usize = 500;
const RESTART_FACTORS: [f64; 2] = [0.5, 2.0];
const WEIGHT_PASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(rename = "lo_Hz")]
    pub lo_hz: f64,
    #[serde(rename = "hi_Hz")]
    pub hi_hz: f64,
    #[serde(default = "yes")]
    pub mirror: bool,
}

fn yes() -> bool {
    true
}

impl FitOptions {
    pub fn window(lo_hz: f64, hi_hz: f64) -> Self {
        Self {
            lo_hz,
            hi_hz,
            mirror: true,
        }
    }

    pub fn around(center_hz: f64, half_width_hz: f64) -> Self {
        Self::window(center_hz - half_width_hz, center_hz + half_width_hz)
    }
}

/// Parameter order in `covariance`.
pub const PARAM_NAMES: [&str; 4] = ["floor", "center_Hz", "hwhm_Hz", "area"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub convention: String,
    pub floor: f64,
    #[serde(rename = "center_Hz")]
    pub center_hz: f64,
    #[serde(rename = "hwhm_Hz")]
    pub hwhm_hz: f64,
    pub area: f64,
    pub covariance: [[f64; 4]; 4],
    /// Weighted residual sum of squares per degree of freedom.
    pub chi2_red: f64,
    pub n_bins: usize,
    #[serde(rename = "window_Hz")]
    pub window_hz: [f64; 2],
    pub mirror: bool,
    pub iterations: usize,
    pub restarts: usize,
}

impl LorentzianFit {
    /// Peak height of the `+f₀` Lorentzian above the floor.
    pub fn height(&self) -> f64 {
        self.area / (PI * self.hwhm_hz)
    }

    pub fn stderr(&self, index: usize) -> f64 {
        self.covariance[index][index].max(0.0).sqrt()
    }

    pub fn area_measured(&self) -> Measured {
        Measured::new(self.area, self.stderr(3))
    }

    pub fn floor_measured(&self) -> Measured {
        Measured::new(self.floor, self.stderr(0))
    }

    pub fn model(&self, freq_hz: f64) -> f64 {
        model(
            &[self.floor, self.center_hz, self.hwhm_hz, self.area],
            self.mirror_weight(),
            freq_hz,
        )
    }

    fn mirror_weight(&self) -> f64 {
        if self.mirror {
            1.0
        } else {
            0.0
        }
    }

    /// Fraction of the `+f₀` Lorentzian area inside `[lo, hi]`.
    pub fn fraction_within(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let g = self.hwhm_hz;
        (((hi_hz - self.center_hz) / g).atan() - ((lo_hz - self.center_hz) / g).atan()) / PI
    }
}

fn model(theta: &[f64; 4], mirror: f64, f: f64) -> f64 {
    let [floor, f0, g, area] = *theta;
    let u = f - f0;
    let v = f + f0;
    floor + area / PI * g * (1.0 / (u * u + g * g) + mirror / (v * v + g * g))
}

fn gradient(theta: &[f64; 4], mirror: f64, f: f64) -> Vector4<f64> {
    let [_, f0, g, area] = *theta;
    let u = f - f0;
    let v = f + f0;
    let d1 = u * u + g * g;
    let d2 = v * v + g * g;
    Vector4::new(
        1.0,
        area * g / PI * (2.0 * u / (d1 * d1) - mirror * 2.0 * v / (d2 * d2)),
        area / PI * ((u * u - g * g) / (d1 * d1) + mirror * (v * v - g * g) / (d2 * d2)),
        g / PI * (1.0 / d1 + mirror / d2),
    )
}

struct Problem<'a> {
    f: &'a [f64],
    y: &'a [f64],
    mirror: f64,
    n_eff: f64,
}

impl Problem<'_> {
    fn weights(&self, theta: &[f64; 4]) -> Vec<f64> {
        self.f
            .iter()
            .map(|&f| {
                let m = model(theta, self.mirror, f);
                self.n_eff / (m * m)
            })
            .collect()
    }

    fn chi2(&self, theta: &[f64; 4], w: &[f64]) -> f64 {
        self.f
            .iter()
            .zip(self.y)
            .zip(w)
            .map(|((&f, &y), &w)| {
                let r = y - model(theta, self.mirror, f);
                w * r * r
            })
            .sum()
    }

    /// Levenberg–Marquardt in parameters scaled by `scale`.
    fn solve(&self, start: [f64; 4], w: &[f64], scale: [f64; 4]) -> Option<([f64; 4], usize)> {
        let mut theta = start;
        let mut chi2 = self.chi2(&theta, w);
        let mut lambda = 1e-3;
        for iter in 1..=MAX_ITER {
            let mut h = Matrix4::zeros();
            let mut g = Vector4::zeros();
            for ((&f, &y), &wi) in self.f.iter().zip(self.y).zip(w) {
                let mut j = gradient(&theta, self.mirror, f);
                for k in 0..4 {
                    j[k] *= scale[k];
                }
                let r = y - model(&theta, self.mirror, f);
                h += wi * j * j.transpose();
                g += wi * r * j;
            }
            loop {
                let mut a = h;
                for k in 0..4 {
                    a[(k, k)] *= 1.0 + lambda;
                }
                let step = a.cholesky()?.solve(&g);
                let mut trial = theta;
                for k in 0..4 {
                    trial[k] += step[k] * scale[k];
                }
                let c = if trial[2] > 0.0 {
                    self.chi2(&trial, w)
                } else {
                    f64::INFINITY
                };
                if c.is_finite() && c <= chi2 {
                    let small = (0..4).all(|k| (step[k] * scale[k]).abs() <= 1e-12 * (theta[k].abs() + scale[k]));
                    let flat = chi2 - c <= 1e-15 * chi2;
                    theta = trial;
                    chi2 = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    if small || (flat && lambda <= 1e-9) {
                        return Some((theta, iter));
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > 1e12 {
                    // no descent direction left at working precision
                    return Some((theta, iter));
                }
            }
            if !theta.iter().all(|v| v.is_finite()) {
                return None;
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy)]
struct Guess {
    floor: f64,
    center: f64,
    hwhm: f64,
    area: f64,
}

fn smooth(y: &[f64], half: usize) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Locates the resonance on smoothed data; estimates come from the half-
/// maximum crossings and the first moment of the excess above the floor.
fn detect(f: &[f64], y: &[f64], n_eff: f64, df: f64) -> Result<Guess> {
    let n = y.len();
    let s = smooth(y, 2);
    let edge = (n / 8).max(3);
    let floor = median(s[..edge].iter().chain(&s[n - edge..]).copied().collect());
    let (peak, &top) = s
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let excess = top - floor;
    let noise = floor.abs() / n_eff.max(1.0).sqrt();
    if !(excess > 3.0 * noise) || excess <= 0.0 {
        return Err(Error::PeakNotFound { excess, noise });
    }
    let half = floor + 0.5 * excess;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = peak;
        for i in range {
            if s[i] < half {
                let t = (s[prev] - half) / (s[prev] - s[i]);
                return Some(f[prev] + t * (f[i] - f[prev]));
            }
            prev = i;
        }
        None
    };
    let right = crossing(&mut (peak + 1..n));
    let left = crossing(&mut (0..peak).rev());
    let hwhm = match (left, right) {
        (Some(l), Some(r)) => 0.5 * (r - l),
        (Some(l), None) => f[peak] - l,
        (None, Some(r)) => r - f[peak],
        (None, None) => 0.25 * (f[n - 1] - f[0]),
    }
    .max(df);
    let (mut m0, mut m1) = (0.0, 0.0);
    for (&fi, &si) in f.iter().zip(&s) {
        if (fi - f[peak]).abs() <= 2.0 * hwhm {
            let e = (si - floor).max(0.0);
            m0 += e;
            m1 += e * fi;
        }
    }
    let center = if m0 > 0.0 { m1 / m0 } else { f[peak] };
    Ok(Guess {
        floor,
        center,
        hwhm,
        area: PI * excess * hwhm,
    })
}

/// Weighted nonlinear least-squares fit inside `opts`' window.
pub fn fit_lorentzian(spectrum: &Spectrum, opts: &FitOptions) -> Result<LorentzianFit> {
    spectrum.check()?;
    let range = spectrum.range(opts.lo_hz, opts.hi_hz);
    let n = range.len();
    if n < MIN_BINS {
        return Err(Error::InsufficientData(format!(
            "{n} bins in fit window, need at least {MIN_BINS}"
        )));
    }
    let f = &spectrum.freq_hz[range.clone()];
    let y = &spectrum.psd[range];
    let n_eff = spectrum.n_eff;
    if !(n_eff > 0.0) {
        return Err(Error::InvalidConfig("spectrum n_eff must be positive".into()));
    }
    let guess = detect(f, y, n_eff, spectrum.bin_width())?;
    let problem = Problem {
        f,
        y,
        mirror: if opts.mirror { 1.0 } else { 0.0 },
        n_eff,
    };

    let attempt = |hwhm: f64| -> Option<([f64; 4], usize)> {
        let start = [guess.floor, guess.center, hwhm, guess.area * hwhm / guess.hwhm];
        let scale = [
            guess.floor.abs().max(1e-300),
            guess.hwhm,
            guess.hwhm,
            guess.area.abs().max(1e-300),
        ];
        let mut theta = start;
        let mut iterations = 0;
        for _ in 0..WEIGHT_PASSES {
            let w = problem.weights(&theta);
            if w.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let (t, it) = problem.solve(theta, &w, scale)?;
            theta = t;
            iterations += it;
        }
        let inside = theta[1] >= f[0] && theta[1] <= f[n - 1];
        (theta[2] > 0.0 && inside && theta.iter().all(|v| v.is_finite())).then_some((theta, iterations))
    };

    let mut result = attempt(guess.hwhm).map(|r| (r, 0));
    for (k, factor) in RESTART_FACTORS.iter().enumerate() {
        if result.is_some() {
            break;
        }
        result = attempt(guess.hwhm * factor).map(|r| (r, k + 1));
    }
    let ((theta, iterations), restarts) = result.ok_or(Error::NoConvergence {
        restarts: RESTART_FACTORS.len(),
    })?;

    let w = problem.weights(&theta);
    let dof = n.saturating_sub(4).max(1);
    let chi2_red = problem.chi2(&theta, &w) / dof as f64;
    let covariance = covariance(&problem, &theta, &w, &spectrum.bin_corr)?
        .map(|row| row.map(|v| v * chi2_red.max(1.0)));
    if opts.hi_hz - theta[1] < 5.0 * theta[2] || theta[1] - opts.lo_hz < 5.0 * theta[2] {
        log::warn!(
            "fit window [{}, {}] Hz holds fewer than 5 half-widths on one side of {} Hz",
            opts.lo_hz,
            opts.hi_hz,
            theta[1]
        );
    }
    Ok(LorentzianFit {
        convention: CONVENTION_TAG.to_string(),
        floor: theta[0],
        center_hz: theta[1],
        hwhm_hz: theta[2],
        area: theta[3],
        covariance,
        chi2_red,
        n_bins: n,
        window_hz: [opts.lo_hz, opts.hi_hz],
        mirror: opts.mirror,
        iterations,
        restarts,
    })
}

/// Sandwich covariance `H⁻¹·M·H⁻¹`, where `M` accounts for the correlation
/// between neighbouring periodogram bins.
fn covariance(
    problem: &Problem<'_>,
    theta: &[f64; 4],
    w: &[f64],
    bin_corr: &[f64],
) -> Result<[[f64; 4]; 4]> {
    let jac: Vec<Vector4<f64>> = problem
        .f
        .iter()
        .map(|&f| gradient(theta, problem.mirror, f))
        .collect();
    let mut h = Matrix4::zeros();
    for (j, &wi) in jac.iter().zip(w) {
        h += wi * j * j.transpose();
    }
    // w_i·w_k·cov(y_i, y_k) = ρ_{|i−k|}·sqrt(w_i·w_k)
    let u: Vec<Vector4<f64>> = jac
        .iter()
        .zip(w)
        .map(|(j, &wi)| j * wi.sqrt())
        .collect();
    let mut m = h;
    for (lag, &rho) in bin_corr.iter().enumerate().skip(1) {
        if rho == 0.0 {
            continue;
        }
        for i in 0..u.len().saturating_sub(lag) {
            let outer = u[i] * u[i + lag].transpose();
            m += rho * (outer + outer.transpose());
        }
    }
    let hinv = h
        .try_inverse()
        .ok_or_else(|| Error::InsufficientData("singular fit information matrix".into()))?;
    let c = hinv * m * hinv;
    let c = 0.5 * (c + c.transpose());
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = c[(i, k)];
        }
    }
    Ok(out)
}

/// Cross-check area: summed excess over the fitted floor (and mirror tail)
/// inside the window, divided by the Lorentzian fraction the window holds.
pub fn direct_area(spectrum: &Spectrum, fit: &LorentzianFit) -> f64 {
    let range = spectrum.range(fit.window_hz[0], fit.window_hz[1]);
    let df = spectrum.bin_width();
    let mirror = fit.mirror_weight();
    let mut sum = 0.0;
    for k in range.clone() {
        let f = spectrum.freq_hz[k];
        let v = f + fit.center_hz;
        let tail = fit.area / PI * fit.hwhm_hz * mirror / (v * v + fit.hwhm_hz * fit.hwhm_hz);
        sum += (spectrum.psd[k] - fit.floor - tail) * df;
    }
    let lo = spectrum.freq_hz[range.start] - 0.5 * df;
    let hi = spectrum.freq_hz[range.end - 1] + 0.5 * df;
    sum / fit.fraction_within(lo, hi)
}
