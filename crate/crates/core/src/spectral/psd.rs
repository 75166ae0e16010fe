//! Welch power spectral density estimation.
//!
//! Segments are windowed, transformed and averaged. A periodogram bin is
//! normalized as `|X_k|²·dt / Σw²`, which makes white noise of per-sample
//! variance σ² come out at σ²·dt for any window. Values are two-sided
//! densities reported on the bins `0..=L/2`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Spectrum, Trajectory, CONVENTION_TAG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| {
                    let s = (std::f64::consts::PI * i as f64 / n as f64).sin();
                    s * s
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchOptions {
    pub segment_len: usize,
    #[serde(default)]
    pub window: Window,
    /// Fraction of a segment shared with the next one.
    #[serde(default = "default_overlap")]
    pub overlap: f64,
}

fn default_overlap() -> f64 {
    0.5
}

impl WelchOptions {
    pub fn hann(segment_len: usize) -> Self {
        Self {
            segment_len,
            window: Window::Hann,
            overlap: 0.5,
        }
    }
}

/// Periodogram sums of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSum {
    pub sum: Vec<f64>,
    pub segments: usize,
}

/// A planned estimator that can be shared between worker threads.
pub struct Welch {
    opts: WelchOptions,
    window: Vec<f64>,
    hop: usize,
    norm: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Welch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Welch")
            .field("opts", &self.opts)
            .field("hop", &self.hop)
            .finish()
    }
}

impl Welch {
    pub fn new(opts: WelchOptions) -> Result<Self> {
        if opts.segment_len < 4 {
            return Err(Error::InvalidConfig("segment_len must be >= 4".into()));
        }
        if !(0.0..1.0).contains(&opts.overlap) {
            return Err(Error::InvalidConfig("overlap must lie in [0, 1)".into()));
        }
        let window = opts.window.coefficients(opts.segment_len);
        let overlap_len = (opts.overlap * opts.segment_len as f64).round() as usize;
        let hop = (opts.segment_len - overlap_len).max(1);
        let norm = window.iter().map(|w| w * w).sum::<f64>();
        let fft = FftPlanner::new().plan_fft_forward(opts.segment_len);
        Ok(Self {
            opts,
            window,
            hop,
            norm,
            fft,
        })
    }

    pub fn options(&self) -> &WelchOptions {
        &self.opts
    }

    pub fn n_bins(&self) -> usize {
        self.opts.segment_len / 2 + 1
    }

    pub fn segments_in(&self, len: usize) -> usize {
        if len < self.opts.segment_len {
            0
        } else {
            (len - self.opts.segment_len) / self.hop + 1
        }
    }

    /// Sum of the normalized periodograms of all full segments of `signal`.
    pub fn accumulate(&self, signal: &[f64], dt_s: f64) -> Result<SegmentSum> {
        let l = self.opts.segment_len;
        if signal.is_empty() {
            return Err(Error::EmptyInput);
        }
        if l > signal.len() {
            return Err(Error::SegmentTooLong {
                segment: l,
                len: signal.len(),
            });
        }
        let k = self.segments_in(signal.len());
        let scale = dt_s / self.norm;
        let mut sum = vec![0.0; self.n_bins()];
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for s in 0..k {
            let seg = &signal[s * self.hop..s * self.hop + l];
            for ((b, x), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (acc, x) in sum.iter_mut().zip(&buf) {
                *acc += x.norm_sqr() * scale;
            }
        }
        Ok(SegmentSum { sum, segments: k })
    }

    /// Combines per-series sums into a spectrum. Realization-level means
    /// give the per-bin standard error when there are at least two.
    pub fn finish(&self, parts: &[SegmentSum], dt_s: f64) -> Result<Spectrum> {
        if parts.is_empty() {
            return Err(Error::EmptyInput);
        }
        let total_segments: usize = parts.iter().map(|p| p.segments).sum();
        let sums: Vec<&[f64]> = parts.iter().map(|p| p.sum.as_slice()).collect();
        let mut psd = pairwise_sum(&sums);
        for v in &mut psd {
            *v /= total_segments as f64;
        }
        let stderr = (parts.len() >= 2).then(|| {
            let r = parts.len() as f64;
            let dev: Vec<Vec<f64>> = parts
                .iter()
                .map(|p| {
                    p.sum
                        .iter()
                        .zip(&psd)
                        .map(|(s, m)| (s / p.segments as f64 - m).powi(2))
                        .collect()
                })
                .collect();
            let refs: Vec<&[f64]> = dev.iter().map(Vec::as_slice).collect();
            pairwise_sum(&refs)
                .into_iter()
                .map(|ss| (ss / (r * (r - 1.0))).sqrt())
                .collect()
        });
        let l = self.opts.segment_len;
        let df = 1.0 / (l as f64 * dt_s);
        let sum_w: f64 = self.window.iter().sum();
        let enbw = l as f64 * self.norm / (sum_w * sum_w);
        let n_eff = parts
            .iter()
            .map(|p| self.effective_segments(p.segments))
            .sum();
        Ok(Spectrum {
            convention: CONVENTION_TAG.to_string(),
            freq_hz: (0..self.n_bins()).map(|k| k as f64 * df).collect(),
            psd,
            stderr,
            rbw_hz: enbw * df,
            n_avg: total_segments,
            n_eff,
            bin_corr: self.bin_correlation(3),
        })
    }

    /// Welch's variance-reduction count for `k` overlapping segments.
    pub fn effective_segments(&self, k: usize) -> f64 {
        let l = self.opts.segment_len;
        let mut denom = 1.0;
        for j in 1..k {
            let shift = j * self.hop;
            if shift >= l {
                break;
            }
            let c: f64 = (0..l - shift)
                .map(|n| self.window[n] * self.window[n + shift])
                .sum::<f64>()
                / self.norm;
            denom += 2.0 * (1.0 - j as f64 / k as f64) * c * c;
        }
        k as f64 / denom
    }

    /// Correlation between periodogram bins `m` apart, for `m = 0..=max_lag`.
    pub fn bin_correlation(&self, max_lag: usize) -> Vec<f64> {
        let l = self.opts.segment_len as f64;
        (0..=max_lag)
            .map(|m| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, w) in self.window.iter().enumerate() {
                    let ph = -2.0 * std::f64::consts::PI * (m * n) as f64 / l;
                    acc += Complex64::from_polar(w * w, ph);
                }
                acc.norm_sqr() / (self.norm * self.norm)
            })
            .collect()
    }
}

/// Order-fixed pairwise summation of equal-length vectors.
pub fn pairwise_sum(parts: &[&[f64]]) -> Vec<f64> {
    match parts.len() {
        0 => Vec::new(),
        1 => parts[0].to_vec(),
        n => {
            let (a, b) = parts.split_at(n / 2);
            let mut left = pairwise_sum(a);
            let right = pairwise_sum(b);
            for (l, r) in left.iter_mut().zip(&right) {
                *l += r;
            }
            left
        }
    }
}

/// Welch PSD of the detected output `S_y_out` across trajectories.
pub fn estimate_psd(trajectories: &[Trajectory], opts: WelchOptions) -> Result<Spectrum> {
    let first = trajectories.first().ok_or(Error::EmptyInput)?;
    let signals: Vec<&[f64]> = trajectories.iter().map(|t| t.sy_out.as_slice()).collect();
    if trajectories.iter().any(|t| t.dt_s != first.dt_s) {
        return Err(Error::InvalidConfig(
            "trajectories have different time steps".into(),
        ));
    }
    estimate_psd_signals(&signals, first.dt_s, opts)
}

pub fn estimate_psd_signals(signals: &[&[f64]], dt_s: f64, opts: WelchOptions) -> Result<Spectrum> {
    if signals.is_empty() {
        return Err(Error::EmptyInput);
    }
    let welch = Welch::new(opts)?;
    let parts = signals
        .iter()
        .map(|s| welch.accumulate(s, dt_s))
        .collect::<Result<Vec<_>>>()?;
    welch.finish(&parts, dt_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Channel, CounterRng};

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let rng = CounterRng::new(seed, 0);
        (0..n)
            .map(|i| {
                let (a, _) = rng.normal_pair(i as u64, Channel::Detection);
                a
            })
            .collect()
    }

    #[test]
    fn white_noise_level() {
        let dt = 1e-5;
        let x = white(256 * 401, 1);
        let s = estimate_psd_signals(&[&x], dt, WelchOptions::hann(512)).unwrap();
        assert!(s.n_avg >= 400, "{}", s.n_avg);
        let inner = &s.psd[1..s.psd.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!((mean / dt - 1.0).abs() < 0.02, "{}", mean / dt);
    }

    #[test]
    fn tone_power_splits_across_positive_and_negative_frequency() {
        let dt = 1e-4;
        let l = 1000;
        let bin = 37;
        let f = bin as f64 / (l as f64 * dt);
        let amp = 3.0;
        let x: Vec<f64> = (0..20 * l)
            .map(|i| amp * (2.0 * std::f64::consts::PI * f * i as f64 * dt).cos())
            .collect();
        for window in [Window::Hann, Window::Rectangular] {
            let opts = WelchOptions {
                segment_len: l,
                window,
                overlap: 0.5,
            };
            let s = estimate_psd_signals(&[&x], dt, opts).unwrap();
            let df = s.bin_width();
            let peak: f64 = s.psd[bin - 3..=bin + 3].iter().sum::<f64>() * df;
            assert!((peak / (amp * amp / 4.0) - 1.0).abs() < 1e-9, "{window:?}");
        }
    }

    #[test]
    fn parseval_over_full_band() {
        let dt = 1e-3;
        let x = white(64 * 300, 9);
        let s = estimate_psd_signals(&[&x], dt, WelchOptions::hann(128)).unwrap();
        let df = s.bin_width();
        let n = s.psd.len();
        let integral = (s.psd[0] + s.psd[n - 1] + 2.0 * s.psd[1..n - 1].iter().sum::<f64>()) * df;
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((integral / var - 1.0).abs() < 0.02);
    }

    #[test]
    fn errors() {
        let x = vec![0.0; 10];
        assert!(matches!(
            estimate_psd_signals(&[&x], 1.0, WelchOptions::hann(16)),
            Err(Error::SegmentTooLong { segment: 16, len: 10 })
        ));
        assert!(matches!(
            estimate_psd_signals(&[], 1.0, WelchOptions::hann(16)),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(estimate_psd(&[], WelchOptions::hann(16)), Err(Error::EmptyInput)));
    }

    #[test]
    fn hann_metadata() {
        let w = Welch::new(WelchOptions::hann(1024)).unwrap();
        let rho = w.bin_correlation(2);
        assert!((rho[0] - 1.0).abs() < 1e-12);
        assert!((rho[1] - 4.0 / 9.0).abs() < 1e-12, "{}", rho[1]);
        assert!((rho[2] - 1.0 / 36.0).abs() < 1e-12);
        // c₁ = 1/6 at 50 % overlap
        let k = 100;
        let expected = k as f64 / (1.0 + 2.0 * (1.0 - 1.0 / k as f64) / 36.0);
        assert!((w.effective_segments(k) - expected).abs() < 1e-9);
        let s = estimate_psd_signals(&[&vec![1.0; 2048]], 1e-3, WelchOptions::hann(1024)).unwrap();
        assert!((s.rbw_hz / s.bin_width() - 1.5).abs() < 1e-12);
        assert_eq!(s.n_avg, 3);
        s.check().unwrap();
    }

    #[test]
    fn standard_error_tracks_spread() {
        let dt = 1e-3;
        let series: Vec<Vec<f64>> = (0..40).map(|s| white(64 * 50, s)).collect();
        let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        let s = estimate_psd_signals(&refs, dt, WelchOptions::hann(128)).unwrap();
        let se = s.stderr.as_ref().unwrap();
        // theoretical relative error is 1/sqrt(n_eff)
        let rel: f64 = se[5..60].iter().zip(&s.psd[5..60]).map(|(e, p)| e / p).sum::<f64>() / 55.0;
        let theory = 1.0 / s.n_eff.sqrt();
        assert!((rel / theory - 1.0).abs() < 0.15, "{rel} vs {theory}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn psd_is_additive_for_independent_signals(a in 0u64..1000, b in 1000u64..2000) {
                let dt = 1e-3;
                let n = 64 * 200;
                let x = white(n, a);
                let y: Vec<f64> = white(n, b).iter().map(|v| 2.0 * v).collect();
                let sum: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + q).collect();
                let opts = WelchOptions::hann(128);
                let sx = estimate_psd_signals(&[&x], dt, opts).unwrap();
                let sy = estimate_psd_signals(&[&y], dt, opts).unwrap();
                let ss = estimate_psd_signals(&[&sum], dt, opts).unwrap();
                // compare band averages: mean level of sum equals sum of levels
                let band = 5..60;
                let m = |s: &Spectrum| s.psd[band.clone()].iter().sum::<f64>() / band.len() as f64;
                let rel_err = 1.0 / (sx.n_eff * band.len() as f64 / 1.9).sqrt();
                let diff = m(&ss) - m(&sx) - m(&sy);
                prop_assert!(diff.abs() < 3.0 * rel_err * (m(&ss) + m(&sx) + m(&sy)) , "{diff}");
            }
        }
    }
}
