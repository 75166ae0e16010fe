//! Weighted straight-line fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Measured;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: Measured,
    pub intercept: Measured,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_red: f64,
}

/// Weighted least squares of `y = intercept + slope·x` with per-point
/// standard errors `sigma`. Parameter errors are scaled by
/// `sqrt(max(1, χ²_red))`. When every `sigma` is zero the fit is unweighted
/// and the errors come from the residual scatter alone.
pub fn fit_line(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n || sigma.len() != n {
        return Err(Error::TooFewPoints { ok: n, need: 3 });
    }
    let exact = sigma.iter().all(|&s| s == 0.0);
    if !exact && sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidConfig(
            "per-point errors must be all positive or all zero".into(),
        ));
    }
    let w: Vec<f64> = if exact {
        vec![1.0; n]
    } else {
        sigma.iter().map(|s| 1.0 / (s * s)).collect()
    };
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("abscissa values coincide".into()));
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = (0..n)
        .map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let dof = n - 2;
    let chi2_red = chi2 / dof as f64;
    let scale = if exact { chi2_red } else { chi2_red.max(1.0) };
    let var_slope = scale / sxx;
    let var_intercept = scale * (1.0 / sw + xm * xm / sxx);
    let floor = |v: f64| f64::EPSILON * v.abs();
    Ok(LineFit {
        slope: Measured::new(slope, var_slope.sqrt().max(floor(slope))),
        intercept: Measured::new(intercept, var_intercept.sqrt().max(floor(intercept))),
        chi2,
        dof,
        chi2_red,
    })
}

/// Power law `value = prefactor·x^exponent` fitted on a log–log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: Measured,
    pub prefactor: Measured,
    pub chi2_red: f64,
    pub n_points: usize,
}

pub fn fit_power_law(x: &[f64], values: &[Measured]) -> Result<PowerLaw> {
    if values.iter().any(|v| !(v.value > 0.0)) || x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidConfig(
            "log-log regression needs positive values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.value.ln()).collect();
    let sig: Vec<f64> = values.iter().map(|v| v.stderr / v.value).collect();
    let line = fit_line(&lx, &ly, &sig)?;
    let pre = line.intercept.value.exp();
    Ok(PowerLaw {
        exponent: line.slope,
        prefactor: Measured::new(pre, pre * line.intercept.stderr),
        chi2_red: line.chi2_red,
        n_points: x.len(),
    })
}
