//! Internal least-squares helpers shared by the instrument and elc modules.

use crate::error::{Error, Result};

/// Simple linear regression y = slope·x + intercept.
#[derive(Debug, Clone)]
pub(crate) struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    /// Hat-matrix diagonal h_i = 1/n + (x_i − x̄)²/Sxx.
    pub leverages: Vec<f64>,
    /// Residual standard error s = sqrt(RSS / (n − 2)); 0 when n = 2.
    pub residual_std: f64,
}

pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let x_mean = x.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|&v| (v - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all regressor values identical".into()));
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(&xv, &yv)| (xv - x_mean) * (yv - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&xv, &yv)| yv - (slope * xv + intercept))
        .collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let tss: f64 = y.iter().map(|&v| (v - y_mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let leverages: Vec<f64> = x.iter().map(|&v| 1.0 / nf + (v - x_mean).powi(2) / sxx).collect();
    let residual_std = if n > 2 { (rss / (nf - 2.0)).sqrt() } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        residuals,
        leverages,
        residual_std,
    })
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9). Used for normal-quantile plot series.
pub(crate) fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
