//! Least-squares fits of arm probabilities against the radius.

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    pub points: usize,
    /// Whether the fit used the point standard errors as weights.
    pub weighted: bool,
}

impl FitResult {
    /// −slope: the exponent of a power-law fit, the rate of an exponential one.
    pub fn rate(&self) -> f64 {
        -self.slope
    }
}

/// Weighted least squares of y on x. Weights 1/σ² when every σ is positive,
/// otherwise unit weights. With known σ the slope error is √(1/Sxx_w);
/// with unit weights it comes from the residuals.
fn wls(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<FitResult> {
    let n = x.len();
    if n < 2 {
        bail!(InvalidData, "{n} points; a fit needs at least 2");
    }
    let weighted = sigma.iter().all(|&s| s > 0.0 && s.is_finite());
    let w: Vec<f64> = if weighted { sigma.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; n] };
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        sxx += w[i] * (x[i] - mx).powi(2);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
        syy += w[i] * (y[i] - my).powi(2);
    }
    if sxx <= 0.0 {
        bail!(InvalidData, "all abscissae coincide");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n).map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let slope_stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else if n > 2 {
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    if !slope.is_finite() || !intercept.is_finite() {
        bail!(InvalidData, "non-finite fit coefficients");
    }
    Ok(FitResult { slope, intercept, slope_stderr, r2, points: n, weighted })
}

fn logs(points: &[(f64, f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut y = Vec::with_capacity(points.len());
    let mut s = Vec::with_capacity(points.len());
    for &(r, p, sig) in points {
        if !(p > 0.0) || !p.is_finite() {
            bail!(InvalidData, "non-positive probability {p} at R = {r}");
        }
        y.push(p.ln());
        s.push(sig / p);
    }
    Ok((y, s))
}

/// Fit log P = intercept + slope·log R over points (R, P̂, σ). The slope
/// estimates −η₁ on a finite range of R; it is a proxy, not the exponent.
pub fn fit_power_law(points: &[(f64, f64, f64)]) -> Result<FitResult> {
    if points.iter().any(|p| !(p.0 > 0.0)) {
        bail!(InvalidData, "non-positive radius");
    }
    let (y, s) = logs(points)?;
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    wls(&x, &y, &s)
}

/// Fit log P = intercept + slope·R over points (R, P̂, σ); the decay rate
/// is −slope. Needs at least 3 points.
pub fn fit_exponential_decay(points: &[(f64, f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        bail!(InvalidData, "{} points; an exponential fit needs at least 3", points.len());
    }
    let (y, s) = logs(points)?;
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    wls(&x, &y, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_power_law() {
        let pts: Vec<_> = [8.0, 16.0, 32.0, 64.0].iter().map(|&r: &f64| (r, r.powf(-0.5), 0.0)).collect();
        let f = fit_power_law(&pts).unwrap();
        assert_abs_diff_eq!(f.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert!(!f.weighted);
        assert!(fit_power_law(&pts[..1]).is_err());
        assert!(matches!(fit_power_law(&[(1.0, 0.5, 0.0), (2.0, 0.0, 0.0)]), Err(crate::Error::InvalidData(_))));
    }

    #[test]
    fn noiseless_exponential() {
        let pts: Vec<_> = (1..=6).map(|i| (4.0 * i as f64, (-0.3 * 4.0 * i as f64).exp(), 0.01)).collect();
        let f = fit_exponential_decay(&pts).unwrap();
        assert_abs_diff_eq!(f.rate(), 0.3, epsilon = 1e-12);
        assert!(f.weighted);
        assert!(fit_exponential_decay(&pts[..2]).is_err());
    }

    #[test]
    fn weights_follow_errors() {
        // a badly measured outlier barely moves a weighted fit
        let mut pts: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&r: &f64| (r, (-r).exp(), 1e-4 * (-r).exp())).collect();
        pts.push((5.0, 1.0, 10.0));
        let f = fit_exponential_decay(&pts).unwrap();
        assert_abs_diff_eq!(f.rate(), 1.0, epsilon = 1e-3);
    }
}
