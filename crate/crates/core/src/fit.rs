//! Least-squares power laws `v ≈ C p^α` fitted in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    /// `ln C`.
    pub log_intercept: f64,
    pub r_squared: f64,
}

impl FitResult {
    pub fn predict(&self, p: f64) -> f64 {
        (self.log_intercept + self.exponent * p.ln()).exp()
    }
}

/// Ordinary least squares of `ln v` against `ln p`. Needs at least two
/// points with distinct positive `p` and positive `v`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(invalid("power-law fit needs at least two points"));
    }
    if let Some((p, v)) = points.iter().find(|(p, v)| !(p.is_finite() && *p > 0.0 && v.is_finite() && *v > 0.0)) {
        return Err(invalid(format!("power-law fit needs positive finite data, got ({p}, {v})")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(p, _)| p.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(invalid("power-law fit needs distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let log_intercept = my - exponent * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - log_intercept - exponent * x).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(FitResult { exponent, log_intercept, r_squared })
}
