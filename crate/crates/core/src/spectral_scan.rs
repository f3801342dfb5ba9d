//! Sweeps of `σ_min(L_h)` over the semiclassical parameter on the 2-torus
//! `(R/2πZ)²` and log-log fits of the result.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::damping::{evaluate_damping, DampingProfile};
use crate::error::{invalid, Result};
use crate::geometry::{ProductGrid, TorusFactor};
use crate::operators::{SemiclassicalOperator, SigmaOptions, SpectralLaplacian};

pub use crate::fit::{fit_power_law, FitResult};

/// `1 + γ/(γ+1)`: the exponent `s` in `σ_min(L_h) ≳ h^s`.
pub fn predicted_exponent(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(1.0 + gamma / (gamma + 1.0))
}

/// `1/(2(1+γ))`: the tube width exponent balancing the two error terms.
pub fn optimal_delta(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(0.5 / (1.0 + gamma))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("gamma must be positive, got {gamma}")))
    }
}

/// `N(h) = max(min_points, ceil(points_per_unit / h))`, rounded up to even.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRule {
    pub min_points: usize,
    pub points_per_unit: f64,
}

impl ResolutionRule {
    pub const fn new(min_points: usize, points_per_unit: f64) -> Self {
        Self { min_points, points_per_unit }
    }

    /// A fixed count independent of `h`.
    pub const fn fixed(points: usize) -> Self {
        Self { min_points: points, points_per_unit: 0.0 }
    }

    pub fn points(&self, h: f64) -> usize {
        let n = self.min_points.max((self.points_per_unit / h).ceil() as usize);
        n + n % 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub gamma: f64,
    /// Strictly decreasing.
    pub h_values: Vec<f64>,
    /// Points on the undamped circle; must put at least 8 points per wavelength `2πh`.
    pub trapped_resolution: ResolutionRule,
    /// Points on the damped circle.
    pub damped_resolution: ResolutionRule,
    /// Center `q0` of the damping well on the damped circle.
    pub center: f64,
    /// The power law `d^(2γ)` holds for `d` below this radius.
    pub cutoff_radius: f64,
    pub sigma: SigmaOptions,
}

impl ScanConfig {
    /// Geometric `h`-grid `2^-j_min, ..., 2^-j_max` with the default resolution rules.
    pub fn dyadic(gamma: f64, j_min: i32, j_max: i32) -> Self {
        Self {
            gamma,
            h_values: (j_min..=j_max).map(|j| 2f64.powi(-j)).collect(),
            trapped_resolution: ResolutionRule::new(64, 16.0),
            damped_resolution: ResolutionRule::fixed(128),
            center: PI,
            cutoff_radius: PI / 2.0,
            sigma: SigmaOptions::default(),
        }
    }

    /// Geometric grid of `points` values from `h_max` down to `h_min`.
    pub fn geometric(gamma: f64, h_min: f64, h_max: f64, points: usize) -> Result<Self> {
        if !(h_min > 0.0 && h_max > h_min && points >= 2) {
            return Err(invalid("need 0 < h_min < h_max and at least two points"));
        }
        let ratio = (h_min / h_max).powf(1.0 / (points - 1) as f64);
        let h_values = (0..points).map(|i| h_max * ratio.powi(i as i32)).collect();
        Ok(Self { h_values, ..Self::dyadic(gamma, 4, 9) })
    }

    pub fn profile(&self) -> Result<DampingProfile> {
        DampingProfile::power_law(self.gamma, vec![self.center], self.cutoff_radius)
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.h_values.len() < 5 {
            return Err(invalid(format!("a scan needs at least 5 values of h, got {}", self.h_values.len())));
        }
        if self.h_values.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(invalid("h values must be positive"));
        }
        if self.h_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("h values must be strictly decreasing"));
        }
        for &h in &self.h_values {
            let n = self.trapped_resolution.points(h);
            let per_wavelength = TAU * h / (TAU / n as f64);
            if per_wavelength < 8.0 {
                return Err(invalid(format!(
                    "resolution {n} gives {per_wavelength:.2} points per wavelength at h = {h}; need 8"
                )));
            }
        }
        if self.damped_resolution.points(self.h_values[0]) < 8 {
            return Err(invalid("damped resolution too small"));
        }
        self.profile()?;
        Ok(())
    }

    pub fn grid(&self, h: f64) -> Result<ProductGrid> {
        ProductGrid::new(
            TorusFactor::circle(TAU)?,
            TorusFactor::circle(TAU)?,
            vec![self.trapped_resolution.points(h), self.damped_resolution.points(h)],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// `h`, `τ` or `n` depending on the sweep.
    pub parameter: f64,
    pub value: f64,
    pub resolution: Vec<usize>,
    pub seconds: f64,
}

/// `σ_min(L_h)` at one `h`, with the grid and damping of `config`.
pub fn resolvent_record(config: &ScanConfig, h: f64) -> Result<SweepRecord> {
    let start = Instant::now();
    let grid = Arc::new(config.grid(h)?);
    let b = evaluate_damping(&config.profile()?, &grid)?;
    let op = SemiclassicalOperator::new(h, SpectralLaplacian::new(grid.clone()), &b)?;
    let sigma = op.min_singular_value(&config.sigma)?;
    Ok(SweepRecord {
        parameter: h,
        value: sigma.value,
        resolution: grid.resolution().to_vec(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One record per `h`, sorted by ascending `h`.
pub fn run_resolvent_scan(config: &ScanConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let one = |h: f64| resolvent_record(config, h).map_err(|e| e.at(h));
    #[cfg(feature = "parallel")]
    let records: Result<Vec<_>> = {
        use rayon::prelude::*;
        config.h_values.par_iter().map(|&h| one(h)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records: Result<Vec<_>> = config.h_values.iter().map(|&h| one(h)).collect();
    let mut records = records?;
    records.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
    Ok(records)
}

/// Power-law fit of `value` against `parameter`; needs at least three records.
pub fn fit_records(records: &[SweepRecord]) -> Result<FitResult> {
    if records.len() < 3 {
        return Err(invalid("fit needs at least three records"));
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.parameter, r.value)).collect();
    fit_power_law(&pts)
}

/// Slope fitted to the coarser half of the records minus the slope of the
/// finer half. Large values flag curvature from a pre-asymptotic regime.
pub fn slope_drift(records: &[SweepRecord]) -> Result<f64> {
    if records.len() < 4 {
        return Err(invalid("slope drift needs at least four records"));
    }
    let mut pts: Vec<(f64, f64)> = records.iter().map(|r| (r.parameter, r.value)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = pts.len().div_ceil(2);
    let fine = fit_power_law(&pts[..half])?.exponent;
    let coarse = fit_power_law(&pts[pts.len() - half..])?.exponent;
    Ok(coarse - fine)
}

/// Largest amount by which a record falls below the fitted line, in log units,
/// relative to the root-mean-square residual of the fit.
pub fn max_shortfall(records: &[SweepRecord], fit: &FitResult) -> f64 {
    let res: Vec<f64> = records.iter().map(|r| r.value.ln() - fit.predict(r.parameter).ln()).collect();
    let rms = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
    let worst = res.iter().copied().fold(0.0, f64::min);
    if rms == 0.0 {
        0.0
    } else {
        -worst / rms
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponents() {
        assert_eq!(predicted_exponent(1.0).unwrap(), 1.5);
        assert!((predicted_exponent(2.0).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!((predicted_exponent(1e-12).unwrap() - 1.0).abs() < 1e-11);
        assert!(predicted_exponent(0.0).is_err());
        assert_eq!(optimal_delta(1.0).unwrap(), 0.25);
        assert_eq!(optimal_delta(3.0).unwrap(), 0.125);
        assert!((optimal_delta(1e-12).unwrap() - 0.5).abs() < 1e-11);
        assert!(optimal_delta(-1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let c = ScanConfig::dyadic(1.0, 4, 9);
        c.validate().unwrap();
        assert_eq!(c.trapped_resolution.points(2f64.powi(-9)), 8192);
        assert_eq!(c.trapped_resolution.points(0.5), 64);
        let short = ScanConfig::dyadic(1.0, 4, 7);
        assert!(short.validate().is_err());
        let mut inc = c.clone();
        inc.h_values.reverse();
        assert!(inc.validate().is_err());
        let mut coarse = c.clone();
        coarse.trapped_resolution = ResolutionRule::fixed(64);
        assert!(coarse.validate().is_err());
    }

    #[test]
    fn undamped_record_is_multiplier_minimum() {
        // h = 0.3 avoids every exact resonance h²|k|² = 1
        let mut c = ScanConfig::dyadic(1.0, 4, 9);
        c.damped_resolution = ResolutionRule::fixed(16);
        c.trapped_resolution = ResolutionRule::fixed(16);
        let grid = Arc::new(c.grid(0.3).unwrap());
        let op = SemiclassicalOperator::undamped(0.3, SpectralLaplacian::new(grid.clone())).unwrap();
        let sigma = op.min_singular_value(&c.sigma).unwrap().value;
        let lap = SpectralLaplacian::new(grid);
        let oracle = lap.squared_wavenumbers().iter().map(|k2| (0.09 * k2 - 1.0).abs()).fold(f64::INFINITY, f64::min);
        assert!((sigma - oracle).abs() <= 1e-10 * oracle, "{sigma} vs {oracle}");
    }

    #[test]
    fn doubled_resolution_moves_sigma_by_under_a_percent() {
        let h = 2f64.powi(-7);
        let base = ScanConfig::dyadic(1.0, 4, 9);
        let sigma = |damped: usize, scale: f64| {
            let mut c = base.clone();
            c.damped_resolution = ResolutionRule::fixed(damped);
            c.trapped_resolution.points_per_unit *= scale;
            resolvent_record(&c, h).unwrap().value
        };
        let reference = sigma(128, 1.0);
        for (damped, scale) in [(256, 1.0), (128, 2.0)] {
            let refined = sigma(damped, scale);
            assert!((refined / reference - 1.0).abs() < 0.01, "{damped} {scale}: {refined} vs {reference}");
        }
    }

    #[test]
    fn synthetic_fits() {
        let recs = |f: &dyn Fn(f64) -> f64| -> Vec<SweepRecord> {
            (4..=9)
                .map(|j| {
                    let h = 2f64.powi(-j);
                    SweepRecord { parameter: h, value: f(h), resolution: vec![], seconds: 0.0 }
                })
                .collect()
        };
        let f = fit_records(&recs(&|h| h.powf(1.5))).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-12);
        assert!(slope_drift(&recs(&|h| h.powf(1.5))).unwrap().abs() < 1e-10);
        // h² for small h, h for large h
        let drift = slope_drift(&recs(&|h| h * h / (h + 0.05))).unwrap();
        assert!(drift < -0.3, "{drift}");
        assert!(slope_drift(&recs(&|h| h)[..3]).is_err());
        let f = fit_records(&recs(&|_| 7.0)).unwrap();
        assert!(f.exponent.abs() < 1e-12);
        let bad = recs(&|h| if h > 0.05 { 1.0 } else { 0.0 });
        assert!(fit_records(&bad).is_err());
        assert!(fit_records(&recs(&|h| h)[..2]).is_err());

        // noisy 3h² against the normal equations solved directly
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let h = 0.5 * 0.7f64.powi(i);
                (h, 3.0 * h * h * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            })
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        let (mut s1, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, v) in &pts {
            let (x, y) = (p.ln(), v.ln());
            s1 += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let det = s1 * sxx - sx * sx;
        let slope = (s1 * sxy - sx * sy) / det;
        let icpt = (sxx * sy - sx * sxy) / det;
        assert!((fit.exponent - slope).abs() < 1e-9 && (fit.log_intercept - icpt).abs() < 1e-9);
        assert!((fit.exponent - 2.0).abs() < 0.05);
    }
}
