//! Browser bindings: each export runs one small experiment and hands back a
//! curve for the page to draw on a log-log canvas.

use tubewave::quasimode_lab::counterexample_ratio;
use tubewave::spectral_scan::{fit_records, predicted_exponent, run_resolvent_scan, ScanConfig};
use tubewave::wave_evolver::DecayConfig;
use wasm_bindgen::prelude::*;

/// Largest trapped-axis grid the page may request; keeps a scan under a few seconds.
const MAX_POINTS: usize = 2048;

/// Sampled curve with a power-law fit `y ≈ C x^exponent`.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    exponent: f64,
    r_squared: f64,
    predicted: f64,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ys(&self) -> Vec<f64> {
        self.ys.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    #[wasm_bindgen(getter, js_name = rSquared)]
    pub fn r_squared(&self) -> f64 {
        self.r_squared
    }

    /// Exponent the theory predicts; NaN when there is none.
    #[wasm_bindgen(getter)]
    pub fn predicted(&self) -> f64 {
        self.predicted
    }
}

pub fn resolvent_curve_impl(gamma: f64, h_min: f64, h_max: f64, points: usize) -> tubewave::Result<Curve> {
    let config = ScanConfig::geometric(gamma, h_min, h_max, points)?;
    if config.h_values.iter().any(|&h| config.trapped_resolution.points(h) > MAX_POINTS) {
        return Err(tubewave::Error::InvalidInput(format!("h_min too small for the browser (limit {MAX_POINTS} points)")));
    }
    let records = run_resolvent_scan(&config)?;
    let fit = fit_records(&records)?;
    Ok(Curve {
        xs: records.iter().map(|r| r.parameter).collect(),
        ys: records.iter().map(|r| r.value).collect(),
        exponent: fit.exponent,
        r_squared: fit.r_squared,
        predicted: predicted_exponent(gamma)?,
    })
}

pub fn energy_trace_impl(gamma: f64, resolution: usize, t_final: f64) -> tubewave::Result<Curve> {
    let mut config = DecayConfig { gamma, resolution: [resolution, resolution], t_final, fit_end: t_final, ..DecayConfig::default() };
    // coarse grids keep only the modes they resolve
    config.data.modes = config.data.modes.min((resolution / 2).saturating_sub(1));
    let run = config.run()?;
    let samples = run.trace.samples.iter().filter(|s| s.time > 0.0);
    Ok(Curve {
        xs: samples.clone().map(|s| s.time).collect(),
        ys: samples.map(|s| s.energy.sqrt()).collect(),
        exponent: run.fit.fit.exponent,
        r_squared: run.fit.fit.r_squared,
        predicted: run.fit.predicted_exponent,
    })
}

pub fn sphere_ratios_impl(d: u32, delta: f64, n_max: u64) -> tubewave::Result<Curve> {
    let mut ns = Vec::new();
    let mut n = 10u64;
    while n <= n_max {
        ns.push(n);
        n = n.saturating_mul(2);
    }
    let table = counterexample_ratio(d, delta, &ns)?;
    let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.n as f64, r.ratio)).collect();
    let fit = tubewave::fit::fit_power_law(&pts)?;
    Ok(Curve {
        xs: pts.iter().map(|p| p.0).collect(),
        ys: pts.iter().map(|p| p.1).collect(),
        exponent: fit.exponent,
        r_squared: fit.r_squared,
        predicted: f64::NAN,
    })
}

fn js(e: tubewave::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Smallest singular value of `L_h` on a geometric grid of `points` values of h.
#[wasm_bindgen(js_name = resolventCurve)]
pub fn resolvent_curve(gamma: f64, h_min: f64, h_max: f64, points: usize) -> Result<Curve, JsError> {
    resolvent_curve_impl(gamma, h_min, h_max, points).map_err(js)
}

/// `√E(t)` of the damped wave from the default trapped data.
#[wasm_bindgen(js_name = energyTrace)]
pub fn energy_trace(gamma: f64, resolution: usize, t_final: f64) -> Result<Curve, JsError> {
    energy_trace_impl(gamma, resolution, t_final).map_err(js)
}

/// Inner-to-annulus mass ratio on `S^d` for `n = 10, 20, 40, …, ≤ n_max`.
#[wasm_bindgen(js_name = sphereRatios)]
pub fn sphere_ratios(d: u32, delta: f64, n_max: u64) -> Result<Curve, JsError> {
    sphere_ratios_impl(d, delta, n_max).map_err(js)
}
