//! Damped wave equation `u_tt - Δu + b u_t = 0` on a flat product torus.
//!
//! Time stepping is Strang splitting `W(dt/2) D(dt) W(dt/2)`: `W` is the exact
//! undamped flow, a rotation of each Fourier mode, and `D` is the exact damping
//! flow `v ← exp(-b dt) v`. Both conserve or decrease the energy exactly.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::damping::{evaluate_damping, DampingProfile};
use crate::error::{invalid, Result};
use crate::fit::{fit_power_law, FitResult};
use crate::geometry::{Field, ProductGrid, TorusFactor};
use crate::operators::SpectralLaplacian;
use crate::C64;

#[derive(Clone, Debug)]
pub struct WaveState {
    pub u: Field,
    /// `∂_t u`.
    pub v: Field,
    pub time: f64,
}

impl WaveState {
    pub fn new(u: Field, v: Field, time: f64) -> Result<Self> {
        u.grid().check_same(v.grid())?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(invalid("time must be nonnegative"));
        }
        Ok(Self { u, v, time })
    }

    pub fn zeros(grid: Arc<ProductGrid>) -> Self {
        Self { u: Field::zeros(grid.clone()), v: Field::zeros(grid), time: 0.0 }
    }

    pub fn grid(&self) -> &Arc<ProductGrid> {
        self.u.grid()
    }
}

/// `∫ |∇u|² + |v|²` with the gradient taken spectrally.
pub fn energy(state: &WaveState) -> Result<f64> {
    let lap = SpectralLaplacian::new(state.grid().clone());
    Ok(lap.dirichlet_energy(&state.u)? + state.v.norm().powi(2))
}

/// `∫ b |v|²`; the energy decreases at twice this rate.
pub fn damping_power(state: &WaveState, b: &Field) -> Result<f64> {
    state.v.grid().check_same(b.grid())?;
    let s: f64 = state.v.values().iter().zip(b.values()).map(|(v, b)| b.re * v.norm_sqr()).sum();
    Ok(s * state.grid().cell_volume())
}

/// `‖u‖_{H^s}² = ∫ (1 + |k|²)^s |û|²`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let lap = SpectralLaplacian::new(f.grid().clone());
    let mut data = f.values().to_vec();
    lap.plan().forward(&mut data);
    let n = f.grid().node_count() as f64;
    let sum: f64 = data.iter().zip(lap.squared_wavenumbers()).map(|(v, k2)| (1.0 + k2).powf(s) * v.norm_sqr()).sum();
    (sum * f.grid().cell_volume() / n).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub time: f64,
    pub energy: f64,
    /// `∫ b |v|²` at the sample.
    pub damping_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    /// Strictly increasing in time.
    pub samples: Vec<EnergySample>,
    /// `‖u0‖_{H²} + ‖u1‖_{H¹}`.
    pub sobolev_proxy: f64,
}

/// Exact flow of `u_tt = Δu` over a fixed time, per Fourier mode.
#[derive(Clone, Debug)]
struct Rotation {
    cos: Vec<f64>,
    /// `sin(ωt)/ω`, or `t` when `ω = 0`.
    sinc: Vec<f64>,
    /// `ω sin(ωt)`.
    wsin: Vec<f64>,
}

impl Rotation {
    fn new(symbol: &[f64], t: f64) -> Self {
        let mut cos = Vec::with_capacity(symbol.len());
        let mut sinc = Vec::with_capacity(symbol.len());
        let mut wsin = Vec::with_capacity(symbol.len());
        for &k2 in symbol {
            let w = k2.sqrt();
            cos.push((w * t).cos());
            sinc.push(if w == 0.0 { t } else { (w * t).sin() / w });
            wsin.push(w * (w * t).sin());
        }
        Self { cos, sinc, wsin }
    }

    fn apply(&self, uh: &mut [C64], vh: &mut [C64]) {
        for i in 0..uh.len() {
            let (u, v) = (uh[i], vh[i]);
            uh[i] = u * self.cos[i] + v * self.sinc[i];
            vh[i] = v * self.cos[i] - u * self.wsin[i];
        }
    }
}

/// Strang-split stepper for a fixed damping field and time step.
#[derive(Clone, Debug)]
pub struct WaveEvolver {
    laplacian: SpectralLaplacian,
    b: Vec<f64>,
    dt: f64,
    decay: Vec<f64>,
    half: Rotation,
    full: Rotation,
}

impl WaveEvolver {
    /// Largest admissible step: half a period of the fastest grid mode.
    pub fn max_dt(grid: &ProductGrid) -> f64 {
        let lap_max = grid
            .resolution()
            .iter()
            .zip(grid.axis_lengths())
            .map(|(n, l)| (TAU / l * (n / 2) as f64).powi(2))
            .sum::<f64>();
        std::f64::consts::PI / lap_max.sqrt()
    }

    pub fn new(b: &Field, dt: f64) -> Result<Self> {
        let grid = b.grid().clone();
        if !(dt.is_finite() && dt > 0.0 && dt <= Self::max_dt(&grid)) {
            return Err(invalid(format!("time step {dt} outside (0, {}]", Self::max_dt(&grid))));
        }
        if b.values().iter().any(|v| v.im != 0.0 || v.re < 0.0 || !v.re.is_finite()) {
            return Err(invalid("damping must be real and nonnegative"));
        }
        let laplacian = SpectralLaplacian::new(grid);
        let b: Vec<f64> = b.values().iter().map(|v| v.re).collect();
        let decay = b.iter().map(|b| (-b * dt).exp()).collect();
        let half = Rotation::new(laplacian.squared_wavenumbers(), 0.5 * dt);
        let full = Rotation::new(laplacian.squared_wavenumbers(), dt);
        Ok(Self { laplacian, b, dt, decay, half, full })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check(&self, state: &WaveState) -> Result<()> {
        self.laplacian.grid().check_same(state.grid())
    }

    fn to_spectral(&self, state: &WaveState) -> (Vec<C64>, Vec<C64>) {
        let mut uh = state.u.values().to_vec();
        let mut vh = state.v.values().to_vec();
        self.laplacian.plan().forward(&mut uh);
        self.laplacian.plan().forward(&mut vh);
        (uh, vh)
    }

    fn damp(&self, vh: &mut [C64]) {
        let plan = self.laplacian.plan();
        plan.inverse(vh);
        for (v, d) in vh.iter_mut().zip(&self.decay) {
            *v *= d;
        }
        plan.forward(vh);
    }

    fn spectral_energy(&self, uh: &[C64], vh: &[C64]) -> f64 {
        let grid = self.laplacian.grid();
        let s: f64 = uh
            .iter()
            .zip(vh)
            .zip(self.laplacian.squared_wavenumbers())
            .map(|((u, v), k2)| k2 * u.norm_sqr() + v.norm_sqr())
            .sum();
        s * grid.cell_volume() / grid.node_count() as f64
    }

    fn spectral_power(&self, vh: &[C64]) -> f64 {
        let mut v = vh.to_vec();
        self.laplacian.plan().inverse(&mut v);
        let s: f64 = v.iter().zip(&self.b).map(|(v, b)| b * v.norm_sqr()).sum();
        s * self.laplacian.grid().cell_volume()
    }

    fn state_from_spectral(&self, mut uh: Vec<C64>, mut vh: Vec<C64>, time: f64) -> Result<WaveState> {
        self.laplacian.plan().inverse(&mut uh);
        self.laplacian.plan().inverse(&mut vh);
        let grid = self.laplacian.grid().clone();
        WaveState::new(Field::new(grid.clone(), uh)?, Field::new(grid, vh)?, time)
    }

    /// One Strang step.
    pub fn step(&self, state: &WaveState) -> Result<WaveState> {
        self.check(state)?;
        let (mut uh, mut vh) = self.to_spectral(state);
        self.half.apply(&mut uh, &mut vh);
        self.damp(&mut vh);
        self.half.apply(&mut uh, &mut vh);
        self.state_from_spectral(uh, vh, state.time + self.dt)
    }

    /// Advances `steps` steps, sampling the energy at the start and after every
    /// `sample_every` steps. Consecutive half rotations between samples are
    /// merged, which leaves the result unchanged.
    pub fn run(&self, state: &WaveState, steps: usize, sample_every: usize) -> Result<(WaveState, EnergyTrace)> {
        self.check(state)?;
        if sample_every == 0 {
            return Err(invalid("sample interval must be positive"));
        }
        let sobolev_proxy = sobolev_norm(&state.u, 2.0) + sobolev_norm(&state.v, 1.0);
        let (mut uh, mut vh) = self.to_spectral(state);
        let mut samples = vec![EnergySample {
            time: state.time,
            energy: self.spectral_energy(&uh, &vh),
            damping_power: self.spectral_power(&vh),
        }];
        let mut pending_half = false;
        for k in 1..=steps {
            if pending_half {
                self.full.apply(&mut uh, &mut vh);
            } else {
                self.half.apply(&mut uh, &mut vh);
            }
            self.damp(&mut vh);
            let sample = k % sample_every == 0 || k == steps;
            if sample {
                self.half.apply(&mut uh, &mut vh);
                pending_half = false;
                samples.push(EnergySample {
                    time: state.time + k as f64 * self.dt,
                    energy: self.spectral_energy(&uh, &vh),
                    damping_power: self.spectral_power(&vh),
                });
            } else {
                pending_half = true;
            }
        }
        let end = self.state_from_spectral(uh, vh, state.time + steps as f64 * self.dt)?;
        Ok((end, EnergyTrace { samples, sobolev_proxy }))
    }
}

/// One Strang step with a freshly built evolver.
pub fn step(state: &WaveState, dt: f64, b: &Field) -> Result<WaveState> {
    WaveEvolver::new(b, dt)?.step(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    /// `max_k |ΔE/Δt + (P_k + P_{k+1})|` with `P = ∫ b|v|²`.
    pub max_violation: f64,
    /// The same, divided by the initial energy.
    pub relative_violation: f64,
    /// Largest relative energy increase between consecutive samples.
    pub max_increase: f64,
}

/// Checks the energy identity `dE/dt = -2 ∫ b |v|²` along a trace.
pub fn dissipation_check(trace: &EnergyTrace) -> Result<DissipationReport> {
    let s = &trace.samples;
    if s.len() < 2 {
        return Err(invalid("need at least two samples"));
    }
    let mut max_violation = 0.0f64;
    let mut max_increase = 0.0f64;
    for w in s.windows(2) {
        let dt = w[1].time - w[0].time;
        if dt.is_nan() || dt <= 0.0 {
            return Err(invalid("sample times must be strictly increasing"));
        }
        let rate = (w[1].energy - w[0].energy) / dt;
        max_violation = max_violation.max((rate + w[0].damping_power + w[1].damping_power).abs());
        if w[0].energy > 0.0 {
            max_increase = max_increase.max((w[1].energy - w[0].energy) / w[0].energy);
        }
    }
    let e0 = s[0].energy;
    Ok(DissipationReport {
        max_violation,
        relative_violation: if e0 > 0.0 { max_violation / e0 } else { 0.0 },
        max_increase,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationOrder {
    pub dts: Vec<f64>,
    pub violations: Vec<f64>,
    /// Fitted exponent of violation against `dt`.
    pub order: f64,
}

/// Runs to `t_final` with `dt, dt/2, ..., dt/2^(levels-1)`, sampling every
/// step, and fits the order of the energy identity violation in `dt`.
pub fn dissipation_order(initial: &WaveState, b: &Field, dt: f64, t_final: f64, levels: usize) -> Result<DissipationOrder> {
    if levels < 2 {
        return Err(invalid("need at least two step sizes"));
    }
    let mut dts = Vec::with_capacity(levels);
    let mut violations = Vec::with_capacity(levels);
    for l in 0..levels {
        let h = dt / 2f64.powi(l as i32);
        let steps = (t_final / h).round() as usize;
        let (_, trace) = WaveEvolver::new(b, h)?.run(initial, steps, 1)?;
        dts.push(h);
        violations.push(dissipation_check(&trace)?.max_violation);
    }
    let pts: Vec<(f64, f64)> = dts.iter().copied().zip(violations.iter().copied()).collect();
    let order = fit_power_law(&pts)?.exponent;
    Ok(DissipationOrder { dts, violations, order })
}

/// `-(1 + 1/γ)`: the decay exponent of `E^{1/2}`.
pub fn predicted_decay_exponent(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(-(1.0 + 1.0 / gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fit of `E^{1/2}` against `t`.
    pub fit: FitResult,
    pub predicted_exponent: f64,
    pub samples_used: usize,
}

/// Fits `log E^{1/2}` against `log t` on samples with `t_min <= t <= t_max`.
pub fn fit_decay(trace: &EnergyTrace, gamma: f64, window: (f64, f64)) -> Result<DecayFit> {
    let predicted_exponent = predicted_decay_exponent(gamma)?;
    let (t0, t1) = window;
    if !(t0 > 0.0 && t1 > t0) {
        return Err(invalid("window must satisfy 0 < t_min < t_max"));
    }
    let (first, last) = match (trace.samples.first(), trace.samples.last()) {
        (Some(f), Some(l)) => (f.time, l.time),
        _ => return Err(invalid("empty trace")),
    };
    if t0 < first || t1 > last {
        return Err(invalid(format!("window [{t0}, {t1}] outside the trace [{first}, {last}]")));
    }
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .filter(|s| s.time >= t0 && s.time <= t1)
        .map(|s| {
            if s.energy > 0.0 {
                Ok((s.time, s.energy.sqrt()))
            } else {
                Err(invalid(format!("nonpositive energy {} at t = {}", s.energy, s.time)))
            }
        })
        .collect::<Result<_>>()?;
    let fit = fit_power_law(&pts)?;
    Ok(DecayFit { fit, predicted_exponent, samples_used: pts.len() })
}

/// Initial data for the decay experiment: `u0 = Σ_{k=1}^{K} k^{-p} cos(k x + φ_k)`
/// depending on the factor-1 coordinate only, `u1 = 0`. Phases are `φ_k = k²`
/// (mod 2π) so that the data is deterministic without a generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappedData {
    pub modes: usize,
    pub exponent: f64,
}

impl TrappedData {
    pub fn state(&self, grid: &Arc<ProductGrid>) -> Result<WaveState> {
        let f1 = grid.factor1().ok_or_else(|| invalid("trapped data needs a product grid"))?;
        if f1.dim() != 1 {
            return Err(invalid("trapped data is defined for a one-dimensional factor 1"));
        }
        let scale = TAU / f1.circumferences()[0];
        if self.modes == 0 || self.modes >= grid.resolution()[0] / 2 {
            return Err(invalid(format!("mode count {} not resolved by the grid", self.modes)));
        }
        let u = Field::from_fn(grid.clone(), |x| {
            let s: f64 = (1..=self.modes)
                .map(|k| {
                    let kf = k as f64;
                    kf.powf(-self.exponent) * (kf * scale * x[0] + (kf * kf) % TAU).cos()
                })
                .sum();
            C64::new(s, 0.0)
        });
        WaveState::new(u, Field::zeros(grid.clone()), 0.0)
    }

    /// Ten periods of the slowest mode.
    pub fn transient_time(&self, grid: &ProductGrid) -> f64 {
        10.0 * grid.factor1().map(|f| f.circumferences()[0]).unwrap_or(TAU)
    }
}

/// A complete decay experiment: geometry, damping, data, time stepping and fit window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    pub gamma: f64,
    /// Circumference of the undamped circle.
    pub trapped_circumference: f64,
    /// Circumference of the damped circle.
    pub damped_circumference: f64,
    pub resolution: [usize; 2],
    pub data: TrappedData,
    /// Fraction of [`WaveEvolver::max_dt`].
    pub cfl: f64,
    pub t_final: f64,
    /// Fit window end; the start is [`TrappedData::transient_time`].
    pub fit_end: f64,
    pub sample_every: usize,
    /// Damping well center on the damped circle, as a fraction of its circumference.
    pub center_fraction: f64,
    /// Power-law cutoff radius, as a fraction of the damped circumference.
    pub cutoff_fraction: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            trapped_circumference: TAU / 8.0,
            damped_circumference: TAU,
            resolution: [128, 128],
            data: TrappedData { modes: 63, exponent: 2.5 },
            cfl: 0.9,
            t_final: 100.0,
            fit_end: 100.0,
            sample_every: 20,
            center_fraction: 0.5,
            cutoff_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayRun {
    pub trace: EnergyTrace,
    pub fit: DecayFit,
    pub window: (f64, f64),
    pub dt: f64,
    pub steps: usize,
}

impl DecayConfig {
    pub fn grid(&self) -> Result<Arc<ProductGrid>> {
        Ok(Arc::new(ProductGrid::new(
            TorusFactor::circle(self.trapped_circumference)?,
            TorusFactor::circle(self.damped_circumference)?,
            self.resolution.to_vec(),
        )?))
    }

    pub fn profile(&self) -> Result<DampingProfile> {
        let l = self.damped_circumference;
        DampingProfile::power_law(self.gamma, vec![self.center_fraction * l], self.cutoff_fraction * l)
    }

    pub fn run(&self) -> Result<DecayRun> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(invalid(format!("cfl fraction must lie in (0, 1], got {}", self.cfl)));
        }
        if self.sample_every == 0 {
            return Err(invalid("sample_every must be positive"));
        }
        let grid = self.grid()?;
        let b = evaluate_damping(&self.profile()?, &grid)?;
        let initial = self.data.state(&grid)?;
        let window = (self.data.transient_time(&grid), self.fit_end);
        if !(window.1 > window.0 && self.t_final >= window.1) {
            return Err(invalid(format!(
                "fit window [{}, {}] must be nonempty and end by t_final = {}",
                window.0, window.1, self.t_final
            )));
        }
        let dt = self.cfl * WaveEvolver::max_dt(&grid);
        let steps = (self.t_final / dt).ceil() as usize;
        let (_, trace) = WaveEvolver::new(&b, dt)?.run(&initial, steps, self.sample_every)?;
        let fit = fit_decay(&trace, self.gamma, window)?;
        Ok(DecayRun { trace, fit, window, dt, steps })
    }
}
