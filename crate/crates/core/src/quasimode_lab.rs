//! Best constants of the tube estimates and the sphere counterexample.
//!
//! Three kinds of computation live here:
//! - the observability constant of a ball by its annulus for `-Δ - τ` on a
//!   circle, as the top eigenvalue of a pair of quadratic forms;
//! - the quasimode estimate on a product grid, directly and fiber by fiber;
//! - tube masses of the highest-weight spherical harmonics `(x1 + i x2)^n`,
//!   reduced to one-dimensional integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{region_l2_norm, tube_mask, Field, ProductGrid, Region, TorusFactor};
use crate::operators::{apply_laplacian, fiber_decompose, mode_parameter, HelmholtzOperator, SpectralLaplacian};
use crate::quadrature::integrate;
use crate::C64;

/// Factor multiplying `‖(-Δ-τ)u‖` in the denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForcingWeight {
    /// `(1 + |τ|^{1/2})^{-1}`.
    Semiclassical,
    /// `1`.
    Unit,
}

impl ForcingWeight {
    pub fn value(self, tau: f64) -> f64 {
        match self {
            ForcingWeight::Semiclassical => 1.0 / (1.0 + tau.abs().sqrt()),
            ForcingWeight::Unit => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub tau: f64,
    /// `sqrt(sup Q(u))`; infinite when the denominator form is singular.
    pub best_constant: f64,
    /// Bound for the constant of the sum-of-norms estimate: `√2 · best_constant`.
    pub sum_of_norms_bound: f64,
    /// Inner, annulus and weighted forcing norms of the maximizer, normalized
    /// so that the denominator equals one.
    pub maximizer_norm_profile: [f64; 3],
    pub resolution: usize,
    /// Null vector of the denominator form when it is singular.
    pub resonant_mode: Option<Vec<f64>>,
}

/// Quadratic forms of the ball/annulus estimate on a circle of circumference
/// `2 * outer_radius` centered at `0`.
#[derive(Clone, Debug)]
pub struct HelmholtzForms {
    pub tau: f64,
    pub grid: Arc<ProductGrid>,
    pub inner: Vec<bool>,
    pub annulus: Vec<bool>,
    pub outer: Vec<bool>,
    /// Real nodal matrix of `-Δ - τ`.
    pub helmholtz: DMatrix<f64>,
    pub weight: f64,
}

impl HelmholtzForms {
    pub fn new(tau: f64, inner_radius: f64, outer_radius: f64, weight: ForcingWeight, resolution: usize) -> Result<Self> {
        if !(inner_radius > 0.0 && outer_radius > inner_radius && outer_radius.is_finite()) {
            return Err(invalid(format!("need 0 < inner < outer, got {inner_radius} and {outer_radius}")));
        }
        if !tau.is_finite() {
            return Err(invalid("tau must be finite"));
        }
        let length = 2.0 * outer_radius;
        let grid = Arc::new(ProductGrid::fiber(TorusFactor::circle(length)?, vec![resolution])?);
        let nyquist = PI * resolution as f64 / length;
        if tau > 0.0 && nyquist < 1.5 * tau.sqrt() {
            return Err(invalid(format!(
                "resolution {resolution} does not resolve tau = {tau}: Nyquist wavenumber {nyquist:.1} < 1.5 sqrt(tau)"
            )));
        }
        let inner = tube_mask(&grid, &[0.0], inner_radius)?.mask().to_vec();
        let outer = tube_mask(&grid, &[0.0], outer_radius)?.mask().to_vec();
        let annulus: Vec<bool> = inner.iter().zip(&outer).map(|(i, o)| *o && !*i).collect();
        let op = HelmholtzOperator::new(tau, SpectralLaplacian::new(grid.clone()))?;
        let n = resolution;
        let mut e0 = vec![C64::new(0.0, 0.0); n];
        e0[0] = C64::new(1.0, 0.0);
        let mut col = vec![C64::new(0.0, 0.0); n];
        crate::operators::LinearMap::apply(&op, &e0, &mut col);
        let helmholtz = DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n].re);
        Ok(Self { tau, grid, inner, annulus, outer, helmholtz, weight: weight.value(tau) })
    }

    /// `cell · 1_inner`, the numerator form.
    pub fn numerator(&self) -> DMatrix<f64> {
        let cell = self.grid.cell_volume();
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.inner.len(),
            self.inner.iter().map(|m| if *m { cell } else { 0.0 }),
        ))
    }

    /// `cell · (1_annulus + w² Hᵀ 1_outer H)`, the denominator form.
    pub fn denominator(&self) -> DMatrix<f64> {
        let cell = self.grid.cell_volume();
        let n = self.inner.len();
        let mut masked = self.helmholtz.clone();
        for (i, o) in self.outer.iter().enumerate() {
            if !o {
                masked.row_mut(i).fill(0.0);
            }
        }
        let mut b = masked.transpose() * &masked * (self.weight * self.weight);
        for i in 0..n {
            if self.annulus[i] {
                b[(i, i)] += 1.0;
            }
        }
        b * cell
    }

    /// `(‖u‖_inner, ‖u‖_annulus, w ‖(-Δ-τ)u‖_outer)`.
    pub fn norms(&self, u: &[f64]) -> [f64; 3] {
        let cell = self.grid.cell_volume();
        let hu = &self.helmholtz * DVector::from_column_slice(u);
        let sum = |mask: &[bool], v: &dyn Fn(usize) -> f64| -> f64 {
            (mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| v(i).powi(2)).sum::<f64>() * cell).sqrt()
        };
        [sum(&self.inner, &|i| u[i]), sum(&self.annulus, &|i| u[i]), self.weight * sum(&self.outer, &|i| hu[i])]
    }

    /// `Q(u)`; zero when the numerator vanishes.
    pub fn quotient(&self, u: &[f64]) -> f64 {
        let [a, b, c] = self.norms(u);
        if a == 0.0 {
            0.0
        } else {
            a * a / (b * b + c * c)
        }
    }
}

/// Largest `Q(u) = ‖u‖²_inner / (‖u‖²_annulus + w²‖(-Δ-τ)u‖²_outer)` over real
/// nodal fields; the supremum over complex fields is the same.
pub fn helmholtz_best_constant(
    tau: f64,
    inner_radius: f64,
    outer_radius: f64,
    weight: ForcingWeight,
    resolution: usize,
) -> Result<ConstantEstimate> {
    let forms = HelmholtzForms::new(tau, inner_radius, outer_radius, weight, resolution)?;
    let b = forms.denominator();
    let n = resolution;
    let Some(chol) = b.clone().cholesky() else {
        let eig = SymmetricEigen::new(b);
        let imin = eig.eigenvalues.imin();
        return Ok(ConstantEstimate {
            tau,
            best_constant: f64::INFINITY,
            sum_of_norms_bound: f64::INFINITY,
            maximizer_norm_profile: [f64::NAN; 3],
            resolution,
            resonant_mode: Some(eig.eigenvectors.column(imin).iter().copied().collect()),
        });
    };
    let inner_idx: Vec<usize> = (0..n).filter(|i| forms.inner[*i]).collect();
    let m = inner_idx.len();
    let mut rhs = DMatrix::zeros(n, m);
    for (c, &i) in inner_idx.iter().enumerate() {
        rhs[(i, c)] = 1.0;
    }
    let x = chol.solve(&rhs);
    let s = DMatrix::from_fn(m, m, |r, c| 0.5 * (x[(inner_idx[r], c)] + x[(inner_idx[c], r)]));
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, 0).ok_or_else(|| Error::Eigen("symmetric eigensolver failed".into()))?;
    let top = eig.eigenvalues.imax();
    let lambda = forms.grid.cell_volume() * eig.eigenvalues[top];
    let v = eig.eigenvectors.column(top);
    let mut u = DVector::zeros(n);
    for (c, &i) in inner_idx.iter().enumerate() {
        u[i] = v[c];
    }
    let u = chol.solve(&u);
    let mut profile = forms.norms(u.as_slice());
    let denom = (profile[1].powi(2) + profile[2].powi(2)).sqrt();
    if denom > 0.0 {
        profile.iter_mut().for_each(|p| *p /= denom);
    }
    let best = lambda.max(0.0).sqrt();
    Ok(ConstantEstimate {
        tau,
        best_constant: best,
        sum_of_norms_bound: best * std::f64::consts::SQRT_2,
        maximizer_norm_profile: profile,
        resolution,
        resonant_mode: None,
    })
}

/// Terms of the tube estimate for a product-grid quasimode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeReport {
    /// `‖ψ‖` on `N_{h^δ}`.
    pub inner: f64,
    /// `‖ψ‖` on `N_{2h^δ} \ N_{h^δ}`.
    pub annulus: f64,
    /// `h^{2δ-2} ‖F‖` on `N_{2h^δ}`.
    pub forcing: f64,
    /// `inner / (annulus + forcing)`; zero when `inner` is zero.
    pub ratio: f64,
    /// `‖(h²Δ+1)ψ - F‖ / max(‖F‖, ‖ψ‖)`.
    pub consistency: f64,
}

fn tube_regions(grid: &Arc<ProductGrid>, center: &[f64], beta: f64) -> Result<(Region, Region, Region)> {
    let inner = tube_mask(grid, center, beta)?;
    let outer = tube_mask(grid, center, 2.0 * beta)?;
    let annulus = inner.annulus_to(&outer)?;
    Ok((inner.region().clone(), annulus, outer.region().clone()))
}

fn ratio_of(inner: f64, annulus: f64, forcing: f64) -> f64 {
    if inner == 0.0 {
        0.0
    } else {
        inner / (annulus + forcing)
    }
}

/// `F = (h²Δ + 1)ψ`.
pub fn quasimode_residual(psi: &Field, h: f64) -> Result<Field> {
    let lap = SpectralLaplacian::new(psi.grid().clone());
    let dpsi = apply_laplacian(&lap, psi)?;
    dpsi.scale(C64::new(h * h, 0.0)).add_scaled(C64::new(1.0, 0.0), psi)
}

/// Evaluates both sides of the tube estimate for `(h²Δ+1)ψ = F` around the
/// slice `q = center`, after checking the equation to `1e-8` relative.
pub fn product_quasimode_check(psi: &Field, f: &Field, h: f64, delta: f64, center: &[f64]) -> Result<QuasimodeReport> {
    check_h_delta(h, delta)?;
    psi.grid().check_same(f.grid())?;
    let recomputed = quasimode_residual(psi, h)?;
    let diff = recomputed.add_scaled(C64::new(-1.0, 0.0), f)?.norm();
    let scale = f.norm().max(psi.norm());
    let consistency = if scale == 0.0 { 0.0 } else { diff / scale };
    if consistency > 1e-8 {
        return Err(invalid(format!("F is not (h²Δ+1)ψ: relative residual {consistency:.3e}")));
    }
    let beta = h.powf(delta);
    let (inner_r, ann_r, outer_r) = tube_regions(psi.grid(), center, beta)?;
    let inner = region_l2_norm(psi, &inner_r)?;
    let annulus = region_l2_norm(psi, &ann_r)?;
    let forcing = h.powf(2.0 * delta - 2.0) * region_l2_norm(f, &outer_r)?;
    Ok(QuasimodeReport { inner, annulus, forcing, ratio: ratio_of(inner, annulus, forcing), consistency })
}

fn check_h_delta(h: f64, delta: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid(format!("h must be positive, got {h}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// The same three terms assembled from Fourier fibers along factor 1, each
/// fiber checked against its Helmholtz equation `(-Δ₂ - τ_n)ψ̂_n = -h⁻²F̂_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberwiseReport {
    pub inner: f64,
    pub annulus: f64,
    pub forcing: f64,
    /// `sqrt(Σ_n ‖r_n‖²) / sqrt(Σ_n (1+|τ_n|)²‖ψ̂_n‖²)` with `r_n` the residual
    /// of the fiber Helmholtz equations.
    pub max_fiber_residual: f64,
    /// `τ_n = h⁻² - λ_n²` per fiber, FFT order.
    pub taus: Vec<f64>,
}

pub fn fiberwise_quasimode_norms(psi: &Field, f: &Field, h: f64, delta: f64, center: &[f64]) -> Result<FiberwiseReport> {
    check_h_delta(h, delta)?;
    psi.grid().check_same(f.grid())?;
    let dpsi = fiber_decompose(psi)?;
    let df = fiber_decompose(f)?;
    let fiber_grid = dpsi.coefficients[0].grid().clone();
    let beta = h.powf(delta);
    let (inner_r, ann_r, outer_r) = tube_regions(&fiber_grid, center, beta)?;
    let lap = SpectralLaplacian::new(fiber_grid);
    let (mut inner, mut annulus, mut forcing, mut res, mut scale) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut taus = Vec::with_capacity(dpsi.eigenvalues.len());
    for ((lambda_sq, p), g) in dpsi.eigenvalues.iter().zip(&dpsi.coefficients).zip(&df.coefficients) {
        let tau = mode_parameter(h, *lambda_sq);
        taus.push(tau);
        inner += region_l2_norm(p, &inner_r)?.powi(2);
        annulus += region_l2_norm(p, &ann_r)?.powi(2);
        forcing += region_l2_norm(g, &outer_r)?.powi(2);
        let op = HelmholtzOperator::new(tau, lap.clone())?;
        let lhs = crate::operators::apply_helmholtz(&op, p)?;
        let rhs = g.scale(C64::new(-1.0 / (h * h), 0.0));
        res += lhs.add_scaled(C64::new(-1.0, 0.0), &rhs)?.norm().powi(2);
        scale += (p.norm() * (1.0 + tau.abs())).powi(2);
    }
    let worst = if scale > 0.0 { (res / scale).sqrt() } else { 0.0 };
    Ok(FiberwiseReport {
        inner: inner.sqrt(),
        annulus: annulus.sqrt(),
        forcing: h.powf(2.0 * delta - 2.0) * forcing.sqrt(),
        max_fiber_residual: worst,
        taus,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeSuiteConfig {
    pub trials: usize,
    pub seed: u64,
    pub h: f64,
    pub delta: f64,
    pub max_modes: usize,
    /// Points per axis of the 2-torus `(R/2πZ)²`.
    pub resolution: usize,
}

impl Default for QuasimodeSuiteConfig {
    fn default() -> Self {
        Self { trials: 1000, seed: 20_150_101, h: 2f64.powi(-6), delta: 0.25, max_modes: 20, resolution: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeSuiteReport {
    /// Running maximum of the ratio over the trials.
    pub c_obs: f64,
    pub ratios: Vec<f64>,
}

/// Random superpositions of at most `max_modes` Fourier modes, half of them
/// drawn next to the characteristic circle `|k| = 1/h` with small factor-2
/// frequency so that they concentrate near the tube.
pub fn random_quasimode_suite(config: &QuasimodeSuiteConfig) -> Result<QuasimodeSuiteReport> {
    check_h_delta(config.h, config.delta)?;
    if config.max_modes == 0 {
        return Err(invalid("need at least one mode"));
    }
    let n = config.resolution;
    let grid = Arc::new(ProductGrid::standard_2torus(n, n)?);
    let kmax = (n / 2 - 1) as i64;
    let radius = 1.0 / config.h;
    if radius + 1.0 > kmax as f64 {
        return Err(invalid("resolution too coarse for the characteristic circle"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ratios = Vec::with_capacity(config.trials);
    let mut c_obs = 0.0f64;
    for _ in 0..config.trials {
        let count = rng.random_range(1..=config.max_modes);
        let mut spectrum = vec![C64::new(0.0, 0.0); grid.node_count()];
        for _ in 0..count {
            let (k1, k2) = if rng.random_bool(0.5) {
                let k2 = rng.random_range(-8i64..=8);
                let k1 = ((radius * radius - (k2 * k2) as f64).sqrt().round() as i64) * if rng.random_bool(0.5) { 1 } else { -1 };
                (k1, k2)
            } else {
                (rng.random_range(-kmax..=kmax), rng.random_range(-kmax..=kmax))
            };
            let amp = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let i1 = k1.rem_euclid(n as i64) as usize;
            let i2 = k2.rem_euclid(n as i64) as usize;
            spectrum[i1 * n + i2] += amp;
        }
        let plan = crate::spectral::FftPlan::new(grid.resolution());
        plan.inverse(&mut spectrum);
        let psi = Field::new(grid.clone(), spectrum)?;
        let f = quasimode_residual(&psi, config.h)?;
        let report = product_quasimode_check(&psi, &f, config.h, config.delta, &[0.0])?;
        c_obs = c_obs.max(report.ratio);
        ratios.push(report.ratio);
    }
    Ok(QuasimodeSuiteReport { c_obs, ratios })
}

/// `e_n = (x1 + i x2)^n` on the unit sphere `S^d`; `λ_n = n(n+d-1) = h_n⁻²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereTubeQuery {
    pub n: u64,
    pub d: u32,
    pub delta: f64,
}

impl SphereTubeQuery {
    pub fn new(n: u64, d: u32, delta: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("sphere dimension must be at least 2, got {d}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { n, d, delta })
    }

    pub fn eigenvalue(&self) -> f64 {
        self.n as f64 * (self.n as f64 + self.d as f64 - 1.0)
    }

    /// `λ_n^{-1/2}`; infinite for `n = 0`.
    pub fn h(&self) -> f64 {
        1.0 / self.eigenvalue().sqrt()
    }

    pub fn tube_radius(&self) -> f64 {
        self.h().powf(self.delta)
    }
}

/// `|e_n|²` masses of the tube of radius `β` around the great circle
/// `x1² + x2² = 1`, of the annulus from `β` to `2β`, and of the whole sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereMasses {
    pub inner: f64,
    pub annulus: f64,
    pub total: f64,
    pub ln_inner: f64,
    pub ln_annulus: f64,
}

/// Surface area of the unit sphere `S^m` (`|S^0| = 2`).
pub fn sphere_area(m: u32) -> f64 {
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 1.0) * sphere_area(m - 2),
    }
}

const MASS_RTOL: f64 = 1e-12;
const MASS_FAIL: f64 = 1e-10;

/// With `ρ` the distance to the great circle, `|e_n|² dv` is
/// `|S^1| |S^{d-2}| cos^{2n+1}ρ sin^{d-2}ρ dρ` on `[0, π/2]`.
/// Integrals are evaluated after dividing by the integrand's maximum on the
/// interval, and returned with their logarithms.
fn log_mass(n: u64, d: u32, a: f64, b: f64) -> Result<f64> {
    let b = b.min(PI / 2.0);
    if a >= b {
        return Ok(f64::NEG_INFINITY);
    }
    let p = 2.0 * n as f64 + 1.0;
    let q = d as f64 - 2.0;
    let g = |r: f64| {
        let c = p * r.cos().ln();
        if q == 0.0 {
            c
        } else {
            c + q * r.sin().ln()
        }
    };
    let peak = (q / p).sqrt().atan();
    let gmax = g(peak.clamp(a, b));
    let r = integrate(|r| (g(r) - gmax).exp(), a, b, MASS_RTOL, MASS_FAIL, 4000)?;
    if r.value <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(gmax + r.value.ln() + (sphere_area(1) * sphere_area(d - 2)).ln())
}

/// Masses for an explicit tube radius `beta`; radii are clipped at `π/2`.
pub fn sphere_masses(n: u64, d: u32, beta: f64) -> Result<SphereMasses> {
    if d < 2 {
        return Err(invalid(format!("sphere dimension must be at least 2, got {d}")));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(invalid("tube radius must be positive"));
    }
    let ln_inner = log_mass(n, d, 0.0, beta)?;
    let ln_annulus = log_mass(n, d, beta.min(PI / 2.0), 2.0 * beta)?;
    let ln_total = log_mass(n, d, 0.0, PI / 2.0)?;
    Ok(SphereMasses { inner: ln_inner.exp(), annulus: ln_annulus.exp(), total: ln_total.exp(), ln_inner, ln_annulus })
}

pub fn sphere_tube_mass(query: &SphereTubeQuery) -> Result<SphereMasses> {
    sphere_masses(query.n, query.d, query.tube_radius())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub n: u64,
    pub h: f64,
    pub inner_mass: f64,
    pub annulus_mass: f64,
    /// `sqrt(inner / annulus)`, the ratio of the two sides of the tube estimate with `F = 0`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleTable {
    pub rows: Vec<CounterexampleRow>,
    pub strictly_increasing: bool,
}

pub fn counterexample_ratio(d: u32, delta: f64, n_list: &[u64]) -> Result<CounterexampleTable> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("n values must be strictly increasing"));
    }
    let rows = n_list
        .iter()
        .map(|&n| {
            let q = SphereTubeQuery::new(n, d, delta)?;
            let m = sphere_tube_mass(&q).map_err(|e| e.at(n as f64))?;
            Ok(CounterexampleRow {
                n,
                h: q.h(),
                inner_mass: m.inner,
                annulus_mass: m.annulus,
                ratio: (0.5 * (m.ln_inner - m.ln_annulus)).exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let strictly_increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    Ok(CounterexampleTable { rows, strictly_increasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn helmholtz_constant_dominates_test_fields() {
        let est = helmholtz_best_constant(0.0, 1.0, 2.0, ForcingWeight::Semiclassical, 64).unwrap();
        let forms = HelmholtzForms::new(0.0, 1.0, 2.0, ForcingWeight::Semiclassical, 64).unwrap();
        let nodes: Vec<f64> = (0..64).map(|i| forms.grid.node_coordinates(i)[0]).collect();
        // constants give Q = #inner / #annulus: 31 nodes against 32
        let one = vec![1.0; 64];
        assert!((forms.quotient(&one) - 31.0 / 32.0).abs() < 1e-12);
        // fields vanishing on the inner ball
        let outside: Vec<f64> = nodes.iter().zip(&forms.inner).map(|(x, m)| if *m { 0.0 } else { x.sin() }).collect();
        assert_eq!(forms.quotient(&outside), 0.0);
        for u in [one, nodes.iter().map(|x| (x * PI / 2.0).cos()).collect::<Vec<_>>()] {
            assert!(forms.quotient(&u) <= est.best_constant.powi(2) * (1.0 + 1e-10));
        }
        let [a, b, c] = est.maximizer_norm_profile;
        assert!(((a * a) / (b * b + c * c) - est.best_constant.powi(2)).abs() < 1e-8 * est.best_constant.powi(2));
        assert!((est.sum_of_norms_bound - est.best_constant * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn helmholtz_constant_matches_whitened_eigenproblem() {
        for tau in [-100.0, 0.0, 50.0] {
            let est = helmholtz_best_constant(tau, 1.0, 2.0, ForcingWeight::Semiclassical, 48).unwrap();
            let forms = HelmholtzForms::new(tau, 1.0, 2.0, ForcingWeight::Semiclassical, 48).unwrap();
            // oracle: L⁻¹ A L⁻ᵀ with B = L Lᵀ, full eigendecomposition
            let l = forms.denominator().cholesky().unwrap().l();
            let linv = l.try_inverse().unwrap();
            let w = &linv * forms.numerator() * linv.transpose();
            let lmax = SymmetricEigen::new(w).eigenvalues.max();
            assert!((est.best_constant - lmax.sqrt()).abs() < 1e-9 * lmax.sqrt(), "tau {tau}");
        }
    }

    #[test]
    fn elliptic_constant_is_small() {
        let est = helmholtz_best_constant(-1e4, 1.0, 2.0, ForcingWeight::Semiclassical, 128).unwrap();
        assert!(est.best_constant <= 2.0);
        // ‖(-Δ-τ)u‖ >= |τ| ‖u‖ bounds the constant by (1 + |τ|^{1/2}) / |τ|
        assert!(est.best_constant <= 101.0 / 1e4 * (1.0 + 1e-9));
    }

    #[test]
    fn helmholtz_rejects_bad_input() {
        assert!(helmholtz_best_constant(0.0, 2.0, 1.0, ForcingWeight::Unit, 64).is_err());
        assert!(helmholtz_best_constant(1e4, 1.0, 2.0, ForcingWeight::Unit, 64).is_err());
    }

    fn standing_wave(n: usize) -> (Field, f64) {
        let g = Arc::new(ProductGrid::standard_2torus(n, n).unwrap());
        // h²(3² + 4²) = 1
        (Field::from_fn(g, |x| C64::new((3.0 * x[0]).cos() * (4.0 * x[1]).cos(), 0.0)), 0.2)
    }

    #[test]
    fn characteristic_standing_wave_ratio() {
        let (psi, h) = standing_wave(1024);
        let f = quasimode_residual(&psi, h).unwrap();
        assert!(f.norm() < 1e-10);
        let delta = 0.25;
        let r = product_quasimode_check(&psi, &f, h, delta, &[0.0]).unwrap();
        let beta = h.powf(delta);
        // ∫_{|y|<a} cos²(4y) dy = a + sin(8a)/8
        let m = |a: f64| a + (8.0 * a).sin() / 8.0;
        let exact = (m(beta) / (m(2.0 * beta) - m(beta))).sqrt();
        let dy = TAU / 1024.0;
        assert!((r.ratio - exact).abs() < 2.0 * dy / beta * exact, "{} vs {exact}", r.ratio);
        assert!(r.forcing < 1e-8);
    }

    #[test]
    fn zero_quasimode() {
        let g = Arc::new(ProductGrid::standard_2torus(32, 32).unwrap());
        let z = Field::zeros(g);
        let r = product_quasimode_check(&z, &z, 0.1, 0.25, &[0.0]).unwrap();
        assert_eq!((r.inner, r.annulus, r.forcing, r.ratio), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn inconsistent_forcing_is_rejected() {
        let (psi, h) = standing_wave(64);
        let f = Field::constant(psi.grid().clone(), C64::new(1e-3, 0.0));
        assert!(matches!(product_quasimode_check(&psi, &f, h, 0.25, &[0.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn fiberwise_norms_match_direct() {
        let g = Arc::new(ProductGrid::standard_2torus(64, 64).unwrap());
        let psi = Field::from_fn(g, |x| {
            C64::from_polar(1.0, 9.0 * x[0]) * (-(x[1] - PI).powi(2) / 0.2).exp() + C64::new((2.0 * x[0] + x[1]).sin(), 0.0)
        });
        let h = 0.11;
        let f = quasimode_residual(&psi, h).unwrap();
        let direct = product_quasimode_check(&psi, &f, h, 0.3, &[PI]).unwrap();
        let fib = fiberwise_quasimode_norms(&psi, &f, h, 0.3, &[PI]).unwrap();
        for (a, b) in [(direct.inner, fib.inner), (direct.annulus, fib.annulus), (direct.forcing, fib.forcing)] {
            assert!((a - b).abs() <= 1e-10 * a.max(b), "{a} vs {b}");
        }
        assert!(fib.max_fiber_residual < 1e-10);
        assert!((fib.taus[1] - (1.0 / (h * h) - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn sphere_eigenvalue_bookkeeping() {
        let q = SphereTubeQuery::new(3, 2, 0.25).unwrap();
        assert_eq!(q.eigenvalue(), 12.0);
        assert!((q.h() - 12f64.powf(-0.5)).abs() < 1e-15);
        assert!(SphereTubeQuery::new(3, 1, 0.25).is_err());
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((sphere_area(4) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_eigenfunction_masses() {
        for beta in [0.1, 0.5, 1.2] {
            let m = sphere_masses(0, 2, beta).unwrap();
            assert!((m.total - 4.0 * PI).abs() < 1e-10);
            assert!((m.inner / m.total - beta.sin()).abs() < 1e-12);
            let ann = ((2.0 * beta).min(PI / 2.0).sin() - beta.sin()) * 4.0 * PI;
            assert!((m.annulus - ann).abs() < 1e-10 * (1.0 + ann));
        }
        // total mass on S^d equals |S^d| for the constant function
        for d in 2..6 {
            let m = sphere_masses(0, d, 0.3).unwrap();
            assert!((m.total - sphere_area(d)).abs() < 1e-10 * sphere_area(d), "d = {d}");
        }
        let q = SphereTubeQuery::new(0, 2, 0.25).unwrap();
        let m = sphere_tube_mass(&q).unwrap();
        assert!((m.inner - m.total).abs() < 1e-12 && m.annulus == 0.0);
    }

    fn edge(k: u64, x: f64) -> f64 {
        x.cos().powf(k as f64 - 1.0) * x.sin()
    }

    /// `∫_0^b cos^m` for odd `m` by the reduction formula
    /// `I_k = cos^{k-1}b sin b / k + (k-1)/k I_{k-2}`; every term is positive.
    fn cos_power_from_zero(m: u64, b: f64) -> f64 {
        let mut i = b.sin();
        let mut k = 3;
        while k <= m {
            i = edge(k, b) / k as f64 + (k as f64 - 1.0) / k as f64 * i;
            k += 2;
        }
        i
    }

    /// `∫_a^b cos^m` for odd `m` and `a > 0`: the same recursion run downward
    /// from an order where the integral is negligible, which is stable.
    fn cos_power_away_from_zero(m: u64, a: f64, b: f64) -> f64 {
        let extra = (60.0 / -a.cos().ln()).ceil() as u64;
        let mut k = m + 2 * extra;
        let mut d = 0.0;
        while k > m {
            d = (k as f64 * d + edge(k, a) - edge(k, b)) / (k as f64 - 1.0);
            k -= 2;
        }
        d
    }

    #[test]
    fn circle_masses_match_reduction_formula() {
        for n in [10u64, 100, 1000, 10_000] {
            let q = SphereTubeQuery::new(n, 2, 0.25).unwrap();
            let m = sphere_tube_mass(&q).unwrap();
            let beta = q.tube_radius();
            let m2 = 2 * n + 1;
            let inner = 4.0 * PI * cos_power_from_zero(m2, beta);
            let ann = 4.0 * PI * cos_power_away_from_zero(m2, beta, 2.0 * beta);
            assert!((m.inner - inner).abs() <= 1e-10 * inner, "n = {n}");
            assert!((m.annulus - ann).abs() <= 1e-9 * ann, "n = {n}: {} vs {ann}", m.annulus);
        }
    }

    #[test]
    fn masses_are_monotone_and_bounded() {
        let mut prev = 0.0;
        for beta in [0.05, 0.1, 0.2, 0.4] {
            let m = sphere_masses(50, 3, beta).unwrap();
            assert!(m.inner + m.annulus <= m.total * (1.0 + 1e-12));
            assert!(m.inner >= prev);
            prev = m.inner;
        }
    }

    #[test]
    fn counterexample_tables() {
        let t = counterexample_ratio(2, 0.25, &[100, 1000, 10_000]).unwrap();
        assert!(t.strictly_increasing);
        assert!(t.rows[2].ratio > 10.0 * t.rows[0].ratio);
        let scaled: Vec<f64> = t.rows.iter().map(|r| r.inner_mass.sqrt() * r.h.powf(-0.25)).collect();
        for w in scaled.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.1);
        }
        let half = counterexample_ratio(2, 0.5, &[100, 1000, 10_000]).unwrap();
        let (lo, hi) = half.rows.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(r.ratio), h.max(r.ratio)));
        assert!(hi / lo < 2.0);
        assert!(counterexample_ratio(2, 0.25, &[10, 5]).is_err());
    }
}
