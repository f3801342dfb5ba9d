//! Fourier-multiplier operators on flat product tori.
//!
//! All operators act exactly in Fourier space: the Laplacian has symbol
//! `-|k|²` with `k` ranging over the dual lattice `2πZ/c` of each axis.

mod sigma;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Field, ProductGrid};
use crate::spectral::{squared_wavenumbers, FftPlan};
use crate::C64;

pub use sigma::{
    dense_min_singular_value, inverse_iteration_min_singular_value, min_singular_value, DenseMap, LinearMap,
    SigmaEstimate, SigmaOptions, SigmaPath,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug)]
pub struct SpectralLaplacian {
    grid: Arc<ProductGrid>,
    plan: Arc<FftPlan>,
    /// `|k|²` per Fourier mode, FFT order.
    symbol: Vec<f64>,
}

impl SpectralLaplacian {
    pub fn new(grid: Arc<ProductGrid>) -> Self {
        let plan = Arc::new(FftPlan::new(grid.resolution()));
        let symbol = squared_wavenumbers(grid.resolution(), &grid.axis_lengths());
        Self { grid, plan, symbol }
    }

    pub fn grid(&self) -> &Arc<ProductGrid> {
        &self.grid
    }

    pub fn plan(&self) -> &Arc<FftPlan> {
        &self.plan
    }

    /// `|k|²` per mode in FFT order; the Laplacian multiplier is its negative.
    pub fn squared_wavenumbers(&self) -> &[f64] {
        &self.symbol
    }

    pub fn multipliers(&self) -> Vec<f64> {
        self.symbol.iter().map(|s| -s).collect()
    }

    /// Applies the Fourier multiplier `m(|k|²)` to raw nodal values.
    pub fn apply_symbol(&self, x: &[C64], m: impl Fn(f64) -> C64) -> Vec<C64> {
        let mut data = x.to_vec();
        self.plan.forward(&mut data);
        for (v, s) in data.iter_mut().zip(&self.symbol) {
            *v *= m(*s);
        }
        self.plan.inverse(&mut data);
        data
    }

    /// `∫ |∇f|²`, evaluated through the symbol so that it equals `⟨-Δf, f⟩`.
    pub fn dirichlet_energy(&self, f: &Field) -> Result<f64> {
        self.grid.check_same(f.grid())?;
        let mut data = f.values().to_vec();
        self.plan.forward(&mut data);
        let s: f64 = data.iter().zip(&self.symbol).map(|(v, k2)| k2 * v.norm_sqr()).sum();
        Ok(s * self.grid.cell_volume() / self.grid.node_count() as f64)
    }

    fn check(&self, f: &Field) -> Result<()> {
        self.grid.check_same(f.grid())
    }
}

pub fn apply_laplacian(lap: &SpectralLaplacian, f: &Field) -> Result<Field> {
    lap.check(f)?;
    f.with_values(lap.apply_symbol(f.values(), |s| C64::new(-s, 0.0)))
}

/// `L_h = -h²Δ - 1 + i h b`.
#[derive(Clone, Debug)]
pub struct SemiclassicalOperator {
    h: f64,
    laplacian: SpectralLaplacian,
    b: Vec<f64>,
    /// `b` on one fiber when it does not depend on the factor-1 coordinate.
    fiber_b: Option<Vec<f64>>,
}

impl SemiclassicalOperator {
    pub fn new(h: f64, laplacian: SpectralLaplacian, b: &Field) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid(format!("semiclassical parameter must be positive, got {h}")));
        }
        laplacian.check(b)?;
        let bad: Vec<usize> = b
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.im != 0.0 || v.re < 0.0 || !v.re.is_finite())
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::Validation { message: "damping must be real and nonnegative".into(), nodes: bad });
        }
        let b: Vec<f64> = b.values().iter().map(|v| v.re).collect();
        let n2 = laplacian.grid.fiber_len();
        let first = &b[..n2];
        let fiber_b = b.chunks(n2).all(|c| c == first).then(|| first.to_vec());
        Ok(Self { h, laplacian, b, fiber_b })
    }

    /// Undamped operator `-h²Δ - 1`.
    pub fn undamped(h: f64, laplacian: SpectralLaplacian) -> Result<Self> {
        let zero = Field::zeros(laplacian.grid.clone());
        Self::new(h, laplacian, &zero)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn laplacian(&self) -> &SpectralLaplacian {
        &self.laplacian
    }

    pub fn damping(&self) -> &[f64] {
        &self.b
    }

    /// Distinct `λ²` over the factor-1 Fourier modes of the grid, ascending.
    pub fn fiber_eigenvalues(&self) -> Vec<f64> {
        factor1_eigenvalues(&self.laplacian.grid)
    }

    /// The restriction of `L_h` to the factor-1 mode with eigenvalue `-λ²`:
    /// `-h²Δ₂ + h²λ² - 1 + i h b` on factor 2. `None` if `b` varies along factor 1.
    pub fn fiber(&self, lambda_sq: f64) -> Option<FiberOperator> {
        let b = self.fiber_b.clone()?;
        let lap2 = SpectralLaplacian::new(Arc::new(self.laplacian.grid.fiber_grid()));
        Some(FiberOperator { h: self.h, shift: self.h * self.h * lambda_sq - 1.0, laplacian: lap2, b })
    }

    /// Minimizes the singular values fiber by fiber when `b` is constant along
    /// factor 1, else falls back to the full-grid computation.
    pub fn min_singular_value(&self, options: &SigmaOptions) -> Result<FiberedSigma> {
        if self.fiber_b.is_none() {
            let est = min_singular_value(self, options)?;
            return Ok(FiberedSigma { value: est.value, lambda_sq: None, fibers_evaluated: 1, fibers_pruned: 0 });
        }
        fibered_min_singular_value(self, options)
    }
}

pub fn apply_lh(op: &SemiclassicalOperator, f: &Field) -> Result<Field> {
    op.laplacian.check(f)?;
    let mut out = vec![C64::new(0.0, 0.0); f.values().len()];
    op.apply(f.values(), &mut out);
    f.with_values(out)
}

/// Both sides of the two energy inequalities satisfied by any pair `L_h φ = f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AprioriReport {
    /// `h ∫ b |φ|²`, which equals `Im ⟨L_h φ, φ⟩`.
    pub damping_term: f64,
    /// `Im ⟨f, φ⟩`, computed independently of `damping_term`.
    pub imaginary_pairing: f64,
    /// `h² ∫ |∇φ|²`.
    pub gradient_term: f64,
    /// `‖φ‖ ‖f‖`.
    pub pairing_bound: f64,
    pub mass: f64,
}

impl AprioriReport {
    /// Slack in `h ∫ b|φ|² <= ‖φ‖‖f‖`, relative to the bound; negative on violation.
    pub fn damping_slack(&self) -> f64 {
        (self.pairing_bound - self.damping_term) / self.pairing_bound.max(f64::MIN_POSITIVE)
    }

    /// Slack in `h²‖∇φ‖² <= ‖φ‖² + ‖φ‖‖f‖`, relative to the bound.
    pub fn gradient_slack(&self) -> f64 {
        let bound = self.mass + self.pairing_bound;
        (bound - self.gradient_term) / bound.max(f64::MIN_POSITIVE)
    }
}

pub fn apriori_report(op: &SemiclassicalOperator, phi: &Field) -> Result<AprioriReport> {
    let f = apply_lh(op, phi)?;
    let cell = op.laplacian.grid.cell_volume();
    let damping_term = op.h * cell * op.b.iter().zip(phi.values()).map(|(b, v)| b * v.norm_sqr()).sum::<f64>();
    let imaginary_pairing = f.inner(phi)?.im;
    let gradient_term = op.h * op.h * op.laplacian.dirichlet_energy(phi)?;
    let n = phi.norm();
    Ok(AprioriReport { damping_term, imaginary_pairing, gradient_term, pairing_bound: n * f.norm(), mass: n * n })
}

impl LinearMap for SemiclassicalOperator {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let h2 = self.h * self.h;
        let lap = self.laplacian.apply_symbol(x, |s| C64::new(h2 * s - 1.0, 0.0));
        for (((yi, li), xi), bi) in y.iter_mut().zip(lap).zip(x).zip(&self.b) {
            *yi = li + I * (self.h * bi) * xi;
        }
    }

    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        let h2 = self.h * self.h;
        let lap = self.laplacian.apply_symbol(x, |s| C64::new(h2 * s - 1.0, 0.0));
        for (((yi, li), xi), bi) in y.iter_mut().zip(lap).zip(x).zip(&self.b) {
            *yi = li - I * (self.h * bi) * xi;
        }
    }
}

/// One Fourier fiber of `L_h`.
#[derive(Clone, Debug)]
pub struct FiberOperator {
    h: f64,
    shift: f64,
    laplacian: SpectralLaplacian,
    b: Vec<f64>,
}

impl FiberOperator {
    /// `h²λ² - 1`. When nonnegative it bounds the smallest singular value from below.
    pub fn shift(&self) -> f64 {
        self.shift
    }
}

impl LinearMap for FiberOperator {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let h2 = self.h * self.h;
        let lap = self.laplacian.apply_symbol(x, |s| C64::new(h2 * s + self.shift, 0.0));
        for (((yi, li), xi), bi) in y.iter_mut().zip(lap).zip(x).zip(&self.b) {
            *yi = li + I * (self.h * bi) * xi;
        }
    }

    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        let h2 = self.h * self.h;
        let lap = self.laplacian.apply_symbol(x, |s| C64::new(h2 * s + self.shift, 0.0));
        for (((yi, li), xi), bi) in y.iter_mut().zip(lap).zip(x).zip(&self.b) {
            *yi = li - I * (self.h * bi) * xi;
        }
    }

    fn to_dense(&self) -> DMatrix<C64> {
        // -h²Δ₂ is circulant in nodal space: one transform gives its first column
        let n = self.dim();
        let h2 = self.h * self.h;
        let mut e0 = vec![C64::new(0.0, 0.0); n];
        e0[0] = C64::new(1.0, 0.0);
        let col = self.laplacian.apply_symbol(&e0, |s| C64::new(h2 * s, 0.0));
        if self.laplacian.grid.resolution().len() != 1 {
            return sigma::assemble(self);
        }
        DMatrix::from_fn(n, n, |i, j| {
            let mut v = col[(i + n - j) % n];
            if i == j {
                v += C64::new(self.shift, self.h * self.b[i]);
            }
            v
        })
    }
}

/// Fiberwise minimum of the singular values of `L_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberedSigma {
    pub value: f64,
    /// `λ²` of the minimizing fiber.
    pub lambda_sq: Option<f64>,
    pub fibers_evaluated: usize,
    pub fibers_pruned: usize,
}

fn fibered_min_singular_value(op: &SemiclassicalOperator, options: &SigmaOptions) -> Result<FiberedSigma> {
    let mut lambdas = op.fiber_eigenvalues();
    let h2 = op.h * op.h;
    lambdas.sort_by(|a, b| (h2 * a - 1.0).abs().total_cmp(&(h2 * b - 1.0).abs()));
    let first = lambdas[0];
    let mut best = min_singular_value(&op.fiber(first).expect("fiber-constant damping"), options)?.value;
    let mut best_lambda = first;
    // σ_min(fiber) >= shift whenever the shift is nonnegative
    let rest: Vec<f64> = lambdas[1..].iter().copied().filter(|l| h2 * l - 1.0 < best).collect();
    let pruned = lambdas.len() - 1 - rest.len();
    let results = map_fibers(&rest, |l| {
        min_singular_value(&op.fiber(l).expect("fiber-constant damping"), options).map(|e| (l, e.value))
    });
    for r in results {
        let (l, v) = r?;
        if v < best || (v == best && l < best_lambda) {
            best = v;
            best_lambda = l;
        }
    }
    Ok(FiberedSigma {
        value: best,
        lambda_sq: Some(best_lambda),
        fibers_evaluated: rest.len() + 1,
        fibers_pruned: pruned,
    })
}

#[cfg(feature = "parallel")]
fn map_fibers<T: Send>(items: &[f64], f: impl Fn(f64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    items.par_iter().map(|l| f(*l)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_fibers<T>(items: &[f64], f: impl Fn(f64) -> T) -> Vec<T> {
    items.iter().map(|l| f(*l)).collect()
}

/// `-Δ - τ` on a factor-2 grid.
#[derive(Clone, Debug)]
pub struct HelmholtzOperator {
    tau: f64,
    laplacian: SpectralLaplacian,
}

impl HelmholtzOperator {
    pub fn new(tau: f64, laplacian: SpectralLaplacian) -> Result<Self> {
        if !tau.is_finite() {
            return Err(invalid("tau must be finite"));
        }
        if laplacian.grid.factor1().is_some() {
            return Err(invalid("Helmholtz operator lives on a factor-2 grid"));
        }
        Ok(Self { tau, laplacian })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn laplacian(&self) -> &SpectralLaplacian {
        &self.laplacian
    }
}

pub fn apply_helmholtz(op: &HelmholtzOperator, u: &Field) -> Result<Field> {
    op.laplacian.check(u)?;
    u.with_values(op.laplacian.apply_symbol(u.values(), |s| C64::new(s - op.tau, 0.0)))
}

impl LinearMap for HelmholtzOperator {
    fn dim(&self) -> usize {
        self.laplacian.grid.node_count()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(&self.laplacian.apply_symbol(x, |s| C64::new(s - self.tau, 0.0)));
    }

    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        self.apply(x, y)
    }
}

/// `τ = h⁻² - λ²`, the Helmholtz parameter of the fiber with eigenvalue `-λ²`.
pub fn mode_parameter(h: f64, lambda_sq: f64) -> f64 {
    1.0 / (h * h) - lambda_sq
}

fn factor1_eigenvalues(grid: &ProductGrid) -> Vec<f64> {
    let split = grid.split();
    let lengths = grid.axis_lengths();
    let mut vals = squared_wavenumbers(&grid.resolution()[..split], &lengths[..split]);
    vals.sort_by(f64::total_cmp);
    vals.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    vals
}

/// Expansion `ψ(p, q) = Σ_n ψ̂_n(q) e_n(p)` in the orthonormal Fourier basis
/// `e_n = exp(i k_n·p) / sqrt(vol M1)` of factor 1.
#[derive(Clone, Debug)]
pub struct FiberDecomposition {
    grid: Arc<ProductGrid>,
    /// `λ_n² = |k_n|²` per factor-1 mode, FFT order.
    pub eigenvalues: Vec<f64>,
    /// `ψ̂_n` on the factor-2 grid.
    pub coefficients: Vec<Field>,
}

pub fn fiber_decompose(psi: &Field) -> Result<FiberDecomposition> {
    let grid = psi.grid().clone();
    let split = grid.split();
    let factor1 = grid.factor1().ok_or_else(|| invalid("fiber decomposition needs a product grid"))?;
    let plan = FftPlan::new(grid.resolution());
    let axes: Vec<usize> = (0..split).collect();
    let mut data = psi.values().to_vec();
    plan.forward_axes(&mut data, &axes);
    let n1 = grid.fiber_count();
    let scale = factor1.volume().sqrt() / n1 as f64;
    let fiber_grid = Arc::new(grid.fiber_grid());
    let coefficients = data
        .chunks(grid.fiber_len())
        .map(|c| Field::new(fiber_grid.clone(), c.iter().map(|v| v * scale).collect()))
        .collect::<Result<Vec<_>>>()?;
    let lengths = grid.axis_lengths();
    let eigenvalues = squared_wavenumbers(&grid.resolution()[..split], &lengths[..split]);
    Ok(FiberDecomposition { grid, eigenvalues, coefficients })
}

impl FiberDecomposition {
    pub fn grid(&self) -> &Arc<ProductGrid> {
        &self.grid
    }

    pub fn reconstruct(&self) -> Result<Field> {
        let split = self.grid.split();
        let factor1 = self.grid.factor1().expect("product grid");
        let n1 = self.grid.fiber_count();
        let scale = n1 as f64 / factor1.volume().sqrt();
        let mut data: Vec<C64> =
            self.coefficients.iter().flat_map(|c| c.values().iter().map(|v| v * scale)).collect();
        let plan = FftPlan::new(self.grid.resolution());
        let axes: Vec<usize> = (0..split).collect();
        plan.inverse_axes(&mut data, &axes);
        Field::new(self.grid.clone(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{region_l2_norm, Region, TorusFactor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn grid(n1: usize, n2: usize) -> Arc<ProductGrid> {
        Arc::new(ProductGrid::standard_2torus(n1, n2).unwrap())
    }

    fn circle(n: usize) -> Arc<ProductGrid> {
        Arc::new(ProductGrid::fiber(TorusFactor::circle(TAU).unwrap(), vec![n]).unwrap())
    }

    fn random_field(g: &Arc<ProductGrid>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.node_count()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        Field::new(g.clone(), v).unwrap()
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn laplacian_of_simple_modes() {
        let c = circle(32);
        let lap = SpectralLaplacian::new(c.clone());
        let one = Field::constant(c.clone(), C64::new(1.0, 0.0));
        assert!(apply_laplacian(&lap, &one).unwrap().values().iter().all(|v| v.norm() < 1e-13));
        let s = Field::from_fn(c.clone(), |x| C64::new(x[0].sin(), 0.0));
        let ds = apply_laplacian(&lap, &s).unwrap();
        assert!(max_diff(&ds, &s.scale(C64::new(-1.0, 0.0))) < 1e-13);
        let e = Field::from_fn(c.clone(), |x| C64::from_polar(1.0, 2.0 * x[0]));
        let de = apply_laplacian(&lap, &e).unwrap();
        assert!(max_diff(&de, &e.scale(C64::new(-4.0, 0.0))) < 1e-12);
        assert_eq!(lap.multipliers()[0], 0.0);
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = grid(16, 24);
        let lap = SpectralLaplacian::new(g.clone());
        let f = random_field(&g, 1);
        let h = random_field(&g, 2);
        let a = apply_laplacian(&lap, &f).unwrap().inner(&h).unwrap();
        let b = f.inner(&apply_laplacian(&lap, &h).unwrap()).unwrap();
        assert!((a - b).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn lh_examples() {
        let g = grid(32, 32);
        let lap = SpectralLaplacian::new(g.clone());
        // h²|k|² = 1 with k = (3, 4), h = 1/5
        let op = SemiclassicalOperator::undamped(0.2, lap.clone()).unwrap();
        let wave = Field::from_fn(g.clone(), |x| C64::from_polar(1.0, 3.0 * x[0] + 4.0 * x[1]));
        assert!(apply_lh(&op, &wave).unwrap().values().iter().all(|v| v.norm() < 1e-12));
        let one = Field::constant(g.clone(), C64::new(1.0, 0.0));
        assert!(max_diff(&apply_lh(&op, &one).unwrap(), &one.scale(C64::new(-1.0, 0.0))) < 1e-13);
        let damped = SemiclassicalOperator::new(0.1, lap, &one).unwrap();
        let out = apply_lh(&damped, &one).unwrap();
        assert!(max_diff(&out, &one.scale(C64::new(-1.0, 0.1))) < 1e-13);
    }

    #[test]
    fn lh_antiselfadjoint_part_is_damping() {
        let g = grid(8, 16);
        let lap = SpectralLaplacian::new(g.clone());
        let b = Field::from_fn(g.clone(), |x| C64::new(1.0 - x[1].cos(), 0.0));
        let op = SemiclassicalOperator::new(0.3, lap, &b).unwrap();
        let f = random_field(&g, 9);
        let mut a = vec![C64::new(0.0, 0.0); f.values().len()];
        let mut at = a.clone();
        op.apply(f.values(), &mut a);
        op.apply_adjoint(f.values(), &mut at);
        for ((x, y), (fv, bv)) in a.iter().zip(&at).zip(f.values().iter().zip(b.values())) {
            let anti = (x - y) * 0.5;
            assert!((anti - I * 0.3 * bv.re * fv).norm() < 1e-13);
        }
    }

    #[test]
    fn helmholtz_examples() {
        let c = circle(32);
        let lap = SpectralLaplacian::new(c.clone());
        let one = Field::constant(c.clone(), C64::new(1.0, 0.0));
        let h0 = HelmholtzOperator::new(0.0, lap.clone()).unwrap();
        assert!(apply_helmholtz(&h0, &one).unwrap().values().iter().all(|v| v.norm() < 1e-13));
        let h1 = HelmholtzOperator::new(1.0, lap.clone()).unwrap();
        let s = Field::from_fn(c.clone(), |x| C64::new(x[0].sin(), 0.0));
        assert!(apply_helmholtz(&h1, &s).unwrap().values().iter().all(|v| v.norm() < 1e-13));
        let e = Field::from_fn(c.clone(), |x| C64::from_polar(1.0, 2.0 * x[0]));
        assert!(max_diff(&apply_helmholtz(&h1, &e).unwrap(), &e.scale(C64::new(3.0, 0.0))) < 1e-12);
        let wrong = Field::constant(circle(16), C64::new(1.0, 0.0));
        assert!(matches!(apply_helmholtz(&h1, &wrong), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn mode_parameter_values() {
        assert_eq!(mode_parameter(1.0, 0.0), 1.0);
        assert!(mode_parameter(0.1, 100.0).abs() < 1e-12);
        assert!((mode_parameter(0.1, 36.0) - 64.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_field_has_one_coefficient() {
        let g = grid(16, 8);
        let vol1 = TAU;
        let gq = |q: f64| C64::new(q.cos() + 2.0, q.sin());
        // e_0 = 1/sqrt(vol1)
        let psi = Field::from_fn(g.clone(), |x| gq(x[1]) / vol1.sqrt());
        let dec = fiber_decompose(&psi).unwrap();
        for (n, c) in dec.coefficients.iter().enumerate() {
            if n == 0 {
                for (i, v) in c.values().iter().enumerate() {
                    let q = c.grid().node_coordinates(i)[0];
                    assert!((v - gq(q)).norm() < 1e-13);
                }
            } else {
                assert!(c.values().iter().all(|v| v.norm() < 1e-13));
            }
        }
        let zero = fiber_decompose(&Field::zeros(g)).unwrap();
        assert!(zero.coefficients.iter().all(|c| c.values().iter().all(|v| v.norm() == 0.0)));
    }

    #[test]
    fn fiber_parseval_against_double_sum() {
        let g = grid(16, 12);
        let psi = random_field(&g, 4);
        let dec = fiber_decompose(&psi).unwrap();
        let lhs: f64 = dec.coefficients.iter().map(|c| c.norm().powi(2)).sum();
        // oracle: direct double sum of |ψ|² dv
        let rhs: f64 = psi.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.cell_volume();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        let back = dec.reconstruct().unwrap();
        assert!(max_diff(&back, &psi) <= 1e-12 * psi.norm());
        assert_eq!(dec.eigenvalues[1], 1.0);
        let _ = region_l2_norm(&psi, &Region::whole(g)).unwrap();
    }

    #[test]
    fn fiber_operator_dense_matches_applied() {
        let g = grid(8, 16);
        let b = Field::from_fn(g.clone(), |x| C64::new(x[1].sin().powi(2), 0.0));
        let op = SemiclassicalOperator::new(0.25, SpectralLaplacian::new(g.clone()), &b).unwrap();
        let fiber = op.fiber(4.0).unwrap();
        let dense = fiber.to_dense();
        let generic = sigma::assemble(&fiber);
        assert!((dense - generic).norm() < 1e-12);
    }
}
