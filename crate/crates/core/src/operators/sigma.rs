//! Smallest singular value of a linear map given only through its action.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::C64;

/// A square linear map on `C^n` together with its adjoint.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]);

    /// Dense matrix of the map in the standard basis.
    fn to_dense(&self) -> DMatrix<C64> {
        assemble(self)
    }
}

pub(crate) fn assemble<M: LinearMap + ?Sized>(op: &M) -> DMatrix<C64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        op.apply(&e, &mut col);
        m.column_mut(j).copy_from_slice(&col);
        e[j] = C64::new(0.0, 0.0);
    }
    m
}

/// Wraps an explicit matrix.
#[derive(Clone, Debug)]
pub struct DenseMap(pub DMatrix<C64>);

impl LinearMap for DenseMap {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.0.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_adjoint(&self, x: &[C64], y: &mut [C64]) {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = self.0.column(j).iter().zip(x).map(|(a, b)| a.conj() * b).sum();
        }
    }

    fn to_dense(&self) -> DMatrix<C64> {
        self.0.clone()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaOptions {
    /// Relative accuracy requested from the iterative path.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest dimension handled by a dense decomposition.
    pub dense_limit: usize,
    /// Run both paths and require agreement within `10 * tolerance`.
    pub cross_check: bool,
    pub seed: u64,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 2000, dense_limit: 4096, cross_check: false, seed: 0x5eed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaPath {
    Dense,
    InverseIteration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaEstimate {
    pub value: f64,
    pub path: SigmaPath,
    pub iterations: usize,
    /// `‖A*A x - σ² x‖ / max(σ², tiny)` at the returned vector; zero for the dense path.
    pub residual: f64,
    /// The other path's value when a cross-check ran.
    pub cross_check: Option<f64>,
}

pub fn min_singular_value<M: LinearMap + ?Sized>(op: &M, options: &SigmaOptions) -> Result<SigmaEstimate> {
    if op.dim() == 0 {
        return Err(invalid("empty operator"));
    }
    if !(options.tolerance > 0.0 && options.tolerance < 1.0) {
        return Err(invalid("tolerance must lie in (0, 1)"));
    }
    let primary = if op.dim() <= options.dense_limit {
        SigmaEstimate {
            value: dense_min_singular_value(op)?,
            path: SigmaPath::Dense,
            iterations: 0,
            residual: 0.0,
            cross_check: None,
        }
    } else {
        inverse_iteration_min_singular_value(op, options)?
    };
    if !options.cross_check {
        return Ok(primary);
    }
    let other = match primary.path {
        SigmaPath::Dense => inverse_iteration_min_singular_value(op, options)?.value,
        SigmaPath::InverseIteration => dense_min_singular_value(op)?,
    };
    let scale = primary.value.abs().max(other.abs()).max(f64::MIN_POSITIVE);
    if (primary.value - other).abs() > 10.0 * options.tolerance * scale {
        return Err(Error::Eigen(format!(
            "dense and iterative singular values disagree: {} vs {other}",
            primary.value
        )));
    }
    Ok(SigmaEstimate { cross_check: Some(other), ..primary })
}

pub fn dense_min_singular_value<M: LinearMap + ?Sized>(op: &M) -> Result<f64> {
    let m = op.to_dense();
    let svd = m.try_svd(false, false, f64::EPSILON, 0).ok_or_else(|| Error::Eigen("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min))
}

enum Solver {
    Lu { forward: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>, adjoint: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn> },
    NormalCg,
}

/// Block inverse iteration on `A*A` with Rayleigh-Ritz extraction, so that
/// clustered small singular values do not stall convergence. Inner solves use a
/// dense LU factorization up to `dense_limit`, conjugate gradients on the
/// normal equations beyond.
pub fn inverse_iteration_min_singular_value<M: LinearMap + ?Sized>(
    op: &M,
    options: &SigmaOptions,
) -> Result<SigmaEstimate> {
    let n = op.dim();
    let solver = if n <= options.dense_limit {
        let m = op.to_dense();
        let forward = m.clone().lu();
        if !forward.is_invertible() {
            return Ok(SigmaEstimate {
                value: 0.0,
                path: SigmaPath::InverseIteration,
                iterations: 0,
                residual: 0.0,
                cross_check: None,
            });
        }
        Solver::Lu { forward, adjoint: m.adjoint().lu() }
    } else {
        Solver::NormalCg
    };
    let solve = |x: &[C64]| -> Result<Vec<C64>> {
        match &solver {
            Solver::Lu { forward, adjoint } => {
                let rhs = nalgebra::DVector::from_column_slice(x);
                let y = adjoint.solve(&rhs).ok_or_else(|| Error::Eigen("singular factorization".into()))?;
                let z = forward.solve(&y).ok_or_else(|| Error::Eigen("singular factorization".into()))?;
                Ok(z.as_slice().to_vec())
            }
            Solver::NormalCg => Ok(normal_cg(op, x, options.tolerance * 1e-3, 20 * n.max(100))),
        }
    };

    let block = BLOCK.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut random = |_: usize| -> Vec<C64> { (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect() };
    let mut basis: Vec<Vec<C64>> = (0..block).map(&mut random).collect();
    orthonormalize(&mut basis, &mut random);
    let mut images = vec![vec![C64::new(0.0, 0.0); n]; block];
    let mut prev = f64::INFINITY;
    for it in 1..=options.max_iterations {
        let mut next = basis.iter().map(|x| solve(x)).collect::<Result<Vec<_>>>()?;
        if next.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonConvergence { iterations: it, residual: f64::NAN });
        }
        orthonormalize(&mut next, &mut random);
        for (q, w) in next.iter().zip(images.iter_mut()) {
            op.apply(q, w);
        }
        // Ritz pairs of A*A on span(next)
        let gram = DMatrix::from_fn(block, block, |i, j| dot(&images[i], &images[j]));
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        basis = order
            .iter()
            .map(|&c| {
                let mut v = vec![C64::new(0.0, 0.0); n];
                for (k, q) in next.iter().enumerate() {
                    let coef = eig.eigenvectors[(k, c)];
                    v.iter_mut().zip(q).for_each(|(vi, qi)| *vi += qi * coef);
                }
                v
            })
            .collect();
        let sigma = eig.eigenvalues[order[0]].max(0.0).sqrt();
        if (sigma - prev).abs() <= 0.01 * options.tolerance * sigma.max(f64::MIN_POSITIVE) || sigma == 0.0 {
            let x = &basis[0];
            let mut ax = vec![C64::new(0.0, 0.0); n];
            op.apply(x, &mut ax);
            let value = norm(&ax);
            return Ok(SigmaEstimate {
                value,
                path: SigmaPath::InverseIteration,
                iterations: it,
                residual: normal_residual(op, x, &ax, value),
                cross_check: None,
            });
        }
        prev = sigma;
    }
    let x = &basis[0];
    let mut ax = vec![C64::new(0.0, 0.0); n];
    op.apply(x, &mut ax);
    let sigma = norm(&ax);
    Err(Error::NonConvergence { iterations: options.max_iterations, residual: normal_residual(op, x, &ax, sigma) })
}

/// Columns carried by the block iteration.
const BLOCK: usize = 6;

/// Modified Gram-Schmidt, applied twice; dependent columns are replaced by fresh random ones.
fn orthonormalize(cols: &mut [Vec<C64>], random: &mut impl FnMut(usize) -> Vec<C64>) {
    for j in 0..cols.len() {
        let mut attempts = 0;
        loop {
            let scale = norm(&cols[j]);
            for _ in 0..2 {
                for i in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let c = dot(&done[i], &rest[0]);
                    rest[0].iter_mut().zip(&done[i]).for_each(|(v, q)| *v -= q * c);
                }
            }
            let remaining = norm(&cols[j]);
            if remaining > 1e-10 * scale && normalize(&mut cols[j]) {
                break;
            }
            attempts += 1;
            assert!(attempts < 16, "cannot extend orthonormal block");
            cols[j] = random(j);
        }
    }
}

fn normal_residual<M: LinearMap + ?Sized>(op: &M, x: &[C64], ax: &[C64], sigma: f64) -> f64 {
    let mut r = vec![C64::new(0.0, 0.0); x.len()];
    op.apply_adjoint(ax, &mut r);
    let s2 = sigma * sigma;
    let num: f64 = r.iter().zip(x).map(|(a, b)| (a - b * s2).norm_sqr()).sum::<f64>().sqrt();
    num / s2.max(f64::MIN_POSITIVE)
}

/// Solves `A*A z = b` by conjugate gradients, returning the last iterate.
fn normal_cg<M: LinearMap + ?Sized>(op: &M, b: &[C64], rel_tol: f64, max_iter: usize) -> Vec<C64> {
    let n = b.len();
    let mut z = vec![C64::new(0.0, 0.0); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    let mut ap = vec![C64::new(0.0, 0.0); n];
    let mut rr = dot(&r, &r).re;
    let target = rel_tol * rel_tol * rr;
    for _ in 0..max_iter {
        if rr <= target {
            break;
        }
        op.apply(&p, &mut tmp);
        op.apply_adjoint(&tmp, &mut ap);
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            z[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = dot(&r, &r).re;
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        rr = rr_new;
    }
    z
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(a: &mut [C64]) -> bool {
    let s = norm(a);
    if !(s.is_finite() && s > 0.0) {
        return false;
    }
    a.iter_mut().for_each(|v| *v /= s);
    true
}
