//! Flat product tori, their uniform lattices, tube regions around the trapped
//! slice `M1 x {q0}` and region-restricted L² norms.
//!
//! Nodes are stored row-major over the concatenated axes of factor 1 then
//! factor 2, so every factor-2 fiber `{p} x M2` is a contiguous block of
//! length [`ProductGrid::fiber_len`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::C64;

/// A flat torus `R^dim / (c_1 Z x ... x c_dim Z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusFactor {
    circumferences: Vec<f64>,
}

impl TorusFactor {
    pub fn new(circumferences: Vec<f64>) -> Result<Self> {
        if circumferences.is_empty() {
            return Err(invalid("torus factor needs at least one coordinate"));
        }
        if let Some(c) = circumferences.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(invalid(format!("circumference must be positive, got {c}")));
        }
        Ok(Self { circumferences })
    }

    /// Circle of the given circumference.
    pub fn circle(circumference: f64) -> Result<Self> {
        Self::new(vec![circumference])
    }

    /// `(R / 2πZ)^dim`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![std::f64::consts::TAU; dim])
    }

    pub fn dim(&self) -> usize {
        self.circumferences.len()
    }

    pub fn circumferences(&self) -> &[f64] {
        &self.circumferences
    }

    pub fn volume(&self) -> f64 {
        self.circumferences.iter().product()
    }

    /// Largest geodesic distance between two points.
    pub fn diameter(&self) -> f64 {
        self.circumferences.iter().map(|c| 0.25 * c * c).sum::<f64>().sqrt()
    }
}

/// Geodesic distance on a flat torus: the Euclidean distance minimized over
/// all lattice translates of `q0`.
pub fn torus_distance(q: &[f64], q0: &[f64], factor: &TorusFactor) -> Result<f64> {
    if q.len() != factor.dim() || q0.len() != factor.dim() {
        return Err(invalid(format!(
            "points have {} and {} coordinates, factor has dimension {}",
            q.len(),
            q0.len(),
            factor.dim()
        )));
    }
    Ok(wrapped_distance(q, q0, factor.circumferences()))
}

pub(crate) fn wrapped_distance(q: &[f64], q0: &[f64], circumferences: &[f64]) -> f64 {
    q.iter()
        .zip(q0)
        .zip(circumferences)
        .map(|((a, b), c)| {
            let r = (a - b).rem_euclid(*c);
            let d = r.min(c - r);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Uniform tensor-product lattice on `M1 x M2`.
///
/// `factor1` may be absent, in which case the grid is a bare factor-2 grid;
/// this is the setting of the Helmholtz fibers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductGrid {
    factor1: Option<TorusFactor>,
    factor2: TorusFactor,
    resolution: Vec<usize>,
}

impl ProductGrid {
    /// `resolution` lists points per coordinate, factor-1 coordinates first.
    pub fn new(factor1: TorusFactor, factor2: TorusFactor, resolution: Vec<usize>) -> Result<Self> {
        Self::build(Some(factor1), factor2, resolution)
    }

    /// A grid on `M2` alone.
    pub fn fiber(factor2: TorusFactor, resolution: Vec<usize>) -> Result<Self> {
        Self::build(None, factor2, resolution)
    }

    /// `(R/2πZ) x (R/2πZ)` with `n1 x n2` points, the default desk-scale setting.
    pub fn standard_2torus(n1: usize, n2: usize) -> Result<Self> {
        Self::new(TorusFactor::standard(1)?, TorusFactor::standard(1)?, vec![n1, n2])
    }

    fn build(factor1: Option<TorusFactor>, factor2: TorusFactor, resolution: Vec<usize>) -> Result<Self> {
        let dims = factor1.as_ref().map_or(0, TorusFactor::dim) + factor2.dim();
        if resolution.len() != dims {
            return Err(invalid(format!(
                "resolution has {} entries, grid has {dims} coordinates",
                resolution.len()
            )));
        }
        if let Some(n) = resolution.iter().find(|n| **n == 0 || **n % 2 != 0) {
            return Err(invalid(format!("resolution must be even and positive, got {n}")));
        }
        Ok(Self { factor1, factor2, resolution })
    }

    pub fn factor1(&self) -> Option<&TorusFactor> {
        self.factor1.as_ref()
    }

    pub fn factor2(&self) -> &TorusFactor {
        &self.factor2
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Number of leading axes that belong to factor 1.
    pub fn split(&self) -> usize {
        self.factor1.as_ref().map_or(0, TorusFactor::dim)
    }

    /// Circumference of every axis, factor 1 first.
    pub fn axis_lengths(&self) -> Vec<f64> {
        let mut out = self.factor1.as_ref().map_or_else(Vec::new, |f| f.circumferences().to_vec());
        out.extend_from_slice(self.factor2.circumferences());
        out
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Nodes per factor-2 fiber.
    pub fn fiber_len(&self) -> usize {
        self.resolution[self.split()..].iter().product()
    }

    /// Number of factor-2 fibers (nodes of factor 1).
    pub fn fiber_count(&self) -> usize {
        self.resolution[..self.split()].iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.factor1.as_ref().map_or(1.0, TorusFactor::volume) * self.factor2.volume()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.node_count() as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axis_lengths()[axis] / self.resolution[axis] as f64
    }

    /// The factor-2 grid carried by each fiber.
    pub fn fiber_grid(&self) -> ProductGrid {
        ProductGrid {
            factor1: None,
            factor2: self.factor2.clone(),
            resolution: self.resolution[self.split()..].to_vec(),
        }
    }

    /// Coordinates of node `index` (all axes).
    pub fn node_coordinates(&self, index: usize) -> Vec<f64> {
        let lengths = self.axis_lengths();
        let mut rem = index;
        let mut coords = vec![0.0; self.resolution.len()];
        for axis in (0..self.resolution.len()).rev() {
            let n = self.resolution[axis];
            coords[axis] = (rem % n) as f64 * lengths[axis] / n as f64;
            rem /= n;
        }
        coords
    }

    /// Coordinates of every factor-2 node, in fiber order.
    pub fn fiber_coordinates(&self) -> Vec<Vec<f64>> {
        let fiber = self.fiber_grid();
        (0..fiber.node_count()).map(|i| fiber.node_coordinates(i)).collect()
    }

    pub(crate) fn check_same(&self, other: &ProductGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "resolutions {:?} vs {:?}",
                self.resolution, other.resolution
            )))
        }
    }
}

/// Complex scalar per grid node.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<ProductGrid>,
    values: Vec<C64>,
}

impl Field {
    pub fn new(grid: Arc<ProductGrid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<ProductGrid>) -> Self {
        let n = grid.node_count();
        Self { grid, values: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn constant(grid: Arc<ProductGrid>, value: C64) -> Self {
        let n = grid.node_count();
        Self { grid, values: vec![value; n] }
    }

    /// Samples `f` at every node; `f` receives the coordinates of all axes.
    pub fn from_fn(grid: Arc<ProductGrid>, f: impl Fn(&[f64]) -> C64) -> Self {
        let values = (0..grid.node_count()).map(|i| f(&grid.node_coordinates(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<ProductGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<C64>) -> Result<Self> {
        Self::new(self.grid.clone(), values)
    }

    /// `⟨f, g⟩ = cell_volume * Σ f conj(g)`.
    pub fn inner(&self, other: &Field) -> Result<C64> {
        self.grid.check_same(&other.grid)?;
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(C64::norm_sqr).sum::<f64>()).sqrt()
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }

    pub fn scale(&self, s: C64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: C64, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }
}

/// A set of grid nodes.
#[derive(Clone, Debug)]
pub struct Region {
    grid: Arc<ProductGrid>,
    mask: Vec<bool>,
}

impl Region {
    pub fn new(grid: Arc<ProductGrid>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!(
                "mask of length {} for {} nodes",
                mask.len(),
                grid.node_count()
            )));
        }
        Ok(Self { grid, mask })
    }

    pub fn whole(grid: Arc<ProductGrid>) -> Self {
        let n = grid.node_count();
        Self { grid, mask: vec![true; n] }
    }

    pub fn grid(&self) -> &Arc<ProductGrid> {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// `self \ other`.
    pub fn minus(&self, other: &Region) -> Result<Region> {
        self.grid.check_same(&other.grid)?;
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && !*b).collect();
        Ok(Region { grid: self.grid.clone(), mask })
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }
}

/// The tube `N_β = M1 x {q : d2(q, q0) < β}` resolved on grid nodes.
#[derive(Clone, Debug)]
pub struct TubeRegion {
    center: Vec<f64>,
    radius: f64,
    region: Region,
}

impl TubeRegion {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn mask(&self) -> &[bool] {
        self.region.mask()
    }

    /// `N_outer \ N_self`.
    pub fn annulus_to(&self, outer: &TubeRegion) -> Result<Region> {
        outer.region.minus(&self.region)
    }
}

/// Builds `N_β` around `q0`. Nodes exactly at distance `β` are excluded.
pub fn tube_mask(grid: &Arc<ProductGrid>, q0: &[f64], beta: f64) -> Result<TubeRegion> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid(format!("tube radius must be positive, got {beta}")));
    }
    let factor2 = grid.factor2();
    if q0.len() != factor2.dim() {
        return Err(invalid(format!(
            "tube center has {} coordinates, factor 2 has dimension {}",
            q0.len(),
            factor2.dim()
        )));
    }
    let fiber_mask: Vec<bool> = grid
        .fiber_coordinates()
        .iter()
        .map(|q| wrapped_distance(q, q0, factor2.circumferences()) < beta)
        .collect();
    let mask = fiber_mask.iter().copied().cycle().take(grid.node_count()).collect();
    Ok(TubeRegion {
        center: q0.to_vec(),
        radius: beta,
        region: Region { grid: grid.clone(), mask },
    })
}

/// `sqrt(cell_volume * Σ_{mask} |f|²)`.
pub fn region_l2_norm(f: &Field, region: &Region) -> Result<f64> {
    f.grid().check_same(region.grid())?;
    let s: f64 = f
        .values()
        .iter()
        .zip(region.mask())
        .filter(|(_, m)| **m)
        .map(|(v, _)| v.norm_sqr())
        .sum();
    Ok((s * f.grid().cell_volume()).sqrt())
}
