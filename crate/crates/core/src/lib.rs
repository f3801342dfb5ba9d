//! Numerical laboratory for quasimode concentration on flat product tori and
//! polynomial stabilization of weakly damped waves.
//!
//! The manifold is `M = M1 x M2` with both factors flat tori. The trapped set
//! is `M1 x {q0}` and the damping vanishes like `d(q, q0)^(2 gamma)` around it.
//!
//! Module map:
//! - [`geometry`]: grids, geodesic distance, tube regions, restricted norms.
//! - [`damping`]: power-law damping profiles and their two-sided bounds.
//! - [`operators`]: spectral Laplacian, `L_h = -h^2 Δ - 1 + i h b`, Helmholtz
//!   fibers, Fourier fiber decomposition and smallest singular values.
//! - [`spectral_scan`]: `h`-sweeps of `σ_min(L_h)` and power-law fits.
//! - [`quasimode_lab`]: best constants of the tube estimates and the sphere
//!   counterexample.
//! - [`wave_evolver`]: Strang-split damped wave evolution and decay-rate fits.

pub mod damping;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod operators;
pub mod quadrature;
pub mod quasimode_lab;
pub mod spectral;
pub mod spectral_scan;
pub mod wave_evolver;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
