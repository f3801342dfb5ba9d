//! Multidimensional FFTs over row-major grids and the wavenumber tables of
//! flat tori.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

/// Signed wavenumbers `2πj/L` in FFT order for an axis of `n` points.
/// The Nyquist entry is taken as positive.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let scale = std::f64::consts::TAU / length;
    (0..n)
        .map(|j| {
            let s = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            s * scale
        })
        .collect()
}

/// `|k|²` over a row-major grid of the given axes.
pub fn squared_wavenumbers(shape: &[usize], lengths: &[f64]) -> Vec<f64> {
    let tables: Vec<Vec<f64>> = shape.iter().zip(lengths).map(|(n, l)| wavenumbers(*n, *l)).collect();
    let total: usize = shape.iter().product();
    let mut out = vec![0.0; total];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mut rem = idx;
        let mut s = 0.0;
        for axis in (0..shape.len()).rev() {
            let k = tables[axis][rem % shape[axis]];
            s += k * k;
            rem /= shape[axis];
        }
        *slot = s;
    }
    out
}

/// Forward/inverse FFT plans for every axis of a row-major array.
#[derive(Clone)]
pub struct FftPlan {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("shape", &self.shape).finish()
    }
}

impl FftPlan {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|n| planner.plan_fft_forward(*n)).collect();
        let inverse = shape.iter().map(|n| planner.plan_fft_inverse(*n)).collect();
        Self { shape: shape.to_vec(), forward, inverse }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform over all axes.
    pub fn forward(&self, data: &mut [C64]) {
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, &self.forward[axis]);
        }
    }

    /// Inverse transform over all axes, normalized so that
    /// `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [C64]) {
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, &self.inverse[axis]);
        }
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Unnormalized forward transform over the given axes only.
    pub fn forward_axes(&self, data: &mut [C64], axes: &[usize]) {
        for &axis in axes {
            self.transform_axis(data, axis, &self.forward[axis]);
        }
    }

    /// Inverse transform over the given axes, normalized by their sizes.
    pub fn inverse_axes(&self, data: &mut [C64], axes: &[usize]) {
        let mut count = 1usize;
        for &axis in axes {
            self.transform_axis(data, axis, &self.inverse[axis]);
            count *= self.shape[axis];
        }
        let s = 1.0 / count as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn transform_axis(&self, data: &mut [C64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.shape[axis];
        let stride: usize = self.shape[axis + 1..].iter().product();
        if stride == 1 {
            fft.process(data);
            return;
        }
        let outer = data.len() / (n * stride);
        let mut line = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for o in 0..outer {
            let base = o * n * stride;
            for s in 0..stride {
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride + s];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride + s] = *v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenumber_table_order() {
        let k = wavenumbers(6, std::f64::consts::TAU);
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -2.0, -1.0]);
        let k = wavenumbers(4, 1.0);
        assert!((k[1] - std::f64::consts::TAU).abs() < 1e-15);
    }

    #[test]
    fn round_trip_3d() {
        let plan = FftPlan::new(&[4, 6, 8]);
        let orig: Vec<C64> = (0..plan.len()).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut data = orig.clone();
        plan.forward(&mut data);
        plan.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_on_its_bin() {
        let (n1, n2) = (8usize, 16usize);
        let plan = FftPlan::new(&[n1, n2]);
        let mut data: Vec<C64> = (0..n1 * n2)
            .map(|idx| {
                let (i, j) = (idx / n2, idx % n2);
                let phase = std::f64::consts::TAU * (2.0 * i as f64 / n1 as f64 - 3.0 * j as f64 / n2 as f64);
                C64::from_polar(1.0, phase)
            })
            .collect();
        plan.forward(&mut data);
        let peak = 2 * n2 + (n2 - 3);
        for (idx, v) in data.iter().enumerate() {
            let expect = if idx == peak { (n1 * n2) as f64 } else { 0.0 };
            assert!((v.norm() - expect).abs() < 1e-9);
        }
    }
}
