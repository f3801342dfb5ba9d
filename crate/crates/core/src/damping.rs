//! Damping coefficients vanishing like `d(q, q0)^(2γ)` near the trapped slice.
//!
//! The canonical profile is the exact power law `c_lower * d^(2γ)` inside the
//! cutoff radius and a constant positive level outside. The two-sided bound
//! `c_lower d^(2γ) <= b <= c_upper d^(2γ)` is checked as a separate interface
//! so that rough or perturbed coefficients can be injected.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{wrapped_distance, Field, ProductGrid};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingProfile {
    pub gamma: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    /// The point `q0` in factor 2.
    pub center: Vec<f64>,
    /// `β0`: the power law holds for `d < β0`.
    pub cutoff_radius: f64,
    /// Value of `b` for `d >= β0`.
    pub outside_level: f64,
}

impl DampingProfile {
    /// `b = d^(2γ)` for `d < cutoff`, continued by the constant `cutoff^(2γ)`.
    pub fn power_law(gamma: f64, center: Vec<f64>, cutoff_radius: f64) -> Result<Self> {
        let p = Self {
            gamma,
            c_lower: 1.0,
            c_upper: 1.0,
            center,
            cutoff_radius,
            outside_level: cutoff_radius.powf(2.0 * gamma),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_constants(mut self, c_lower: f64, c_upper: f64) -> Result<Self> {
        self.c_lower = c_lower;
        self.c_upper = c_upper;
        self.validate()?;
        Ok(self)
    }

    /// Replaces the outside level; the profile jumps at the cutoff unless the
    /// level equals `c_lower * cutoff^(2γ)`.
    pub fn with_outside_level(mut self, level: f64) -> Result<Self> {
        self.outside_level = level;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(invalid(format!("damping exponent must be positive, got {}", self.gamma)));
        }
        if !(self.c_lower > 0.0 && self.c_lower <= self.c_upper && self.c_upper.is_finite()) {
            return Err(invalid(format!(
                "need 0 < c_lower <= c_upper, got {} and {}",
                self.c_lower, self.c_upper
            )));
        }
        if !(self.cutoff_radius.is_finite() && self.cutoff_radius > 0.0) {
            return Err(invalid(format!("cutoff radius must be positive, got {}", self.cutoff_radius)));
        }
        if !(self.outside_level.is_finite() && self.outside_level > 0.0) {
            return Err(invalid(format!("outside level must be positive, got {}", self.outside_level)));
        }
        Ok(())
    }

    /// Profile value at geodesic distance `d` from `q0`.
    pub fn value_at_distance(&self, d: f64) -> f64 {
        if d < self.cutoff_radius {
            self.c_lower * d.powf(2.0 * self.gamma)
        } else {
            self.outside_level
        }
    }

    /// Upper bound of the evaluated coefficient.
    pub fn sup(&self) -> f64 {
        self.outside_level.max(self.c_upper * self.cutoff_radius.powf(2.0 * self.gamma))
    }
}

/// Distance from each factor-2 node of `grid` to `center`, in fiber order.
pub fn fiber_distances(grid: &ProductGrid, center: &[f64]) -> Vec<f64> {
    let circ = grid.factor2().circumferences();
    grid.fiber_coordinates().iter().map(|q| wrapped_distance(q, center, circ)).collect()
}

fn check_profile_on(profile: &DampingProfile, grid: &ProductGrid) -> Result<()> {
    profile.validate()?;
    let f2 = grid.factor2();
    if profile.center.len() != f2.dim() {
        return Err(invalid(format!(
            "damping center has {} coordinates, factor 2 has dimension {}",
            profile.center.len(),
            f2.dim()
        )));
    }
    if profile.cutoff_radius > f2.diameter() {
        return Err(invalid(format!(
            "cutoff radius {} exceeds the diameter {} of factor 2",
            profile.cutoff_radius,
            f2.diameter()
        )));
    }
    Ok(())
}

/// Damping values on one factor-2 fiber.
pub fn fiber_damping(profile: &DampingProfile, grid: &ProductGrid) -> Result<Vec<f64>> {
    check_profile_on(profile, grid)?;
    Ok(fiber_distances(grid, &profile.center).into_iter().map(|d| profile.value_at_distance(d)).collect())
}

/// Real damping field over the whole grid; depends on factor-2 coordinates only.
pub fn evaluate_damping(profile: &DampingProfile, grid: &Arc<ProductGrid>) -> Result<Field> {
    let fiber = fiber_damping(profile, grid)?;
    let values = fiber.iter().cycle().take(grid.node_count()).map(|b| C64::new(*b, 0.0)).collect();
    Field::new(grid.clone(), values)
}

/// Outcome of checking `c_lower d^(2γ) <= b <= c_upper d^(2γ)` inside the cutoff.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    /// `min b / (c_lower d^(2γ))` over nodes with `0 < d < β0`.
    pub min_lower_ratio: f64,
    /// `max b / (c_upper d^(2γ))`; infinite if `b > 0` on the trapped slice.
    pub max_upper_ratio: f64,
    /// `max(0, 1 - min_lower_ratio)`.
    pub lower_violation: f64,
    /// `max(0, max_upper_ratio - 1)`.
    pub upper_violation: f64,
    /// Largest `|b - c_lower d^(2γ)| / (c_lower d^(2γ))`.
    pub max_relative_deviation: f64,
    /// Node attaining `max_relative_deviation`.
    pub deviation_node: Option<usize>,
    /// Node attaining the worst violation, if any.
    pub violation_node: Option<usize>,
    pub nodes_checked: usize,
}

impl BoundsReport {
    pub fn holds(&self) -> bool {
        self.lower_violation == 0.0 && self.upper_violation == 0.0
    }
}

pub fn verify_bounds(b: &Field, profile: &DampingProfile) -> Result<BoundsReport> {
    let grid = b.grid();
    check_profile_on(profile, grid)?;
    let bad: Vec<usize> = b
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.im != 0.0 || v.re < 0.0 || !v.re.is_finite())
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Validation {
            message: "damping must be real and nonnegative".into(),
            nodes: bad,
        });
    }
    let dist = fiber_distances(grid, &profile.center);
    let n2 = dist.len();
    let two_gamma = 2.0 * profile.gamma;
    let mut report = BoundsReport {
        min_lower_ratio: f64::INFINITY,
        max_upper_ratio: 0.0,
        lower_violation: 0.0,
        upper_violation: 0.0,
        max_relative_deviation: 0.0,
        deviation_node: None,
        violation_node: None,
        nodes_checked: 0,
    };
    let mut worst = 0.0f64;
    for (i, v) in b.values().iter().enumerate() {
        let d = dist[i % n2];
        if d >= profile.cutoff_radius {
            continue;
        }
        report.nodes_checked += 1;
        let bi = v.re;
        if d == 0.0 {
            if bi > 0.0 {
                report.max_upper_ratio = f64::INFINITY;
                report.violation_node = Some(i);
                worst = f64::INFINITY;
            }
            continue;
        }
        let pw = d.powf(two_gamma);
        let lower = bi / (profile.c_lower * pw);
        let upper = bi / (profile.c_upper * pw);
        let dev = (lower - 1.0).abs();
        if dev > report.max_relative_deviation {
            report.max_relative_deviation = dev;
            report.deviation_node = Some(i);
        }
        report.min_lower_ratio = report.min_lower_ratio.min(lower);
        report.max_upper_ratio = report.max_upper_ratio.max(upper);
        let viol = (1.0 - lower).max(upper - 1.0);
        if viol > worst {
            worst = viol;
            report.violation_node = Some(i);
        }
    }
    report.lower_violation = (1.0 - report.min_lower_ratio).max(0.0);
    report.upper_violation = (report.max_upper_ratio - 1.0).max(0.0);
    if worst <= 0.0 {
        report.violation_node = None;
    }
    Ok(report)
}
