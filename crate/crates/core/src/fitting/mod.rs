//! Control-point placement for a fixed parameterization and the adaptive fit loop that refines
//! the parameterization (degree elevation first, then knot insertion) until the data is met.

mod adaptive;
pub mod lbfgs;
mod solve;
mod weiss;

pub use adaptive::{spline_fit, spline_fit_with, AugmentFn, Solver, SplineFitOptions};
pub use solve::{fit_lsq, fit_opt, fit_warm, OptOptions};
pub use weiss::{weiss_select_knot, DirectionPolicy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{ParametricPoint, Spline};
use crate::{Point, Vector};

/// Control-point placement problem: move the control points of `spline` so that the spline
/// evaluated at `param_coords` meets `targets`.
#[derive(Clone, Debug)]
pub struct FitProblem {
    pub spline: Spline,
    pub param_coords: Vec<ParametricPoint>,
    pub targets: Vec<Point>,
    /// Keep the boundary control points (first/last along every direction) fixed.
    pub fix_boundary: bool,
}

impl FitProblem {
    pub fn new(
        spline: Spline,
        param_coords: Vec<ParametricPoint>,
        targets: Vec<Point>,
    ) -> Result<Self> {
        if param_coords.len() != targets.len() {
            return Err(Error::Fit(format!(
                "{} parametric coordinates for {} targets",
                param_coords.len(),
                targets.len()
            )));
        }
        let param_coords = param_coords
            .iter()
            .map(|p| spline.check_param(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(FitProblem {
            spline,
            param_coords,
            targets,
            fix_boundary: false,
        })
    }

    pub fn with_fixed_boundary(mut self, fix: bool) -> Self {
        self.fix_boundary = fix;
        self
    }
}

/// One refinement step taken by the adaptive fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RefinementAction {
    DegreeElevation { direction: usize },
    KnotInsertion { direction: usize, value: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Sum of pointwise distances after each control-point optimization (first entry: before).
    pub residual_history: Vec<f64>,
    /// Sum of squared pointwise distances, the quantity actually minimized.
    pub objective_history: Vec<f64>,
    pub final_max_error: f64,
    pub final_mean_error: f64,
    pub refinement_log: Vec<RefinementAction>,
    pub converged: bool,
    pub epsilon: f64,
    pub solver_iterations: usize,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub(crate) fn record(
        &mut self,
        spline: &Spline,
        params: &[ParametricPoint],
        targets: &[Point],
    ) {
        let errs = pointwise_errors(spline, params, targets);
        self.residual_history.push(errs.iter().sum());
        self.objective_history
            .push(errs.iter().map(|e| e * e).sum());
        self.set_final(&errs);
    }

    pub(crate) fn set_final(&mut self, errs: &[f64]) {
        self.final_max_error = errs.iter().cloned().fold(0.0, f64::max);
        self.final_mean_error = if errs.is_empty() {
            0.0
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        };
    }
}

pub fn pointwise_errors(
    spline: &Spline,
    params: &[ParametricPoint],
    targets: &[Point],
) -> Vec<f64> {
    params
        .iter()
        .zip(targets)
        .map(|(u, x)| (spline.eval_clamped(u) - x).norm())
        .collect()
}

/// Sum of pointwise Euclidean distances between the spline at `params` and `targets`.
pub fn residual(spline: &Spline, params: &[ParametricPoint], targets: &[Point]) -> f64 {
    pointwise_errors(spline, params, targets).iter().sum()
}

/// Gradient of [`residual`] with respect to every control point. Points with zero deviation
/// contribute nothing (the norm is not differentiable there).
pub fn residual_gradient(
    spline: &Spline,
    params: &[ParametricPoint],
    targets: &[Point],
) -> Vec<Vector> {
    let mut grad = vec![Vector::zeros(); spline.control_points().len()];
    for (u, x) in params.iter().zip(targets) {
        let r = spline.eval_clamped(u) - x;
        let n = r.norm();
        if n == 0.0 {
            continue;
        }
        let dir = r / n;
        for (k, b) in spline.basis_row(u) {
            grad[k] += dir * b;
        }
    }
    grad
}

/// Flat indices of control points on the boundary of the control net.
pub fn boundary_mask(spline: &Spline) -> Vec<bool> {
    let counts = spline.counts();
    (0..spline.control_points().len())
        .map(|flat| {
            spline
                .multi_index(flat)
                .iter()
                .zip(&counts)
                .any(|(&i, &n)| i == 0 || i + 1 == n)
        })
        .collect()
}

/// Diagonal of the axis-aligned bounding box of a point set.
pub fn bbox_diagonal(points: &[Point]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (hi - lo).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::KnotVector;

    #[test]
    fn residual_of_single_offset() {
        let s = Spline::curve(
            KnotVector::bezier(1, 0.0, 1.0).unwrap(),
            vec![Point::origin(), Point::new(2.0, 0.0, 0.0)],
            None,
        )
        .unwrap();
        let u = [ParametricPoint::curve(0.5)];
        assert_eq!(residual(&s, &u, &[Point::new(1.0, 0.0, 2.0)]), 2.0);
        assert_eq!(residual(&s, &u, &[Point::new(1.0, 0.0, 0.0)]), 0.0);
    }

    #[test]
    fn boundary_mask_of_surface() {
        let s = Spline::surface(
            KnotVector::bezier(2, 0.0, 1.0).unwrap(),
            KnotVector::bezier(2, 0.0, 1.0).unwrap(),
            vec![Point::origin(); 9],
            None,
        )
        .unwrap();
        let m = boundary_mask(&s);
        assert_eq!(m.iter().filter(|&&b| !b).count(), 1);
        assert!(!m[4]);
    }
}
