use super::solve::{fit_opt, fit_warm, OptOptions};
use super::weiss::{weiss_select_knot, DirectionPolicy};
use super::{bbox_diagonal, pointwise_errors, FitProblem, FitReport, RefinementAction};
use crate::error::Result;
use crate::spline::{elevate_degree, insert_knot, ParametricPoint, Spline};
use crate::Point;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Solver {
    /// Minimum-norm linear least squares (SVD) from the current control points.
    #[default]
    Lsq,
    Lbfgs,
}

#[derive(Clone, Debug)]
pub struct SplineFitOptions {
    pub max_degree: usize,
    /// Target for the largest pointwise deviation. `None`: 1e-4 times the bounding-box
    /// diagonal of the targets.
    pub epsilon: Option<f64>,
    /// Maximum number of refinement actions (each elevated direction and each knot counts).
    pub budget: usize,
    /// Targets closer than this (with their parametric coordinates) are merged.
    pub merge_distance: f64,
    pub solver: Solver,
    pub policy: DirectionPolicy,
}

impl Default for SplineFitOptions {
    fn default() -> Self {
        SplineFitOptions {
            max_degree: 4,
            epsilon: None,
            budget: 50,
            merge_distance: 1e-7,
            solver: Solver::Lsq,
            policy: DirectionPolicy::All,
        }
    }
}

/// Supplies extra correspondences for the current parameterization (called again after every
/// refinement, since the right sites depend on degree and knots).
pub type AugmentFn<'a> = dyn Fn(&Spline) -> Result<(Vec<ParametricPoint>, Vec<Point>)> + Sync + 'a;

/// Adaptive fit: optimize the control points; while the largest deviation is at least ε,
/// elevate the degree of every direction below `max_degree`, and once all directions are
/// capped insert one knot chosen by [`weiss_select_knot`]. Every refinement preserves the
/// current geometry, so each solve is warm-started.
pub fn spline_fit(problem: &FitProblem, opts: &SplineFitOptions) -> Result<(Spline, FitReport)> {
    spline_fit_with(problem, opts, None)
}

pub fn spline_fit_with(
    problem: &FitProblem,
    opts: &SplineFitOptions,
    augment: Option<&AugmentFn>,
) -> Result<(Spline, FitReport)> {
    let (base_params, base_targets) =
        merge_duplicates(&problem.param_coords, &problem.targets, opts.merge_distance);
    let mut report = FitReport {
        epsilon: opts
            .epsilon
            .unwrap_or(1e-4 * bbox_diagonal(&problem.targets)),
        ..FitReport::default()
    };
    let eps = report.epsilon;
    let mut spline = problem.spline.clone();

    let data = |s: &Spline| -> Result<(Vec<ParametricPoint>, Vec<Point>)> {
        let (mut params, mut targets) = (base_params.clone(), base_targets.clone());
        if let Some(aug) = augment {
            let (p, t) = aug(s)?;
            params.extend(p);
            targets.extend(t);
        }
        Ok((params, targets))
    };

    let (mut params, mut targets) = data(&spline)?;
    let errs = pointwise_errors(&spline, &params, &targets);
    report.residual_history.push(errs.iter().sum());
    report
        .objective_history
        .push(errs.iter().map(|e| e * e).sum());
    report.set_final(&errs);
    if report.final_max_error < eps {
        report.converged = true;
        return Ok((spline, report));
    }

    loop {
        let sub = FitProblem {
            spline: spline.clone(),
            param_coords: params.clone(),
            targets: targets.clone(),
            fix_boundary: problem.fix_boundary,
        };
        let (fitted, r) = match opts.solver {
            Solver::Lsq => fit_warm(&sub)?,
            Solver::Lbfgs => fit_opt(&sub, &OptOptions::default())?,
        };
        spline = fitted;
        report.solver_iterations += r.solver_iterations;
        report
            .residual_history
            .push(*r.residual_history.last().unwrap());
        report
            .objective_history
            .push(*r.objective_history.last().unwrap());
        let errs = pointwise_errors(&spline, &params, &targets);
        report.set_final(&errs);
        for w in r.warnings {
            log::debug!("{w}");
        }
        if report.final_max_error < eps {
            report.converged = true;
            break;
        }
        if report.refinement_log.len() >= opts.budget {
            report.warnings.push(format!(
                "refinement budget of {} actions exhausted with max error {:.3e} (target {:.3e})",
                opts.budget, report.final_max_error, eps
            ));
            break;
        }

        let low: Vec<usize> = (0..spline.param_dim())
            .filter(|&d| spline.knot_vector(d).degree() < opts.max_degree)
            .collect();
        if !low.is_empty() {
            for d in low {
                spline = elevate_degree(&spline, d)?;
                report
                    .refinement_log
                    .push(RefinementAction::DegreeElevation { direction: d });
            }
        } else {
            let (d, value) = weiss_select_knot(&spline, &params, &errs, opts.policy)?;
            spline = insert_knot(&spline, d, value, 1)?;
            report.refinement_log.push(RefinementAction::KnotInsertion {
                direction: d,
                value,
            });
        }
        if augment.is_some() {
            (params, targets) = data(&spline)?;
        }
    }
    Ok((spline, report))
}

/// Drop correspondences whose target and parametric coordinates both lie within `tol` of an
/// earlier one.
pub(crate) fn merge_duplicates(
    params: &[ParametricPoint],
    targets: &[Point],
    tol: f64,
) -> (Vec<ParametricPoint>, Vec<Point>) {
    use std::collections::HashMap;
    if tol <= 0.0 {
        return (params.to_vec(), targets.to_vec());
    }
    let key = |p: &Point| -> [i64; 3] {
        [
            (p.x / tol).floor() as i64,
            (p.y / tol).floor() as i64,
            (p.z / tol).floor() as i64,
        ]
    };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let (mut out_p, mut out_t): (Vec<ParametricPoint>, Vec<Point>) = (Vec::new(), Vec::new());
    for (u, x) in params.iter().zip(targets) {
        let k = key(x);
        let mut dup = false;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if list
                            .iter()
                            .any(|&j| (out_t[j] - x).norm() < tol && out_p[j].distance(u) < tol)
                        {
                            dup = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        if !dup {
            cells.entry(k).or_default().push(out_t.len());
            out_p.push(*u);
            out_t.push(*x);
        }
    }
    (out_p, out_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{tensor_grid, KnotVector};

    fn bilinear() -> Spline {
        let kv = KnotVector::bezier(1, 0.0, 1.0).unwrap();
        Spline::surface(
            kv.clone(),
            kv,
            vec![
                Point::new(0.0, 0.0, 0.0),
                Point::new(1.0, 0.0, 0.0),
                Point::new(0.0, 1.0, 0.0),
                Point::new(1.0, 1.0, 0.0),
            ],
            None,
        )
        .unwrap()
    }

    fn grid(n: usize) -> Vec<ParametricPoint> {
        let axis: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        tensor_grid(&[axis.clone(), axis])
    }

    #[test]
    fn translation_needs_no_refinement() {
        let s = bilinear();
        let params = grid(6);
        let targets = params
            .iter()
            .map(|u| s.evaluate(u).unwrap() + nalgebra::Vector3::new(1.0, -2.0, 0.5))
            .collect();
        let p = FitProblem::new(s, params, targets).unwrap();
        let (_, r) = spline_fit(&p, &SplineFitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.refinement_log.is_empty());
        assert!(r.final_max_error < 1e-12);
    }

    #[test]
    fn elevates_before_inserting() {
        let s = bilinear();
        let params = grid(12);
        let targets = params
            .iter()
            .map(|u| {
                let x = s.evaluate(u).unwrap();
                Point::new(
                    x.x,
                    x.y,
                    x.x.powi(3) + 0.5 * x.y.powi(3) + (3.0 * x.x).sin(),
                )
            })
            .collect();
        let p = FitProblem::new(s, params, targets).unwrap();
        let opts = SplineFitOptions {
            epsilon: Some(1e-6),
            ..Default::default()
        };
        let (fit, r) = spline_fit(&p, &opts).unwrap();
        let first_knot = r
            .refinement_log
            .iter()
            .position(|a| matches!(a, RefinementAction::KnotInsertion { .. }))
            .unwrap();
        assert!(r.refinement_log[..first_knot]
            .iter()
            .all(|a| matches!(a, RefinementAction::DegreeElevation { .. })));
        assert!(r.refinement_log[first_knot..]
            .iter()
            .all(|a| matches!(a, RefinementAction::KnotInsertion { .. })));
        assert_eq!(fit.degrees(), vec![4, 4]);
        // Each refinement only adds freedom.
        for w in r.residual_history[1..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn loose_epsilon_returns_immediately() {
        let s = bilinear();
        let params = grid(3);
        let targets: Vec<Point> = params
            .iter()
            .map(|u| s.evaluate(u).unwrap() + nalgebra::Vector3::new(0.0, 0.0, 0.01))
            .collect();
        let p = FitProblem::new(s.clone(), params, targets).unwrap();
        let opts = SplineFitOptions {
            epsilon: Some(1.0),
            ..Default::default()
        };
        let (fit, r) = spline_fit(&p, &opts).unwrap();
        assert!(r.refinement_log.is_empty());
        assert_eq!(fit, s);
    }

    #[test]
    fn duplicates_are_merged() {
        let p = vec![ParametricPoint::curve(0.5); 3];
        let t = vec![
            Point::origin(),
            Point::new(1e-9, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
        ];
        let (mp, mt) = merge_duplicates(&p, &t, 1e-7);
        assert_eq!(mp.len(), 2);
        assert_eq!(mt[1], Point::new(1.0, 0.0, 0.0));
    }
}
