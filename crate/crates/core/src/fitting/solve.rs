use nalgebra::DMatrix;

use super::lbfgs::{minimize, LbfgsOptions, Termination};
use super::{boundary_mask, FitProblem, FitReport};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, unconstrained_columns};
use crate::spline::Spline;
use crate::Point;

/// Relative singular-value cutoff for the least-squares solves.
const RANK_TOL: f64 = 1e-12;

/// Sparse basis rows of the fit: `rows[i]` lists `(control point, rational basis value)`.
pub(crate) fn basis_rows(problem: &FitProblem) -> Vec<Vec<(usize, f64)>> {
    problem
        .param_coords
        .iter()
        .map(|u| problem.spline.basis_row(u))
        .collect()
}

/// Free control points and the column of each in the reduced system (`None` when fixed).
fn free_columns(problem: &FitProblem) -> (Vec<usize>, Vec<Option<usize>>) {
    let n = problem.spline.control_points().len();
    let fixed = if problem.fix_boundary {
        boundary_mask(&problem.spline)
    } else {
        vec![false; n]
    };
    let mut free = Vec::new();
    let mut col = vec![None; n];
    for k in 0..n {
        if !fixed[k] {
            col[k] = Some(free.len());
            free.push(k);
        }
    }
    (free, col)
}

/// Dense system `A δ = b` for the displacement `δ` of the free control points.
fn displacement_system(
    problem: &FitProblem,
    rows: &[Vec<(usize, f64)>],
    col: &[Option<usize>],
    nfree: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rows.len();
    let mut a = DMatrix::zeros(n, nfree);
    let mut b = DMatrix::zeros(n, 3);
    let cps = problem.spline.control_points();
    for (i, row) in rows.iter().enumerate() {
        let mut s = Point::origin().coords;
        for &(k, v) in row {
            s += cps[k].coords * v;
            if let Some(c) = col[k] {
                a[(i, c)] += v;
            }
        }
        let r = problem.targets[i].coords - s;
        for d in 0..3 {
            b[(i, d)] = r[d];
        }
    }
    (a, b)
}

fn apply_displacement(spline: &Spline, free: &[usize], delta: &DMatrix<f64>) -> Result<Spline> {
    let mut cps = spline.control_points().to_vec();
    for (c, &k) in free.iter().enumerate() {
        for d in 0..3 {
            cps[k][d] += delta[(c, d)];
        }
    }
    spline.with_control_points(cps)
}

/// Linear least-squares placement of the control points.
///
/// Strict: a system that does not determine every free control point is rejected with the
/// list of unconstrained control points (flat indices).
pub fn fit_lsq(problem: &FitProblem) -> Result<(Spline, FitReport)> {
    let (free, col) = free_columns(problem);
    let rows = basis_rows(problem);
    let (a, b) = displacement_system(problem, &rows, &col, free.len());
    let mut report = FitReport::default();
    report.record(&problem.spline, &problem.param_coords, &problem.targets);
    if free.is_empty() {
        report.converged = true;
        return Ok((problem.spline.clone(), report));
    }
    if a.nrows() < a.ncols() {
        return Err(Error::RankDeficient {
            unconstrained: unconstrained(&a, &free),
        });
    }
    let (delta, rank) = lstsq(&a, &b, RANK_TOL);
    if rank < free.len() {
        return Err(Error::RankDeficient {
            unconstrained: unconstrained(&a, &free),
        });
    }
    let spline = apply_displacement(&problem.spline, &free, &delta)?;
    report.record(&spline, &problem.param_coords, &problem.targets);
    report.converged = true;
    Ok((spline, report))
}

fn unconstrained(a: &DMatrix<f64>, free: &[usize]) -> Vec<usize> {
    let cols = if a.nrows() == 0 {
        (0..a.ncols()).collect()
    } else {
        unconstrained_columns(a, 1e-10)
    };
    cols.into_iter().map(|c| free[c]).collect()
}

/// Least-squares placement that tolerates under-determination: the minimum-norm displacement
/// from the current control points, so control points without data stay where they are.
pub fn fit_warm(problem: &FitProblem) -> Result<(Spline, FitReport)> {
    let (free, col) = free_columns(problem);
    let rows = basis_rows(problem);
    let mut report = FitReport::default();
    report.record(&problem.spline, &problem.param_coords, &problem.targets);
    if free.is_empty() || rows.is_empty() {
        report.converged = true;
        return Ok((problem.spline.clone(), report));
    }
    let (a, b) = displacement_system(problem, &rows, &col, free.len());
    let (delta, rank) = lstsq(&a, &b, RANK_TOL);
    if rank < free.len() {
        report.warnings.push(format!(
            "{} of {} control points undetermined by the data",
            free.len() - rank,
            free.len()
        ));
    }
    let spline = apply_displacement(&problem.spline, &free, &delta)?;
    report.record(&spline, &problem.param_coords, &problem.targets);
    report.converged = true;
    Ok((spline, report))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OptOptions {
    pub lbfgs: LbfgsOptions,
}

/// Quasi-Newton (L-BFGS) minimization of the summed squared deviations, starting from the
/// current control points. Directions the data does not see have zero gradient and therefore
/// stay at their initial position.
pub fn fit_opt(problem: &FitProblem, opts: &OptOptions) -> Result<(Spline, FitReport)> {
    let (free, col) = free_columns(problem);
    let rows = basis_rows(problem);
    let mut report = FitReport::default();
    report.record(&problem.spline, &problem.param_coords, &problem.targets);

    let base: Vec<Point> = problem.spline.control_points().to_vec();
    let objective = |x: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut value = 0.0;
        for (row, target) in rows.iter().zip(&problem.targets) {
            let mut s = -target.coords;
            for &(k, v) in row {
                let p = match col[k] {
                    Some(c) => nalgebra::Vector3::new(x[3 * c], x[3 * c + 1], x[3 * c + 2]),
                    None => base[k].coords,
                };
                s += p * v;
            }
            value += s.norm_squared();
            for &(k, v) in row {
                if let Some(c) = col[k] {
                    for d in 0..3 {
                        g[3 * c + d] += 2.0 * v * s[d];
                    }
                }
            }
        }
        value
    };
    let x0: Vec<f64> = free
        .iter()
        .flat_map(|&k| [base[k].x, base[k].y, base[k].z])
        .collect();
    let min = minimize(objective, x0, &opts.lbfgs);

    let mut cps = base.clone();
    for (c, &k) in free.iter().enumerate() {
        cps[k] = Point::new(min.x[3 * c], min.x[3 * c + 1], min.x[3 * c + 2]);
    }
    let spline = problem.spline.with_control_points(cps)?;
    report.record(&spline, &problem.param_coords, &problem.targets);
    report.solver_iterations = min.iterations;
    report.converged = min.termination.converged();
    match min.termination {
        Termination::MaxIterations => report.warnings.push(format!(
            "L-BFGS stopped at the iteration cap ({}); best iterate returned",
            opts.lbfgs.max_iterations
        )),
        Termination::LineSearchFailed => {
            log::debug!(
                "L-BFGS line search made no progress after {} iterations",
                min.iterations
            )
        }
        _ => {}
    }
    Ok((spline, report))
}
