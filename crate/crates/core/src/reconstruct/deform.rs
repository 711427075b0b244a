use super::MeshPair;
use crate::error::{Error, Result};
use crate::fitting::{fit_warm, FitProblem, FitReport, RefinementAction};
use crate::spline::{KnotVector, ParametricPoint, Spline};
use crate::Point;

/// Relative per-axis margin added around the mesh bounding box.
pub const BOX_MARGIN: f64 = 1e-6;

/// Synthetic radial deformation: `x_j + c (r_j / max r) (x_j − x_c)` with `x_c` the centroid and
/// `r_j` the squared distance to it. Coincident points are returned unchanged.
pub fn prescribed_deformation(points: &[Point], c: f64) -> Vec<Point> {
    if points.is_empty() {
        return Vec::new();
    }
    let center = Point::from(
        points
            .iter()
            .map(|p| p.coords)
            .sum::<nalgebra::Vector3<f64>>()
            / points.len() as f64,
    );
    let r: Vec<f64> = points.iter().map(|p| (p - center).norm_squared()).collect();
    let rmax = r.iter().cloned().fold(0.0, f64::max);
    if rmax == 0.0 {
        return points.to_vec();
    }
    points
        .iter()
        .zip(&r)
        .map(|(p, rj)| p + (p - center) * (c * rj / rmax))
        .collect()
}

/// Axis-aligned bounding box of `points`, inflated by [`BOX_MARGIN`] of each extent.
pub fn mesh_box(points: &[Point]) -> Result<([f64; 3], [f64; 3])> {
    if points.is_empty() {
        return Err(Error::Mesh {
            line: 0,
            message: "empty mesh".into(),
        });
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diag = (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt();
    for k in 0..3 {
        let ext = hi[k] - lo[k];
        if !(ext > 1e-12 * diag) {
            return Err(Error::DegenerateBox { axis: k });
        }
        lo[k] -= BOX_MARGIN * ext;
        hi[k] += BOX_MARGIN * ext;
    }
    Ok((lo, hi))
}

/// Trivariate Bézier volume over `[lo, hi]` that maps every point to itself.
pub fn identity_trivariate(lo: [f64; 3], hi: [f64; 3], degrees: [usize; 3]) -> Result<Spline> {
    let kvs = (0..3)
        .map(|k| KnotVector::bezier(degrees[k], lo[k], hi[k]))
        .collect::<Result<Vec<_>>>()?;
    let mut cps = Vec::with_capacity((degrees[0] + 1) * (degrees[1] + 1) * (degrees[2] + 1));
    let at = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / degrees[k] as f64;
    for c in 0..=degrees[2] {
        for b in 0..=degrees[1] {
            for a in 0..=degrees[0] {
                cps.push(Point::new(at(0, a), at(1, b), at(2, c)));
            }
        }
    }
    let [k0, k1, k2]: [KnotVector; 3] = kvs.try_into().expect("three knot vectors");
    Spline::volume(k0, k1, k2, cps)
}

/// Fit the deformation volume `T` of the given degrees so that `T(x_i) ≈ x'_i`, starting from the
/// identity on the inflated mesh box (so the parametric coordinates are the initial points).
pub fn build_deformation_trivariate(
    mesh: &MeshPair,
    degrees: [usize; 3],
) -> Result<(Spline, FitReport)> {
    if degrees.contains(&0) {
        return Err(Error::InvalidSpline(format!(
            "deformation degrees must be at least 1, got {degrees:?}"
        )));
    }
    let (lo, hi) = mesh_box(mesh.initial())?;
    let t = identity_trivariate(lo, hi, degrees)?;
    fit_trivariate(t, mesh)
}

/// Refit `t` (any trivariate Bézier containing the mesh) against the mesh correspondences,
/// as a minimum-norm update from its current control points.
pub fn fit_trivariate(t: Spline, mesh: &MeshPair) -> Result<(Spline, FitReport)> {
    let params: Vec<ParametricPoint> = mesh
        .initial()
        .iter()
        .map(|p| ParametricPoint::volume(p.x, p.y, p.z))
        .collect();
    let problem = FitProblem::new(t, params, mesh.deformed().to_vec())?;
    fit_warm(&problem)
}

/// Greedy degree selection: starting from `start`, elevate the single direction whose
/// elevation lowers the objective most, until the largest pointwise error is at most `target`
/// or every direction reached `max`.
pub fn auto_deformation_trivariate(
    mesh: &MeshPair,
    start: [usize; 3],
    max: [usize; 3],
    target: f64,
) -> Result<(Spline, FitReport)> {
    let (mut t, mut report) = build_deformation_trivariate(mesh, start)?;
    let mut degrees = start;
    let mut log = Vec::new();
    while report.final_max_error > target {
        let mut best: Option<(usize, Spline, FitReport)> = None;
        for d in 0..3 {
            if degrees[d] >= max[d] {
                continue;
            }
            let mut trial = degrees;
            trial[d] += 1;
            let (s, r) = build_deformation_trivariate(mesh, trial)?;
            let better = match &best {
                Some((_, _, b)) => last(&r) < last(b),
                None => true,
            };
            if better {
                best = Some((d, s, r));
            }
        }
        let Some((d, s, r)) = best else { break };
        degrees[d] += 1;
        log.push(RefinementAction::DegreeElevation { direction: d });
        t = s;
        report = r;
    }
    report.refinement_log = log;
    report.converged = report.final_max_error <= target;
    Ok((t, report))
}

fn last(r: &FitReport) -> f64 {
    r.objective_history.last().copied().unwrap_or(f64::INFINITY)
}
