//! Foot-point projection of physical points onto splines.
//!
//! A coarse tessellation supplies the seed (nearest sample); the seed is then refined by damped
//! Gauss–Newton iteration on the squared distance, using first derivatives only. Parameters are
//! clamped to the spline domain throughout.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{tensor_grid, ParametricPoint, Spline};
use crate::{Point, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub parametric: ParametricPoint,
    pub distance: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectionOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the parameter update, relative to the domain width.
    pub param_tol: f64,
    /// Convergence threshold on the distance update (model units).
    pub distance_tol: f64,
    /// Tolerance on |cos| between residual and tangents for first-order optimality.
    pub orthogonality_tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            max_iterations: 50,
            param_tol: 1e-12,
            distance_tol: 1e-14,
            orthogonality_tol: 1e-8,
        }
    }
}

/// Sampled points of a spline used to seed projections.
pub struct Tessellation {
    params: Vec<ParametricPoint>,
    points: Vec<Point>,
}

impl Tessellation {
    /// `max(degree + 1, 8)` samples per knot span and direction.
    pub fn new(spline: &Spline) -> Self {
        let axes: Vec<Vec<f64>> = spline
            .knot_vectors()
            .iter()
            .map(|kv| {
                let per = (kv.degree() + 1).max(8);
                let mut axis = Vec::new();
                for s in kv.spans() {
                    for k in 0..per {
                        axis.push(s.lo + s.width() * k as f64 / per as f64);
                    }
                }
                axis.push(kv.domain().1);
                axis
            })
            .collect();
        let params = tensor_grid(&axes);
        let points = params.iter().map(|p| spline.eval_clamped(p)).collect();
        Tessellation { params, points }
    }

    pub fn nearest(&self, query: &Point) -> ParametricPoint {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - query).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        self.params[best]
    }
}

/// Project a single point. Without a seed the nearest tessellation sample is used.
pub fn project_point(
    spline: &Spline,
    query: &Point,
    seed: Option<ParametricPoint>,
) -> Result<ProjectionResult> {
    if !query.coords.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidSpline("non-finite query point".into()));
    }
    let seed = match seed {
        Some(s) => spline.clamp_param(&s),
        None => Tessellation::new(spline).nearest(query),
    };
    refine(spline, query, seed, &ProjectionOptions::default())
}

/// Project many points. `hint` supplies per-query seeds (for instance parametric coordinates
/// reused from a previous projection); otherwise seeds come from one shared tessellation.
/// Failures are reported per point.
pub fn project_points(
    spline: &Spline,
    queries: &[Point],
    hint: Option<&[ParametricPoint]>,
) -> Vec<Result<ProjectionResult>> {
    if queries.is_empty() {
        return Vec::new();
    }
    let opts = ProjectionOptions::default();
    match hint {
        Some(seeds) => queries
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(q, s)| refine(spline, q, spline.clamp_param(s), &opts))
            .collect(),
        None => {
            let tess = Tessellation::new(spline);
            queries
                .par_iter()
                .map(|q| refine(spline, q, tess.nearest(q), &opts))
                .collect()
        }
    }
}

/// Damped Gauss–Newton refinement from `seed`.
pub fn refine(
    spline: &Spline,
    query: &Point,
    seed: ParametricPoint,
    opts: &ProjectionOptions,
) -> Result<ProjectionResult> {
    let dims = spline.param_dim();
    let widths: Vec<f64> = (0..dims)
        .map(|d| {
            let (lo, hi) = spline.domain(d);
            hi - lo
        })
        .collect();
    let mut u = spline.clamp_param(&seed);
    let (mut point, mut tangents) = spline.point_and_tangents(&u);
    let mut dist = (point - query).norm();
    let scale = 1.0 + query.coords.norm();

    for iter in 1..=opts.max_iterations {
        let residual = point - query;
        let free = free_directions(spline, &u, &residual, &tangents);
        if free.is_empty() || dist <= 1e-15 * scale {
            return Ok(done(u, dist, iter - 1));
        }
        let step = gauss_newton_step(&tangents, &residual, &free);
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = u;
            for (k, &d) in free.iter().enumerate() {
                trial[d] += damping * step[k];
            }
            let trial = spline.clamp_param(&trial);
            let p = spline.eval_clamped(&trial);
            let td = (p - query).norm();
            if td <= dist {
                accepted = Some((trial, td));
                break;
            }
            damping *= 0.5;
        }
        let Some((next, next_dist)) = accepted else {
            // No decrease along the Gauss–Newton direction: local minimum to working precision.
            return Ok(done(u, dist, iter));
        };
        let moved = (0..dims)
            .map(|d| ((next[d] - u[d]) / widths[d]).abs())
            .fold(0.0, f64::max);
        let improvement = dist - next_dist;
        u = next;
        dist = next_dist;
        (point, tangents) = spline.point_and_tangents(&u);
        // A stalled distance alone is not enough: near the foot point the distance is
        // quadratic in the parameter error, so also require first-order optimality.
        if moved < opts.param_tol
            || (improvement < opts.distance_tol
                && is_orthogonal(
                    spline,
                    &u,
                    &(point - query),
                    &tangents,
                    opts.orthogonality_tol,
                ))
        {
            return Ok(done(u, dist, iter));
        }
    }
    let residual = point - query;
    if is_orthogonal(spline, &u, &residual, &tangents, opts.orthogonality_tol) {
        return Ok(done(u, dist, opts.max_iterations));
    }
    Err(Error::ProjectionNotConverged {
        iterations: opts.max_iterations,
        distance: dist,
        best: Box::new(done(u, dist, opts.max_iterations)),
    })
}

fn done(u: ParametricPoint, distance: f64, iterations: usize) -> ProjectionResult {
    ProjectionResult {
        parametric: u,
        distance,
        iterations,
    }
}

/// Directions not blocked by an active bound (parameter at the bound with the descent direction
/// pointing outward).
fn free_directions(
    spline: &Spline,
    u: &[f64],
    residual: &Vector,
    tangents: &[Vector],
) -> Vec<usize> {
    (0..spline.param_dim())
        .filter(|&d| {
            let (lo, hi) = spline.domain(d);
            let g = residual.dot(&tangents[d]);
            !((u[d] <= lo && g > 0.0) || (u[d] >= hi && g < 0.0))
        })
        .collect()
}

fn gauss_newton_step(tangents: &[Vector], residual: &Vector, free: &[usize]) -> Vec<f64> {
    let n = free.len();
    let mut jtj = DMatrix::zeros(n, n);
    let mut jtr = DVector::zeros(n);
    for (a, &da) in free.iter().enumerate() {
        jtr[a] = -tangents[da].dot(residual);
        for (b, &db) in free.iter().enumerate() {
            jtj[(a, b)] = tangents[da].dot(&tangents[db]);
        }
    }
    let reg = 1e-14
        * (0..n)
            .map(|i| jtj[(i, i)])
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
    for i in 0..n {
        jtj[(i, i)] += reg;
    }
    match jtj.clone().cholesky() {
        Some(ch) => ch.solve(&jtr).iter().copied().collect(),
        None => jtj
            .pseudo_inverse(1e-14)
            .map(|pinv| (pinv * jtr).iter().copied().collect())
            .unwrap_or_else(|_| vec![0.0; n]),
    }
}

/// First-order optimality: the residual is orthogonal to every free tangent.
pub fn is_orthogonal(
    spline: &Spline,
    u: &[f64],
    residual: &Vector,
    tangents: &[Vector],
    tol: f64,
) -> bool {
    let rn = residual.norm();
    if rn < 1e-12 {
        return true;
    }
    free_directions(spline, u, residual, tangents)
        .into_iter()
        .all(|d| {
            let tn = tangents[d].norm();
            tn == 0.0 || (residual.dot(&tangents[d]) / (rn * tn)).abs() < tol
        })
}
