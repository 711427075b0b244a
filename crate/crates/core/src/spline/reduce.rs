use nalgebra::{DMatrix, Vector4};
use serde::{Deserialize, Serialize};

use super::knots::KnotVector;
use super::spline::Spline;
use crate::error::{Error, Result};
use crate::linalg::{collocation_matrix, gauss_legendre, pseudo_inverse};

/// Deviation introduced by one degree-reduction step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionError {
    /// Largest measured deviation over all knot spans.
    pub max: f64,
    /// Deviation per non-empty knot span along the reduced direction.
    pub per_span: Vec<f64>,
}

/// Knot vector of the degree-reduced basis: the same breakpoints, ends clamped for the lower
/// degree, interior multiplicities lowered by one (but kept at least one).
fn reduced_knots(kv: &KnotVector) -> Result<KnotVector> {
    let q = kv.degree() - 1;
    let breaks: Vec<(f64, usize)> = kv
        .breakpoints()
        .into_iter()
        .map(|(u, m)| (u, m.saturating_sub(1).clamp(1, q.max(1))))
        .collect();
    KnotVector::from_breakpoints(q, &breaks)
}

/// Reduce the degree along `direction` by one.
///
/// Every control-net line along the direction is replaced by its least-squares (L2) projection
/// onto the degree−1 spline space with the same breakpoints, computed in homogeneous
/// coordinates with Gauss–Legendre quadrature exact for the product spaces. A spline that was
/// obtained by degree elevation lies in the target space and is recovered exactly.
///
/// The returned error is the largest deviation between original and reduced control lines,
/// sampled densely in every knot span; by the convex-hull property of the remaining
/// directions it bounds the deviation of the whole (polynomial) spline.
pub fn reduce_degree(spline: &Spline, direction: usize) -> Result<(Spline, ReductionError)> {
    if direction >= spline.param_dim() {
        return Err(Error::Refinement(format!("no direction {direction}")));
    }
    let kv = spline.knot_vector(direction);
    let p = kv.degree();
    if p < 2 {
        return Err(Error::Refinement(format!(
            "cannot reduce degree {p} below linear"
        )));
    }
    let new_kv = reduced_knots(kv)?;
    let spans = kv.spans();

    let (gx, gw) = gauss_legendre(p + 1);
    let mut params = Vec::with_capacity(spans.len() * gx.len());
    let mut weights = Vec::with_capacity(params.capacity());
    for s in &spans {
        for (x, w) in gx.iter().zip(&gw) {
            params.push(s.lo + 0.5 * (x + 1.0) * s.width());
            weights.push((0.5 * w * s.width()).sqrt());
        }
    }
    let mut b_old = collocation_matrix(kv, &params);
    let mut b_new = collocation_matrix(&new_kv, &params);
    for (i, &w) in weights.iter().enumerate() {
        b_old.row_mut(i).scale_mut(w);
        b_new.row_mut(i).scale_mut(w);
    }
    let op: DMatrix<f64> = pseudo_inverse(&b_new, 1e-14) * b_old;

    let reduced = spline.map_lines(direction, new_kv.clone(), |line| apply(&op, line))?;

    // Dense per-span comparison of the control lines.
    let per = 4 * (p + 1);
    let mut sample = Vec::with_capacity(spans.len() * (per + 1));
    let mut owner = Vec::with_capacity(sample.capacity());
    for (si, s) in spans.iter().enumerate() {
        for k in 0..=per {
            sample.push(s.lo + s.width() * k as f64 / per as f64);
            owner.push(si);
        }
    }
    let e_old = collocation_matrix(kv, &sample);
    let e_new = collocation_matrix(&new_kv, &sample);
    let mut per_span = vec![0.0f64; spans.len()];
    for (old_line, new_line) in spline.lines(direction).iter().zip(reduced.lines(direction)) {
        let a = apply(&e_old, old_line);
        let b = apply(&e_new, &new_line);
        for ((ha, hb), &si) in a.iter().zip(&b).zip(&owner) {
            let d = (ha.xyz() / ha.w - hb.xyz() / hb.w).norm();
            per_span[si] = per_span[si].max(d);
        }
    }
    let max = per_span.iter().cloned().fold(0.0, f64::max);
    Ok((reduced, ReductionError { max, per_span }))
}

fn apply(m: &DMatrix<f64>, line: &[Vector4<f64>]) -> Vec<Vector4<f64>> {
    (0..m.nrows())
        .map(|i| {
            line.iter()
                .enumerate()
                .fold(Vector4::zeros(), |acc, (j, h)| acc + h * m[(i, j)])
        })
        .collect()
}
