//! Iterative degree reduction with error-driven knot insertion and control-polygon monitoring,
//! bringing composed (high-degree) splines back to degrees CAD systems accept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{insert_knot, reduce_degree, KnotSpan, Spline};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowDegreeOptions {
    pub target_degree: usize,
    /// Largest deviation accepted from a single reduction step (model units).
    pub epsilon: f64,
    /// Per-span polygon growth above which a span is split after an oscillating step.
    pub delta: f64,
    /// Total polygon growth that triggers the per-span check.
    pub polygon_growth: f64,
    /// Knot insertions allowed per direction.
    pub knot_budget: usize,
}

impl LowDegreeOptions {
    pub fn new(target_degree: usize, epsilon: f64) -> Self {
        LowDegreeOptions {
            target_degree,
            epsilon,
            delta: 1.05,
            polygon_growth: 1.1,
            knot_budget: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    pub direction: usize,
    pub degree: usize,
    pub error: f64,
    pub knots_inserted: usize,
    /// Knots added by the control-polygon check rather than by the error check.
    pub smoothing_knots: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub steps: Vec<ReductionStep>,
    /// Largest deviation from the input measured on a dense parameter grid.
    pub max_deviation: f64,
    /// False when some step could not reach epsilon within the knot budget.
    pub within_tolerance: bool,
    pub warnings: Vec<String>,
}

/// Reduce every direction to at most `opts.target_degree`.
///
/// Directions are processed highest degree first. Each step reduces the degree by one; while
/// the reduction error exceeds epsilon, the knot span with the largest error is split at its
/// midpoint with multiplicity `q - p + 1` (q current, p target degree), so it ends up a simple
/// knot once the target degree is reached. When an accepted step grows the control polygon by
/// more than `polygon_growth`, every span that grew by more than `delta` is split and the step
/// is redone. Weights are first scaled so the largest is one.
pub fn low_order_approximation(
    spline: &Spline,
    opts: &LowDegreeOptions,
) -> Result<(Spline, ReductionReport)> {
    if opts.target_degree < 1 {
        return Err(Error::Refinement("target degree must be at least 1".into()));
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::Refinement("epsilon must be positive".into()));
    }
    let mut report = ReductionReport {
        within_tolerance: true,
        ..Default::default()
    };
    if spline.max_degree() <= opts.target_degree {
        return Ok((spline.clone(), report));
    }
    let p = opts.target_degree;
    let mut s = spline.normalized_weights();
    let mut inserted = vec![0usize; s.param_dim()];

    while let Some(d) = highest_direction(&s, p) {
        let q = s.knot_vector(d).degree();
        let mut step = ReductionStep {
            direction: d,
            degree: q - 1,
            error: 0.0,
            knots_inserted: 0,
            smoothing_knots: 0,
        };
        let reduced = loop {
            let old_len = polygon_length(&s, d);
            let (r, err) = reduce_degree(&s, d)?;
            if err.max > opts.epsilon && inserted[d] < opts.knot_budget {
                let spans = s.knot_vector(d).spans();
                let sp = spans[worst_span(&err.per_span, &spans)];
                if let Some(next) = split_span(&s, d, sp.mid(), q - p + 1)? {
                    s = next;
                    inserted[d] += 1;
                    step.knots_inserted += 1;
                    continue;
                }
            }
            if err.max > opts.epsilon {
                report.within_tolerance = false;
                report.warnings.push(format!(
                    "direction {d}: reduction to degree {} leaves error {:.3e} after {} knots (budget exhausted)",
                    q - 1,
                    err.max,
                    inserted[d]
                ));
            }
            let new_len = polygon_length(&r, d);
            if new_len.total > opts.polygon_growth * old_len.total && inserted[d] < opts.knot_budget
            {
                let mut split = Vec::new();
                if old_len.per_span.len() == new_len.per_span.len() {
                    let spans = s.knot_vector(d).spans();
                    for (k, (a, b)) in old_len.per_span.iter().zip(&new_len.per_span).enumerate() {
                        if *b > opts.delta * a {
                            split.push(spans[k].mid());
                        }
                    }
                }
                split.truncate(opts.knot_budget - inserted[d]);
                let mut added = 0;
                for u in &split {
                    if let Some(next) = split_span(&s, d, *u, q - p + 1)? {
                        s = next;
                        added += 1;
                    }
                }
                if added > 0 {
                    inserted[d] += added;
                    step.smoothing_knots += added;
                    continue;
                }
            }
            step.error = err.max;
            break r;
        };
        s = reduced;
        report.steps.push(step);
    }

    report.max_deviation = dense_deviation(spline, &s);
    Ok((s, report))
}

/// Insert `u` up to `times` times without exceeding the degree; `None` when nothing fits.
fn split_span(s: &Spline, d: usize, u: f64, times: usize) -> Result<Option<Spline>> {
    let kv = s.knot_vector(d);
    let room = kv.degree().saturating_sub(kv.multiplicity(u));
    let times = times.min(room);
    if times == 0 {
        return Ok(None);
    }
    insert_knot(s, d, u, times).map(Some)
}

fn highest_direction(s: &Spline, target: usize) -> Option<usize> {
    let degrees = s.degrees();
    let max = *degrees.iter().max()?;
    if max <= target {
        return None;
    }
    degrees.iter().position(|&d| d == max)
}

/// Span to split: the worst one, preferring the widest among (near) ties. Neighbours of a
/// breakpoint share its sample, so a peak at a C0 joint shows up in both.
fn worst_span(err: &[f64], spans: &[KnotSpan]) -> usize {
    let max = err.iter().cloned().fold(0.0, f64::max);
    let mut best = 0;
    for (i, &x) in err.iter().enumerate() {
        if x >= max * (1.0 - 1e-9)
            && (err[best] < max * (1.0 - 1e-9) || spans[i].width() > spans[best].width())
        {
            best = i;
        }
    }
    best
}

pub struct PolygonLength {
    pub total: f64,
    /// Length of the polygon legs acting on each non-empty knot span.
    pub per_span: Vec<f64>,
}

/// Control-polygon length along `direction`, summed over all lines of the net.
pub fn polygon_length(s: &Spline, direction: usize) -> PolygonLength {
    let kv = s.knot_vector(direction);
    let q = kv.degree();
    let spans = kv.spans();
    let counts = s.counts();
    let n = counts[direction];
    let inner: usize = counts[..direction].iter().product();
    let outer: usize = counts[direction + 1..].iter().product();
    let cps = s.control_points();
    let mut legs = vec![0.0; n.saturating_sub(1)];
    for o in 0..outer {
        for i in 0..inner {
            for k in 0..n.saturating_sub(1) {
                let a = cps[i + inner * (k + n * o)];
                let b = cps[i + inner * (k + 1 + n * o)];
                legs[k] += (b - a).norm();
            }
        }
    }
    let per_span = spans
        .iter()
        .map(|sp| {
            let first = sp.index.saturating_sub(q);
            legs[first..sp.index.min(legs.len())].iter().sum()
        })
        .collect();
    PolygonLength {
        total: legs.iter().sum(),
        per_span,
    }
}

/// Largest distance between `a` and `b` over a grid with 8 samples per knot span of `b`
/// (`b`'s breakpoints include `a`'s, since reduction only adds knots).
pub fn dense_deviation(a: &Spline, b: &Spline) -> f64 {
    let axes: Vec<Vec<f64>> = b
        .knot_vectors()
        .iter()
        .map(|kv| {
            let mut axis = Vec::new();
            for sp in kv.spans() {
                for k in 0..8 {
                    axis.push(sp.lo + sp.width() * k as f64 / 8.0);
                }
            }
            axis.push(kv.domain().1);
            axis
        })
        .collect();
    crate::spline::tensor_grid(&axes)
        .iter()
        .map(|u| (a.eval_clamped(u) - b.eval_clamped(u)).norm())
        .fold(0.0, f64::max)
}
