use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{ParametricPoint, Spline};

/// Which parametric directions may receive a knot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    /// Compare spans of every direction; the heaviest one wins.
    #[default]
    All,
    Only(usize),
}

/// Fraction of the span width kept free at either end of a knot span.
const SPAN_MARGIN: f64 = 0.1;

/// Pick the knot span carrying the largest summed pointwise error and a knot value inside it.
///
/// The value is the error-weighted mean parametric coordinate of the points in that span,
/// clamped to the inner 80 % of the span so the new knot never lands next to an existing one.
/// Ties go to the lowest direction, then the lowest span.
pub fn weiss_select_knot(
    spline: &Spline,
    params: &[ParametricPoint],
    errors: &[f64],
    policy: DirectionPolicy,
) -> Result<(usize, f64)> {
    if errors.iter().all(|&e| e == 0.0) {
        return Err(Error::NoInsertionNeeded);
    }
    let dirs: Vec<usize> = match policy {
        DirectionPolicy::All => (0..spline.param_dim()).collect(),
        DirectionPolicy::Only(d) if d < spline.param_dim() => vec![d],
        DirectionPolicy::Only(d) => {
            return Err(Error::Refinement(format!("no direction {d}")));
        }
    };

    let mut best: Option<(f64, usize, usize)> = None;
    for &d in &dirs {
        let kv = spline.knot_vector(d);
        let mut sums = vec![0.0; kv.spans().len()];
        for (u, &e) in params.iter().zip(errors) {
            sums[kv.span_ordinal(u[d])] += e;
        }
        for (s, &sum) in sums.iter().enumerate() {
            if best.is_none_or(|(b, _, _)| sum > b) {
                best = Some((sum, d, s));
            }
        }
    }
    let (_, d, s) = best.expect("at least one direction");
    let kv = spline.knot_vector(d);
    let span = kv.spans()[s];

    let (mut num, mut den) = (0.0, 0.0);
    for (u, &e) in params.iter().zip(errors) {
        if kv.span_ordinal(u[d]) == s {
            num += e * u[d];
            den += e;
        }
    }
    let centroid = if den > 0.0 { num / den } else { span.mid() };
    let margin = SPAN_MARGIN * span.width();
    Ok((d, centroid.clamp(span.lo + margin, span.hi - margin)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::KnotVector;
    use crate::Point;

    fn two_span_line() -> Spline {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 1.0, 2.0, 2.0]).unwrap();
        Spline::curve(kv, vec![Point::origin(); 3], None).unwrap()
    }

    #[test]
    fn heavier_span_and_centroid() {
        let s = two_span_line();
        let params: Vec<_> = [0.2, 0.6, 1.5]
            .iter()
            .map(|&u| ParametricPoint::curve(u))
            .collect();
        // Span 0 carries 3, span 1 carries 1.
        let (d, u) =
            weiss_select_knot(&s, &params, &[1.0, 2.0, 1.0], DirectionPolicy::All).unwrap();
        assert_eq!(d, 0);
        let centroid = (0.2 + 2.0 * 0.6) / 3.0;
        assert!((u - centroid).abs() < 1e-15);
    }

    #[test]
    fn centroid_is_clamped() {
        let s = two_span_line();
        let params = vec![ParametricPoint::curve(1.99)];
        let (_, u) = weiss_select_knot(&s, &params, &[1.0], DirectionPolicy::All).unwrap();
        assert!((u - 1.9).abs() < 1e-15);
    }

    #[test]
    fn zero_errors() {
        let s = two_span_line();
        let params = vec![ParametricPoint::curve(0.5)];
        assert!(matches!(
            weiss_select_knot(&s, &params, &[0.0], DirectionPolicy::All),
            Err(Error::NoInsertionNeeded)
        ));
    }
}
