use nalgebra::{Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::knots::KnotVector;
use super::param::ParametricPoint;
use crate::error::{Error, Result};

/// Relative slack (of the domain width) tolerated before a parameter counts as out of range.
const DOMAIN_SLACK: f64 = 1e-9;

/// Tensor-product B-spline or NURBS mapping with 1, 2 or 3 parametric directions into 3D.
///
/// Control points are stored with the first parametric direction varying fastest:
/// `index = i0 + n0 * (i1 + n1 * i2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpline", into = "RawSpline")]
pub struct Spline {
    bases: Vec<KnotVector>,
    control_points: Vec<Point3<f64>>,
    weights: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawSpline {
    bases: Vec<KnotVector>,
    control_points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl TryFrom<RawSpline> for Spline {
    type Error = Error;
    fn try_from(raw: RawSpline) -> Result<Self> {
        let pts = raw
            .control_points
            .into_iter()
            .map(|[x, y, z]| Point3::new(x, y, z))
            .collect();
        Spline::new(raw.bases, pts, raw.weights)
    }
}

impl From<Spline> for RawSpline {
    fn from(s: Spline) -> Self {
        RawSpline {
            control_points: s.control_points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            bases: s.bases,
            weights: s.weights,
        }
    }
}

impl Spline {
    pub fn new(
        bases: Vec<KnotVector>,
        control_points: Vec<Point3<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if bases.is_empty() || bases.len() > 3 {
            return Err(Error::InvalidSpline(format!(
                "{} parametric directions (expected 1..=3)",
                bases.len()
            )));
        }
        let expected: usize = bases.iter().map(|b| b.num_basis()).product();
        if control_points.len() != expected {
            return Err(Error::InvalidSpline(format!(
                "control net has {} points, knot vectors require {expected}",
                control_points.len()
            )));
        }
        if control_points
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidSpline("non-finite control point".into()));
        }
        if let Some(w) = &weights {
            if w.len() != expected {
                return Err(Error::InvalidSpline(format!(
                    "{} weights for {expected} control points",
                    w.len()
                )));
            }
            if w.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                return Err(Error::InvalidSpline(
                    "weights must be strictly positive".into(),
                ));
            }
        }
        Ok(Spline {
            bases,
            control_points,
            weights,
        })
    }

    pub fn curve(
        knots: KnotVector,
        control_points: Vec<Point3<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::new(vec![knots], control_points, weights)
    }

    pub fn surface(
        u: KnotVector,
        v: KnotVector,
        control_points: Vec<Point3<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::new(vec![u, v], control_points, weights)
    }

    pub fn volume(
        u: KnotVector,
        v: KnotVector,
        w: KnotVector,
        control_points: Vec<Point3<f64>>,
    ) -> Result<Self> {
        Self::new(vec![u, v, w], control_points, None)
    }

    /// Rebuild from a homogeneous control net `(w x, w y, w z, w)`. When `rational` is false the
    /// weights are assumed to be one and dropped.
    pub fn from_homogeneous(
        bases: Vec<KnotVector>,
        net: &[Vector4<f64>],
        rational: bool,
    ) -> Result<Self> {
        if rational {
            let weights: Vec<f64> = net.iter().map(|h| h.w).collect();
            let pts = net
                .iter()
                .map(|h| Point3::new(h.x / h.w, h.y / h.w, h.z / h.w))
                .collect();
            Self::new(bases, pts, Some(weights))
        } else {
            let pts = net.iter().map(|h| Point3::new(h.x, h.y, h.z)).collect();
            Self::new(bases, pts, None)
        }
    }

    pub fn param_dim(&self) -> usize {
        self.bases.len()
    }

    pub fn knot_vector(&self, direction: usize) -> &KnotVector {
        &self.bases[direction]
    }

    pub fn knot_vectors(&self) -> &[KnotVector] {
        &self.bases
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.degree()).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.bases.iter().map(|b| b.degree()).max().unwrap_or(0)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.num_basis()).collect()
    }

    pub fn control_points(&self) -> &[Point3<f64>] {
        &self.control_points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_rational(&self) -> bool {
        self.weights.is_some()
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[index])
    }

    pub fn domain(&self, direction: usize) -> (f64, f64) {
        self.bases[direction].domain()
    }

    /// Flat index of the control point with multi-index `idx`.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        let mut stride = 1;
        for (d, &i) in idx.iter().enumerate() {
            flat += i * stride;
            stride *= self.bases[d].num_basis();
        }
        flat
    }

    /// Multi-index of a flat control point index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.bases
            .iter()
            .map(|b| {
                let n = b.num_basis();
                let i = flat % n;
                flat /= n;
                i
            })
            .collect()
    }

    pub fn homogeneous_net(&self) -> Vec<Vector4<f64>> {
        self.control_points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let w = self.weight(i);
                Vector4::new(p.x * w, p.y * w, p.z * w, w)
            })
            .collect()
    }

    /// Same parameterization with a new set of control points.
    pub fn with_control_points(&self, control_points: Vec<Point3<f64>>) -> Result<Self> {
        Self::new(self.bases.clone(), control_points, self.weights.clone())
    }

    /// Apply a point map to every control point (exact for affine maps).
    pub fn map_control_points(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Spline {
            bases: self.bases.clone(),
            control_points: self.control_points.iter().map(f).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Axis-aligned bounding box of the control net; contains the whole spline.
    pub fn control_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from([f64::INFINITY; 3]);
        let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
        for p in &self.control_points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Validate `at` against the domain, clamping values within rounding slack.
    pub fn check_param(&self, at: &[f64]) -> Result<ParametricPoint> {
        if at.len() != self.param_dim() {
            return Err(Error::InvalidSpline(format!(
                "expected {} parametric coordinates, got {}",
                self.param_dim(),
                at.len()
            )));
        }
        let mut out = [0.0; 3];
        for (d, &u) in at.iter().enumerate() {
            let (lo, hi) = self.domain(d);
            let slack = DOMAIN_SLACK * (hi - lo);
            if !(u >= lo - slack && u <= hi + slack) {
                return Err(Error::Domain {
                    direction: d,
                    value: u,
                    lo,
                    hi,
                });
            }
            out[d] = u.clamp(lo, hi);
        }
        Ok(ParametricPoint::new(&out[..at.len()]))
    }

    /// Clamp every coordinate into the domain.
    pub fn clamp_param(&self, at: &[f64]) -> ParametricPoint {
        let mut out = [0.0; 3];
        for (d, &u) in at.iter().enumerate().take(self.param_dim()) {
            let (lo, hi) = self.domain(d);
            out[d] = u.clamp(lo, hi);
        }
        ParametricPoint::new(&out[..self.param_dim()])
    }

    pub fn evaluate(&self, at: &[f64]) -> Result<Point3<f64>> {
        let at = self.check_param(at)?;
        Ok(self.eval_clamped(&at))
    }

    /// Evaluate at a parameter already known to lie in the domain.
    pub(crate) fn eval_clamped(&self, at: &[f64]) -> Point3<f64> {
        let h = self.eval_homogeneous(at);
        Point3::new(h.x / h.w, h.y / h.w, h.z / h.w)
    }

    fn eval_homogeneous(&self, at: &[f64]) -> Vector4<f64> {
        let mut acc = Vector4::zeros();
        self.for_each_basis(at, |flat, b| {
            let w = self.weight(flat);
            let p = &self.control_points[flat];
            acc += Vector4::new(p.x * w, p.y * w, p.z * w, w) * b;
        });
        acc
    }

    /// Visit every control point with a non-zero tensor-product (non-rational) basis value.
    fn for_each_basis(&self, at: &[f64], mut f: impl FnMut(usize, f64)) {
        let dims = self.param_dim();
        let mut spans = [0usize; 3];
        let mut vals: [Vec<f64>; 3] = Default::default();
        for d in 0..dims {
            let kv = &self.bases[d];
            spans[d] = kv.find_span(at[d]);
            vals[d] = kv.basis_funs(spans[d], at[d]);
        }
        self.tensor_visit(dims, &spans, &vals, &mut f);
    }

    fn tensor_visit(
        &self,
        dims: usize,
        spans: &[usize; 3],
        vals: &[Vec<f64>; 3],
        f: &mut impl FnMut(usize, f64),
    ) {
        let n0 = self.bases[0].num_basis();
        let n1 = if dims > 1 {
            self.bases[1].num_basis()
        } else {
            1
        };
        let p = [
            self.bases[0].degree(),
            if dims > 1 { self.bases[1].degree() } else { 0 },
            if dims > 2 { self.bases[2].degree() } else { 0 },
        ];
        let one = [1.0];
        let v1: &[f64] = if dims > 1 { &vals[1] } else { &one };
        let v2: &[f64] = if dims > 2 { &vals[2] } else { &one };
        for (c, &b2) in v2.iter().enumerate() {
            let i2 = if dims > 2 { spans[2] - p[2] + c } else { 0 };
            for (b, &b1) in v1.iter().enumerate() {
                let i1 = if dims > 1 { spans[1] - p[1] + b } else { 0 };
                let base = n0 * (i1 + n1 * i2);
                for (a, &b0) in vals[0].iter().enumerate() {
                    let i0 = spans[0] - p[0] + a;
                    f(base + i0, b0 * b1 * b2);
                }
            }
        }
    }

    /// Non-zero values of the (rational) basis functions at `at`, as `(flat index, value)`.
    /// These are the rows of the collocation matrix used by control-point fitting.
    pub fn basis_row(&self, at: &[f64]) -> Vec<(usize, f64)> {
        let mut row = Vec::new();
        let mut wsum = 0.0;
        self.for_each_basis(at, |flat, b| {
            let wb = b * self.weight(flat);
            wsum += wb;
            row.push((flat, wb));
        });
        if self.is_rational() {
            for e in row.iter_mut() {
                e.1 /= wsum;
            }
        }
        row.retain(|e| e.1 != 0.0);
        row
    }

    /// Partial derivative of the mapping of the given order along one direction.
    pub fn derivative(&self, at: &[f64], direction: usize, order: usize) -> Result<Vector3<f64>> {
        if direction >= self.param_dim() {
            return Err(Error::InvalidSpline(format!(
                "direction {direction} on a {}-parametric spline",
                self.param_dim()
            )));
        }
        let at = self.check_param(at)?;
        Ok(self.derivatives_along(&at, direction, order)[order])
    }

    /// Euclidean derivatives `S, dS, ..., d^order S` along `direction`.
    pub(crate) fn derivatives_along(
        &self,
        at: &[f64],
        direction: usize,
        order: usize,
    ) -> Vec<Vector3<f64>> {
        let dims = self.param_dim();
        let mut spans = [0usize; 3];
        let mut vals: [Vec<f64>; 3] = Default::default();
        for d in 0..dims {
            let kv = &self.bases[d];
            spans[d] = kv.find_span(at[d]);
            if d != direction {
                vals[d] = kv.basis_funs(spans[d], at[d]);
            }
        }
        let ders = self.bases[direction].ders_basis_funs(spans[direction], at[direction], order);
        // Homogeneous derivatives A^(k) = (w x)^(k), w^(k).
        let hom: Vec<Vector4<f64>> = ders
            .iter()
            .map(|row| {
                let mut v = vals.clone();
                v[direction] = row.clone();
                let mut acc = Vector4::zeros();
                self.tensor_visit(dims, &spans, &v, &mut |flat, b| {
                    let w = self.weight(flat);
                    let p = &self.control_points[flat];
                    acc += Vector4::new(p.x * w, p.y * w, p.z * w, w) * b;
                });
                acc
            })
            .collect();
        let w0 = hom[0].w;
        let mut out: Vec<Vector3<f64>> = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut v = hom[k].xyz();
            let mut binom = 1.0;
            for i in 1..=k {
                binom = binom * (k - i + 1) as f64 / i as f64;
                v -= out[k - i] * (binom * hom[i].w);
            }
            out.push(v / w0);
        }
        out
    }

    /// Point and first partial derivatives in every direction.
    pub fn point_and_tangents(&self, at: &[f64]) -> (Point3<f64>, Vec<Vector3<f64>>) {
        let mut tangents = Vec::with_capacity(self.param_dim());
        let mut point = Point3::origin();
        for d in 0..self.param_dim() {
            let ders = self.derivatives_along(at, d, 1);
            point = Point3::from(ders[0]);
            tangents.push(ders[1]);
        }
        (point, tangents)
    }

    /// Apply a one-dimensional operator to every line of the homogeneous control net along
    /// `direction`. The operator may change the number of points along that direction; the
    /// knot vector for the direction is replaced by `new_basis`.
    pub(crate) fn map_lines(
        &self,
        direction: usize,
        new_basis: KnotVector,
        mut op: impl FnMut(&[Vector4<f64>]) -> Vec<Vector4<f64>>,
    ) -> Result<Self> {
        let counts = self.counts();
        let net = self.homogeneous_net();
        let n_dir = counts[direction];
        let new_n = new_basis.num_basis();
        let inner: usize = counts[..direction].iter().product();
        let outer: usize = counts[direction + 1..].iter().product();
        let mut out = vec![Vector4::zeros(); inner * new_n * outer];
        let mut line = Vec::with_capacity(n_dir);
        for o in 0..outer {
            for i in 0..inner {
                line.clear();
                for k in 0..n_dir {
                    line.push(net[i + inner * (k + n_dir * o)]);
                }
                let mapped = op(&line);
                if mapped.len() != new_n {
                    return Err(Error::Refinement(format!(
                        "line operator produced {} points, expected {new_n}",
                        mapped.len()
                    )));
                }
                for (k, h) in mapped.into_iter().enumerate() {
                    out[i + inner * (k + new_n * o)] = h;
                }
            }
        }
        let mut bases = self.bases.clone();
        bases[direction] = new_basis;
        Self::from_homogeneous(bases, &out, self.is_rational())
    }

    /// Lines of the homogeneous net along `direction`, in storage order of the other indices.
    pub(crate) fn lines(&self, direction: usize) -> Vec<Vec<Vector4<f64>>> {
        let counts = self.counts();
        let net = self.homogeneous_net();
        let n_dir = counts[direction];
        let inner: usize = counts[..direction].iter().product();
        let outer: usize = counts[direction + 1..].iter().product();
        let mut lines = Vec::with_capacity(inner * outer);
        for o in 0..outer {
            for i in 0..inner {
                lines.push(
                    (0..n_dir)
                        .map(|k| net[i + inner * (k + n_dir * o)])
                        .collect(),
                );
            }
        }
        lines
    }

    /// Rescale weights so that the largest weight is one. Geometry is unchanged.
    pub fn normalized_weights(&self) -> Self {
        match &self.weights {
            None => self.clone(),
            Some(w) => {
                let max = w.iter().cloned().fold(0.0, f64::max);
                Spline {
                    bases: self.bases.clone(),
                    control_points: self.control_points.clone(),
                    weights: Some(w.iter().map(|x| x / max).collect()),
                }
            }
        }
    }

    /// Regular grid of `per_dir` parameters per direction spanning the domain.
    pub fn sample_grid(&self, per_dir: usize) -> Vec<ParametricPoint> {
        let axes: Vec<Vec<f64>> = (0..self.param_dim())
            .map(|d| {
                let (lo, hi) = self.domain(d);
                (0..per_dir)
                    .map(|i| lo + (hi - lo) * i as f64 / (per_dir - 1).max(1) as f64)
                    .collect()
            })
            .collect();
        tensor_grid(&axes)
    }
}

/// Tensor grid of parametric points from per-direction coordinate lists (first direction fastest).
pub fn tensor_grid(axes: &[Vec<f64>]) -> Vec<ParametricPoint> {
    let mut out = vec![ParametricPoint::new(&[])];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for &u in axis {
            for p in &out {
                next.push(p.pushed(u));
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Spline {
        Spline::curve(
            KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap(),
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            None,
        )
        .unwrap()
    }

    #[test]
    fn evaluates_line_midpoint() {
        let p = line().evaluate(&[0.5]).unwrap();
        assert_eq!(p, Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn line_derivative_is_constant() {
        let s = line();
        for &u in &[0.0, 0.3, 1.0] {
            assert_eq!(
                s.derivative(&[u], 0, 1).unwrap(),
                Vector3::new(2.0, 0.0, 0.0)
            );
            assert_eq!(s.derivative(&[u], 0, 2).unwrap(), Vector3::zeros());
        }
    }

    #[test]
    fn out_of_range_names_direction() {
        let s = Spline::surface(
            KnotVector::bezier(1, 0.0, 1.0).unwrap(),
            KnotVector::bezier(1, 0.0, 2.0).unwrap(),
            vec![Point3::origin(); 4],
            None,
        )
        .unwrap();
        match s.evaluate(&[0.5, 2.5]) {
            Err(Error::Domain { direction, .. }) => assert_eq!(direction, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_weights_and_sizes() {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let pts = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        assert!(Spline::curve(kv.clone(), pts.clone(), Some(vec![1.0, 0.0])).is_err());
        assert!(Spline::curve(kv.clone(), pts[..1].to_vec(), None).is_err());
        assert!(Spline::curve(kv, pts, Some(vec![1.0, 2.0])).is_ok());
    }

    #[test]
    fn rational_quarter_circle() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = Spline::curve(
            KnotVector::bezier(2, 0.0, 1.0).unwrap(),
            vec![
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            Some(vec![1.0, h, 1.0]),
        )
        .unwrap();
        for i in 0..=20 {
            let p = s.evaluate(&[i as f64 / 20.0]).unwrap();
            assert!((p.coords.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn serde_round_trip() {
        let s = line();
        let json = serde_json::to_string(&s).unwrap();
        let back: Spline = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn tensor_grid_first_axis_fastest() {
        let g = tensor_grid(&[vec![0.0, 1.0], vec![5.0, 6.0]]);
        let flat: Vec<Vec<f64>> = g.iter().map(|p| p.to_vec()).collect();
        assert_eq!(
            flat,
            vec![
                vec![0.0, 5.0],
                vec![1.0, 5.0],
                vec![0.0, 6.0],
                vec![1.0, 6.0]
            ]
        );
    }
}
