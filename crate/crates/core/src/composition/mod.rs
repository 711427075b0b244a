//! Exact functional composition `T ∘ S` of a curve or surface `S` into a polynomial trivariate
//! Bézier volume `T`.
//!
//! Every Bézier segment of `S` is mapped to the unit box of `T` and substituted into the
//! Bernstein form of `T`. With `s_k = a_k / w` and `1 - s_k = b_k / w` (`w` the weight
//! polynomial of the segment, one for non-rational input),
//!
//! ```text
//! T(S) = Σ P_ijl C(n1,i) a1^i b1^(n1-i) C(n2,j) a2^j b2^(n2-j) C(n3,l) a3^l b3^(n3-l) / w^(n1+n2+n3)
//! ```
//!
//! which is a (rational) polynomial of degree `m (n1 + n2 + n3)` per input direction, computed
//! exactly with Bernstein products. Segments are then reassembled and the knot multiplicities
//! lowered to the continuity the composition inherits from `S`.

mod bernstein;

use nalgebra::{Matrix3, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use bernstein::{binomials, mul, Bernstein};

use crate::error::{Error, Result};
use crate::linalg::pseudo_inverse;
use crate::spline::{insertion_matrix, refine_to_bezier, KnotVector, ParametricPoint, Spline};
use crate::Point;

/// Degree bookkeeping of a composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionPlan {
    pub input_degrees: Vec<usize>,
    pub trivariate_degrees: [usize; 3],
    pub output_degrees: Vec<usize>,
    pub output_knot_vectors: Vec<KnotVector>,
}

impl CompositionPlan {
    pub fn new(trivariate: &Spline, spline: &Spline) -> Result<Self> {
        check_trivariate(trivariate)?;
        let td = trivariate.degrees();
        let n: usize = td.iter().sum();
        let mut out_deg = Vec::new();
        let mut out_kv = Vec::new();
        for kv in spline.knot_vectors() {
            let m = kv.degree();
            let d = m * n;
            // A breakpoint of multiplicity r leaves S with continuity m - r, which T ∘ S keeps.
            let breaks: Vec<(f64, usize)> = kv
                .breakpoints()
                .into_iter()
                .map(|(u, r)| (u, (d + r).saturating_sub(m).clamp(1, d.max(1))))
                .collect();
            out_kv.push(KnotVector::from_breakpoints(d, &breaks)?);
            out_deg.push(d);
        }
        Ok(CompositionPlan {
            input_degrees: spline.degrees(),
            trivariate_degrees: [td[0], td[1], td[2]],
            output_degrees: out_deg,
            output_knot_vectors: out_kv,
        })
    }
}

fn check_trivariate(t: &Spline) -> Result<()> {
    if t.param_dim() != 3 {
        return Err(Error::Unsupported(format!(
            "deformation map must be trivariate, got {} parametric directions",
            t.param_dim()
        )));
    }
    if t.is_rational() {
        return Err(Error::Unsupported(
            "rational deformation maps are not supported".into(),
        ));
    }
    if let Some(d) = (0..3).find(|&d| !t.knot_vector(d).is_bezier()) {
        return Err(Error::Unsupported(format!(
            "deformation map has interior knots in direction {d}; only single-span volumes compose"
        )));
    }
    Ok(())
}

/// The axis-aligned box `T` is defined on.
pub fn parameter_box(t: &Spline) -> ([f64; 3], [f64; 3]) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for d in 0..3 {
        (lo[d], hi[d]) = t.domain(d);
    }
    (lo, hi)
}

/// First control point of `spline` outside the closed parameter box of `trivariate`.
pub fn containment_violation(trivariate: &Spline, spline: &Spline) -> Option<(usize, Point)> {
    let (lo, hi) = parameter_box(trivariate);
    spline
        .control_points()
        .iter()
        .enumerate()
        .find(|(_, p)| (0..3).any(|d| p[d] < lo[d] || p[d] > hi[d]))
        .map(|(i, p)| (i, *p))
}

/// Whether every control point of `spline` lies in the closed parameter box of `trivariate`.
/// By the convex-hull property the whole spline then does.
pub fn check_containment(trivariate: &Spline, spline: &Spline) -> bool {
    containment_violation(trivariate, spline).is_none()
}

/// `T ∘ S`: a spline over the parameter domain of `spline` with degrees `m_k (n1 + n2 + n3)`.
/// Rational input gives rational output (weights are the Bernstein coefficients of
/// `w^(n1+n2+n3)`).
pub fn compose(trivariate: &Spline, spline: &Spline) -> Result<Spline> {
    let plan = CompositionPlan::new(trivariate, spline)?;
    if let Some((index, p)) = containment_violation(trivariate, spline) {
        return Err(Error::Containment {
            index,
            x: p.x,
            y: p.y,
            z: p.z,
        });
    }
    let dims = spline.param_dim();
    let mut bez = spline.clone();
    for d in 0..dims {
        bez = refine_to_bezier(&bez, d)?;
    }
    let in_deg = bez.degrees();
    let out_deg = plan.output_degrees.clone();
    let spans: Vec<usize> = bez
        .knot_vectors()
        .iter()
        .map(|kv| kv.spans().len())
        .collect();
    let counts = bez.counts();
    let net = bez.homogeneous_net();
    let binom = binomials(2 * out_deg.iter().copied().max().unwrap_or(0) + 2);
    let ctx = Context::new(trivariate, &binom);

    let patches: Vec<Vec<usize>> = multi_range(&spans);
    let composed: Vec<Bernstein<Vector4<f64>>> = patches
        .par_iter()
        .map(|patch| {
            let local = multi_range(&in_deg.iter().map(|&m| m + 1).collect::<Vec<_>>());
            let coefs = local
                .iter()
                .map(|li| {
                    let gi: usize = (0..dims)
                        .rev()
                        .fold(0, |acc, d| acc * counts[d] + patch[d] * in_deg[d] + li[d]);
                    net[gi]
                })
                .collect();
            ctx.compose_patch(&Bernstein::new(in_deg.clone(), coefs), bez.is_rational())
        })
        .collect();

    // Reassemble the segments on a knot vector with full interior multiplicity.
    let full_kv: Vec<KnotVector> = bez
        .knot_vectors()
        .iter()
        .zip(&out_deg)
        .map(|(kv, &d)| {
            let breaks: Vec<(f64, usize)> = kv
                .breakpoints()
                .into_iter()
                .map(|(u, _)| (u, d.max(1)))
                .collect();
            KnotVector::from_breakpoints(d, &breaks)
        })
        .collect::<Result<_>>()?;
    let out_counts: Vec<usize> = full_kv.iter().map(|kv| kv.num_basis()).collect();
    let mut out_net = vec![Vector4::zeros(); out_counts.iter().product()];
    for (patch, poly) in patches.iter().zip(&composed) {
        for (li, c) in multi_range(&out_deg.iter().map(|&d| d + 1).collect::<Vec<_>>())
            .iter()
            .zip(&poly.coefs)
        {
            let gi: usize = (0..dims).rev().fold(0, |acc, d| {
                acc * out_counts[d] + patch[d] * out_deg[d] + li[d]
            });
            out_net[gi] = *c;
        }
    }
    let mut out = Spline::from_homogeneous(full_kv, &out_net, spline.is_rational())?;

    // Lower interior multiplicities to the inherited continuity (exact knot removal).
    for d in 0..dims {
        let target = &plan.output_knot_vectors[d];
        if target.knots() == out.knot_vector(d).knots() {
            continue;
        }
        let m = insertion_matrix(target, out.knot_vector(d))?;
        let pinv = pseudo_inverse(&m, 1e-14);
        out = out.map_lines(d, target.clone(), |line| {
            (0..pinv.nrows())
                .map(|i| {
                    line.iter()
                        .enumerate()
                        .fold(Vector4::zeros(), |acc, (j, h)| acc + h * pinv[(i, j)])
                })
                .collect()
        })?;
    }
    Ok(out)
}

/// All multi-indices below `extent`, first index fastest.
fn multi_range(extent: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = extent.iter().product();
    (0..total)
        .map(|mut flat| {
            extent
                .iter()
                .map(|&e| {
                    let i = flat % e;
                    flat /= e;
                    i
                })
                .collect()
        })
        .collect()
}

struct Context<'a> {
    degrees: [usize; 3],
    lo: [f64; 3],
    width: [f64; 3],
    control: &'a [Point],
    binom: &'a [Vec<f64>],
}

impl<'a> Context<'a> {
    fn new(t: &'a Spline, binom: &'a [Vec<f64>]) -> Self {
        let (lo, hi) = parameter_box(t);
        let d = t.degrees();
        Context {
            degrees: [d[0], d[1], d[2]],
            lo,
            width: [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]],
            control: t.control_points(),
            binom,
        }
    }

    fn index(&self, i: usize, j: usize, l: usize) -> usize {
        let [n1, n2, _] = self.degrees;
        i + (n1 + 1) * (j + (n2 + 1) * l)
    }

    /// Bernstein polynomials `C(n,i) a^i b^(n-i)` for `i = 0..=n` along one axis of `T`.
    fn axis_basis(&self, patch: &Bernstein<Vector4<f64>>, axis: usize) -> Vec<Bernstein<f64>> {
        let n = self.degrees[axis];
        let dims = patch.degrees.len();
        let a = Bernstein::new(
            patch.degrees.clone(),
            patch
                .coefs
                .iter()
                .map(|h| (h[axis] - self.lo[axis] * h.w) / self.width[axis])
                .collect(),
        );
        let b = Bernstein::new(
            patch.degrees.clone(),
            a.coefs
                .iter()
                .zip(&patch.coefs)
                .map(|(a, h)| h.w - a)
                .collect(),
        );
        let one = Bernstein::new(vec![0; dims], vec![1.0]);
        let mut pa = vec![one.clone()];
        let mut pb = vec![one];
        for k in 1..=n {
            pa.push(mul(&pa[k - 1], &a, self.binom));
            pb.push(mul(&pb[k - 1], &b, self.binom));
        }
        (0..=n)
            .map(|i| {
                let mut p = mul(&pa[i], &pb[n - i], self.binom);
                let c = self.binom[n][i];
                p.coefs.iter_mut().for_each(|v| *v *= c);
                p
            })
            .collect()
    }

    fn compose_patch(
        &self,
        patch: &Bernstein<Vector4<f64>>,
        rational: bool,
    ) -> Bernstein<Vector4<f64>> {
        let [n1, n2, n3] = self.degrees;
        let u = self.axis_basis(patch, 0);
        let v = self.axis_basis(patch, 1);
        let w = self.axis_basis(patch, 2);
        let dims = patch.degrees.len();
        let scaled = |k: usize| -> Vec<usize> { patch.degrees.iter().map(|m| m * k).collect() };

        let r: Vec<Bernstein<Vector3<f64>>> = (0..=n1)
            .into_par_iter()
            .map(|i| {
                let mut ri = Bernstein::<Vector3<f64>>::zero(scaled(n2 + n3));
                for (j, vj) in v.iter().enumerate() {
                    let mut q = Bernstein::<Vector3<f64>>::zero(scaled(n3));
                    for (l, wl) in w.iter().enumerate() {
                        q.scaled_add(wl, self.control[self.index(i, j, l)].coords);
                    }
                    ri.add_assign(&mul(vj, &q, self.binom));
                }
                ri
            })
            .collect();
        let numerator = u
            .par_iter()
            .zip(r.par_iter())
            .map(|(ui, ri)| mul(ui, ri, self.binom))
            .reduce_with(|mut a, b| {
                a.add_assign(&b);
                a
            })
            .expect("at least one basis function");

        let total = n1 + n2 + n3;
        let denominator = if rational {
            let wpoly = Bernstein::new(
                patch.degrees.clone(),
                patch.coefs.iter().map(|h| h.w).collect(),
            );
            let mut acc = Bernstein::new(vec![0; dims], vec![1.0]);
            for _ in 0..total {
                acc = mul(&acc, &wpoly, self.binom);
            }
            acc.coefs
        } else {
            vec![1.0; numerator.coefs.len()]
        };
        Bernstein::new(
            numerator.degrees.clone(),
            numerator
                .coefs
                .iter()
                .zip(denominator)
                .map(|(p, w)| Vector4::new(p.x, p.y, p.z, w))
                .collect(),
        )
    }
}

/// Parametric coordinates `ξ` with `T(ξ) = x`, by Newton's method on the 3×3 Jacobian.
///
/// Only needed when `T` is not the identity on its box; the default seed is `x` itself.
pub fn invert_map(
    trivariate: &Spline,
    x: &Point,
    seed: Option<ParametricPoint>,
) -> Result<ParametricPoint> {
    let mut u =
        trivariate.clamp_param(&seed.unwrap_or_else(|| ParametricPoint::new(x.coords.as_slice())));
    let scale = 1.0 + x.coords.norm();
    for _ in 0..50 {
        let (p, tangents) = trivariate.point_and_tangents(&u);
        let r = p - x;
        if r.norm() <= 1e-14 * scale {
            return Ok(u);
        }
        let j = Matrix3::from_columns(&[tangents[0], tangents[1], tangents[2]]);
        let Some(inv) = j.try_inverse() else {
            break;
        };
        let step = inv * r;
        let mut next = u;
        for d in 0..3 {
            next[d] -= step[d];
        }
        let next = trivariate.clamp_param(&next);
        if next.distance(&u) <= 1e-15 * (1.0 + u.distance(&ParametricPoint::volume(0.0, 0.0, 0.0)))
        {
            u = next;
            break;
        }
        u = next;
    }
    let r = (trivariate.eval_clamped(&u) - x).norm();
    if r <= 1e-9 * scale {
        Ok(u)
    } else {
        Err(Error::Fit(format!(
            "could not invert the deformation map at ({}, {}, {}): residual {r:.3e}",
            x.x, x.y, x.z
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Trivariate Bézier of the given degrees that is the identity on `[lo, hi]^3`.
    fn identity_volume(deg: [usize; 3], lo: f64, hi: f64) -> Spline {
        let kvs: Vec<KnotVector> = deg
            .iter()
            .map(|&n| KnotVector::bezier(n, lo, hi).unwrap())
            .collect();
        let axis = |n: usize, i: usize| lo + (hi - lo) * i as f64 / n as f64;
        let mut cps = Vec::new();
        for l in 0..=deg[2] {
            for j in 0..=deg[1] {
                for i in 0..=deg[0] {
                    cps.push(Point::new(
                        axis(deg[0], i),
                        axis(deg[1], j),
                        axis(deg[2], l),
                    ));
                }
            }
        }
        Spline::new(kvs, cps, None).unwrap()
    }

    fn sphere() -> Spline {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // Meridian: half circle in the xz-plane from the south to the north pole.
        let meridian = [
            (0.0, -1.0, 1.0),
            (1.0, -1.0, h),
            (1.0, 0.0, 1.0),
            (1.0, 1.0, h),
            (0.0, 1.0, 1.0),
        ];
        let circle = [
            (1.0, 0.0, 1.0),
            (1.0, 1.0, h),
            (0.0, 1.0, 1.0),
            (-1.0, 1.0, h),
            (-1.0, 0.0, 1.0),
            (-1.0, -1.0, h),
            (0.0, -1.0, 1.0),
            (1.0, -1.0, h),
            (1.0, 0.0, 1.0),
        ];
        let mut cps = Vec::new();
        let mut w = Vec::new();
        for &(r, z, wm) in &meridian {
            for &(cx, cy, wc) in &circle {
                cps.push(Point::new(r * cx, r * cy, z));
                w.push(wm * wc);
            }
        }
        let u = KnotVector::new(
            2,
            vec![0., 0., 0., 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1., 1., 1.],
        )
        .unwrap();
        let v = KnotVector::new(2, vec![0., 0., 0., 0.5, 0.5, 1., 1., 1.]).unwrap();
        Spline::surface(u, v, cps, Some(w)).unwrap()
    }

    fn max_deviation(t: &Spline, s: &Spline, c: &Spline, per: usize) -> f64 {
        s.sample_grid(per)
            .iter()
            .map(|u| {
                let direct = t
                    .evaluate(s.evaluate(u).unwrap().coords.as_slice())
                    .unwrap();
                (c.evaluate(u).unwrap() - direct).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn sphere_in_triquadratic_has_degree_twelve() {
        let s = sphere();
        for p in s.sample_grid(7) {
            assert!((s.evaluate(&p).unwrap().coords.norm() - 1.0).abs() < 1e-12);
        }
        let mut t = identity_volume([2, 2, 2], -2.0, 2.0);
        t = t.map_control_points(|p| {
            Point::new(p.x + 0.1 * p.y * p.z, p.y * 1.2, p.z - 0.05 * p.x * p.x)
        });
        let c = compose(&t, &s).unwrap();
        assert_eq!(c.degrees(), vec![12, 12]);
        assert!(max_deviation(&t, &s, &c, 15) < 1e-12);
        // Breakpoints are kept.
        for d in 0..2 {
            let a: Vec<f64> = s.knot_vector(d).breakpoints().iter().map(|b| b.0).collect();
            let b: Vec<f64> = c.knot_vector(d).breakpoints().iter().map(|b| b.0).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn identity_map_keeps_geometry() {
        let s = sphere();
        let t = identity_volume([1, 2, 1], -1.5, 1.5);
        let c = compose(&t, &s).unwrap();
        assert_eq!(c.degrees(), vec![8, 8]);
        for u in s.sample_grid(12) {
            assert!((c.evaluate(&u).unwrap() - s.evaluate(&u).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn affine_map_of_cubic_curve() {
        let kv = KnotVector::new(3, vec![0., 0., 0., 0., 0.3, 0.6, 1., 1., 1., 1.]).unwrap();
        let s = Spline::curve(
            kv,
            vec![
                Point::new(0.1, 0.2, 0.3),
                Point::new(0.5, 0.9, 0.1),
                Point::new(0.8, 0.4, 0.6),
                Point::new(0.3, 0.1, 0.9),
                Point::new(0.9, 0.8, 0.2),
                Point::new(0.6, 0.5, 0.5),
            ],
            None,
        )
        .unwrap();
        let a = Matrix3::new(1.2, 0.3, -0.1, 0.0, 0.9, 0.4, 0.2, -0.3, 1.1);
        let b = Vector3::new(0.5, -1.0, 2.0);
        let t = identity_volume([1, 1, 1], 0.0, 1.0)
            .map_control_points(|p| Point::from(a * p.coords + b));
        let c = compose(&t, &s).unwrap();
        assert_eq!(c.degrees(), vec![9]);
        // Continuity C2 of the cubic survives: interior multiplicity 9 - 2.
        assert_eq!(c.knot_vector(0).multiplicity(0.3), 7);
        for i in 0..200 {
            let u = i as f64 / 199.0;
            let expect = Point::from(a * s.evaluate(&[u]).unwrap().coords + b);
            assert!((c.evaluate(&[u]).unwrap() - expect).norm() < 1e-11);
        }
    }

    #[test]
    fn random_surfaces_compose_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..4 {
            let deg = [
                rng.gen_range(1..=4),
                rng.gen_range(1..=4),
                rng.gen_range(1..=4),
            ];
            let t = identity_volume(deg, 0.0, 1.0)
                .map_control_points(|p| p + Vector3::new(0.1, -0.05, 0.08) * (p.x * p.y - p.z));
            let (m1, m2) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let u = KnotVector::uniform(m1, m1 + 2, 0.0, 1.0).unwrap();
            let v = KnotVector::uniform(m2, m2 + 1, 0.0, 2.0).unwrap();
            let n = u.num_basis() * v.num_basis();
            let cps = (0..n)
                .map(|_| Point::new(rng.gen(), rng.gen(), rng.gen()))
                .collect();
            let s = Spline::surface(u, v, cps, None).unwrap();
            let c = compose(&t, &s).unwrap();
            let total: usize = deg.iter().sum();
            assert_eq!(c.degrees(), vec![m1 * total, m2 * total]);
            assert!(max_deviation(&t, &s, &c, 9) < 1e-11, "{deg:?} {m1} {m2}");
        }
    }

    #[test]
    fn containment() {
        let t = identity_volume([1, 1, 1], -2.0, 2.0);
        let s = sphere();
        assert!(check_containment(&t, &s));
        let on_face = s.map_control_points(|p| Point::new(p.x * 2.0, p.y, p.z));
        assert!(check_containment(&t, &on_face));
        let outside = s.map_control_points(|p| Point::new(p.x * 2.5, p.y, p.z));
        assert!(!check_containment(&t, &outside));
        assert!(matches!(
            compose(&t, &outside),
            Err(Error::Containment { .. })
        ));
    }

    #[test]
    fn newton_inverse() {
        let t = identity_volume([2, 2, 2], 0.0, 1.0)
            .map_control_points(|p| p + Vector3::new(0.05 * p.y, 0.02 * p.z * p.z, -0.03 * p.x));
        let target = ParametricPoint::volume(0.3, 0.7, 0.45);
        let x = t.evaluate(&target).unwrap();
        let u = invert_map(&t, &x, None).unwrap();
        assert!(u.distance(&target) < 1e-12);
    }
}
