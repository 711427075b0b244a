//! Detection of under-determined fits and generation of extra correspondences, either from an
//! already reconstructed owner surface or by ghost points interpolated from nearby mesh points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::project_point;
use crate::reconstruct::MeshPair;
use crate::spline::{tensor_grid, ParametricPoint, Spline};
use crate::{Point, Vector};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sample the reconstructed owner surface.
    #[default]
    Surface,
    /// Ghost points from the local mesh frame.
    Mesh,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surface" => Ok(Strategy::Surface),
            "mesh" => Ok(Strategy::Mesh),
            other => Err(Error::Sampling(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingAugmentation {
    pub added_param_coords: Vec<ParametricPoint>,
    pub added_initial_points: Vec<Point>,
    pub added_target_points: Vec<Point>,
    pub strategy: Strategy,
}

impl SamplingAugmentation {
    pub fn len(&self) -> usize {
        self.added_param_coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.added_param_coords.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseSpan {
    pub direction: usize,
    /// Position among the non-empty spans of the direction.
    pub span: usize,
    pub count: usize,
    pub required: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationDiagnostic {
    pub needed: bool,
    /// Spans holding fewer points than their multiplicity-dependent minimum.
    pub sparse_spans: Vec<SparseSpan>,
    /// `(direction, distinct parameter values, control points)` where the former is smaller.
    pub short_directions: Vec<(usize, usize, usize)>,
}

/// Minimum number of points in a span bounded by knots of multiplicity `m1`, `m2`.
pub fn required_points(degree: usize, m1: usize, m2: usize) -> usize {
    1 + m1.max(m2).saturating_sub(degree)
}

/// Whether the given parametric coordinates leave the fit under-determined: some span holds
/// fewer than `1 + max(0, m1 - p, m2 - p)` points, or a direction has fewer distinct parameter
/// values than control points.
pub fn needs_augmentation(spline: &Spline, params: &[ParametricPoint]) -> AugmentationDiagnostic {
    let mut diag = AugmentationDiagnostic::default();
    for d in 0..spline.param_dim() {
        let kv = spline.knot_vector(d);
        let spans = kv.spans();
        let mut counts = vec![0usize; spans.len()];
        for u in params {
            counts[kv.span_ordinal(u[d])] += 1;
        }
        for (s, span) in spans.iter().enumerate() {
            let l = required_points(
                kv.degree(),
                kv.multiplicity(span.lo),
                kv.multiplicity(span.hi),
            );
            if counts[s] < l {
                diag.sparse_spans.push(SparseSpan {
                    direction: d,
                    span: s,
                    count: counts[s],
                    required: l,
                });
            }
        }
        let mut values: Vec<f64> = params.iter().map(|u| u[d]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        let n = kv.num_basis();
        if values.len() < n {
            diag.short_directions.push((d, values.len(), n));
        }
    }
    diag.needed = !diag.sparse_spans.is_empty() || !diag.short_directions.is_empty();
    diag
}

/// Sampling sites for augmentation: the Greville abscissae, topped up with evenly spaced
/// interior points in any span that the abscissae leave below its required count.
pub fn augmentation_sites(spline: &Spline) -> Result<Vec<ParametricPoint>> {
    let axes = spline
        .knot_vectors()
        .iter()
        .map(|kv| {
            let mut axis = kv.greville()?;
            for span in kv.spans() {
                let need = required_points(
                    kv.degree(),
                    kv.multiplicity(span.lo),
                    kv.multiplicity(span.hi),
                );
                let have = axis
                    .iter()
                    .filter(|&&u| kv.span_ordinal(u) == kv.span_ordinal(span.mid()))
                    .count();
                if have < need {
                    for k in 1..=need {
                        axis.push(span.lo + span.width() * k as f64 / (need + 1) as f64);
                    }
                }
            }
            axis.sort_by(f64::total_cmp);
            axis.dedup();
            Ok(axis)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tensor_grid(&axes))
}

/// Targets for `sites` on `curve` taken from the reconstructed owner surface: each site is
/// projected onto the initial owner and the deformed owner is evaluated at the foot point.
///
/// `owner` and `owner_deformed` must share their parameter domain (the reconstruction only
/// moves control points and refines). Sites farther than `tol` from the owner are rejected.
pub fn augment_from_surface(
    curve: &Spline,
    sites: &[ParametricPoint],
    owner: &Spline,
    owner_deformed: &Spline,
    tol: f64,
) -> Result<SamplingAugmentation> {
    let mut aug = SamplingAugmentation {
        added_param_coords: Vec::with_capacity(sites.len()),
        added_initial_points: Vec::with_capacity(sites.len()),
        added_target_points: Vec::with_capacity(sites.len()),
        strategy: Strategy::Surface,
    };
    for site in sites {
        let x = curve.evaluate(site)?;
        let foot = match project_point(owner, &x, None) {
            Ok(r) => r,
            Err(Error::ProjectionNotConverged { best, .. }) => *best,
            Err(e) => return Err(e),
        };
        if foot.distance > tol {
            return Err(Error::Association {
                entity: 0,
                reason: format!(
                    "curve point at {:?} lies {:.3e} from the owner surface (tolerance {:.3e})",
                    site, foot.distance, tol
                ),
            });
        }
        aug.added_param_coords.push(*site);
        aug.added_initial_points.push(x);
        aug.added_target_points
            .push(owner_deformed.evaluate(&foot.parametric)?);
    }
    Ok(aug)
}

/// Number of nearest mesh points tried when building a non-degenerate local frame.
const FRAME_CANDIDATES: usize = 5;

/// Ghost-point targets for `sites` on `curve`. For each site `x`, the nearest mesh points
/// `x1, x2, x3` define the frame `d1 = x2 - x1`, `d2 = x3 - x1`, `d3 = d1 × d2`; the offset
/// `x - x1` is expressed in that frame and re-applied to the deformed frame built the same way.
/// When the nearest three are collinear the fourth and fifth nearest are tried.
///
/// `candidates` restricts the mesh points considered (all points when `None`).
pub fn augment_from_mesh(
    curve: &Spline,
    sites: &[ParametricPoint],
    mesh: &MeshPair,
    candidates: Option<&[usize]>,
) -> Result<SamplingAugmentation> {
    let all: Vec<usize>;
    let pool = match candidates {
        Some(c) => c,
        None => {
            all = (0..mesh.len()).collect();
            &all
        }
    };
    if pool.len() < 3 {
        return Err(Error::Sampling(format!(
            "ghost points need at least 3 mesh points, got {}",
            pool.len()
        )));
    }
    let mut aug = SamplingAugmentation {
        added_param_coords: Vec::with_capacity(sites.len()),
        added_initial_points: Vec::with_capacity(sites.len()),
        added_target_points: Vec::with_capacity(sites.len()),
        strategy: Strategy::Mesh,
    };
    for site in sites {
        let x = curve.evaluate(site)?;
        let near = nearest(mesh.initial(), pool, &x, FRAME_CANDIDATES);
        let target = ghost_point(mesh, &near, &x)?;
        aug.added_param_coords.push(*site);
        aug.added_initial_points.push(x);
        aug.added_target_points.push(target);
    }
    Ok(aug)
}

fn nearest(points: &[Point], pool: &[usize], x: &Point, k: usize) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for &i in pool {
        let d = (points[i] - x).norm_squared();
        if best.len() < k || d < best[best.len() - 1].0 {
            let pos = best.partition_point(|&(bd, bi)| bd < d || (bd == d && bi < i));
            best.insert(pos, (d, i));
            best.truncate(k);
        }
    }
    best.into_iter().map(|(_, i)| i).collect()
}

fn frame(x1: &Point, x2: &Point, x3: &Point) -> (Vector, Vector, Vector) {
    let d1 = x2 - x1;
    let d2 = x3 - x1;
    (d1, d2, d1.cross(&d2))
}

/// Frame-coordinate transfer through the first non-degenerate frame among `near`.
fn ghost_point(mesh: &MeshPair, near: &[usize], x: &Point) -> Result<Point> {
    let (p, q) = (mesh.initial(), mesh.deformed());
    let i1 = near[0];
    for a in 1..near.len() {
        for b in a + 1..near.len() {
            let (i2, i3) = (near[a], near[b]);
            let (d1, d2, d3) = frame(&p[i1], &p[i2], &p[i3]);
            if d3.norm() < 1e-12 * d1.norm() * d2.norm() || d3.norm() == 0.0 {
                continue;
            }
            let a_mat = nalgebra::Matrix3::from_columns(&[d1, d2, d3]);
            let Some(inv) = a_mat.try_inverse() else {
                continue;
            };
            let coeff = inv * (x - p[i1]);
            let (e1, e2, e3) = frame(&q[i1], &q[i2], &q[i3]);
            let deformed = nalgebra::Matrix3::from_columns(&[e1, e2, e3]);
            return Ok(q[i1] + deformed * coeff);
        }
    }
    Err(Error::Sampling(format!(
        "nearest {} mesh points around ({:.6}, {:.6}, {:.6}) are collinear",
        near.len(),
        x.x,
        x.y,
        x.z
    )))
}
