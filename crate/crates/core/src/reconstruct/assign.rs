use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeometryModel, MeshPair};
use crate::error::{Error, Result};
use crate::projection::{refine, ProjectionOptions, Tessellation};
use crate::spline::{ParametricPoint, Spline};
use crate::Point;

/// Mesh points lying on one entity, with their foot-point parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointAssignment {
    pub entity_id: usize,
    pub mask: Vec<usize>,
    pub param_coords: Vec<ParametricPoint>,
}

impl PointAssignment {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Deformed mesh points of the mask, in mask order.
    pub fn targets(&self, mesh: &MeshPair) -> Vec<Point> {
        self.mask.iter().map(|&i| mesh.deformed()[i]).collect()
    }
}

/// For every entity, the mesh points within `epsilon` of it (a point may belong to several
/// entities). Parametric-space curves get empty assignments. Points near no entity are
/// logged.
pub fn assign_points(
    model: &GeometryModel,
    mesh: &MeshPair,
    epsilon: f64,
) -> Result<Vec<PointAssignment>> {
    if !(epsilon > 0.0) {
        return Err(Error::Association {
            entity: 0,
            reason: format!("assignment tolerance must be positive, got {epsilon}"),
        });
    }
    let out: Vec<PointAssignment> = model
        .entities
        .par_iter()
        .map(|e| {
            if e.parametric_space {
                return PointAssignment {
                    entity_id: e.id,
                    ..Default::default()
                };
            }
            let (mask, param_coords) = points_on(&e.spline, mesh.initial(), epsilon);
            PointAssignment {
                entity_id: e.id,
                mask,
                param_coords,
            }
        })
        .collect();

    let mut hit = vec![false; mesh.len()];
    for a in &out {
        for &i in &a.mask {
            hit[i] = true;
        }
    }
    let orphans = hit.iter().filter(|h| !**h).count();
    if orphans > 0 {
        log::warn!("{orphans} mesh points lie farther than {epsilon:e} from every entity");
    }
    for (a, e) in out.iter().zip(&model.entities) {
        if a.is_empty() && !e.parametric_space {
            log::warn!("entity {}: no mesh points within {epsilon:e}", a.entity_id);
        }
    }
    Ok(out)
}

/// Indices of `points` within `tol` of `spline`, with foot-point parameters.
pub fn points_on(
    spline: &Spline,
    points: &[Point],
    tol: f64,
) -> (Vec<usize>, Vec<ParametricPoint>) {
    let (lo, hi) = spline.control_box();
    let inside = |x: &Point| (0..3).all(|k| x[k] >= lo[k] - tol && x[k] <= hi[k] + tol);
    let candidates: Vec<usize> = (0..points.len()).filter(|&i| inside(&points[i])).collect();
    if candidates.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let tess = Tessellation::new(spline);
    let opts = ProjectionOptions::default();
    let found: Vec<Option<ParametricPoint>> = candidates
        .par_iter()
        .map(|&i| {
            let x = &points[i];
            let r = match refine(spline, x, tess.nearest(x), &opts) {
                Ok(r) => r,
                Err(Error::ProjectionNotConverged { best, .. }) => *best,
                Err(_) => return None,
            };
            (r.distance <= tol).then_some(r.parametric)
        })
        .collect();
    candidates
        .into_iter()
        .zip(found)
        .filter_map(|(i, p)| p.map(|p| (i, p)))
        .unzip()
}

/// Pointwise distances `|S'(ξ_i) − x'_i|` of an assignment against a (deformed) spline.
pub fn assignment_errors(spline: &Spline, a: &PointAssignment, mesh: &MeshPair) -> Vec<f64> {
    a.mask
        .iter()
        .zip(&a.param_coords)
        .map(|(&i, u)| (spline.eval_clamped(u) - mesh.deformed()[i]).norm())
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn from_errors(errs: &[f64]) -> Self {
        if errs.is_empty() {
            return ErrorStats::default();
        }
        ErrorStats {
            max: errs.iter().cloned().fold(0.0, f64::max),
            mean: errs.iter().sum::<f64>() / errs.len() as f64,
            count: errs.len(),
        }
    }
}

/// Mean and max of the pointwise errors over all (entity, mesh point) pairs, with `deformed`
/// holding the reconstructed entities (same ids as used by the assignments).
pub fn model_errors(
    deformed: &GeometryModel,
    assignments: &[PointAssignment],
    mesh: &MeshPair,
) -> ErrorStats {
    let index = deformed.index_of();
    let errs: Vec<f64> = assignments
        .iter()
        .filter_map(|a| index.get(&a.entity_id).map(|&k| (a, k)))
        .flat_map(|(a, k)| assignment_errors(&deformed.entities[k].spline, a, mesh))
        .collect();
    ErrorStats::from_errors(&errs)
}
