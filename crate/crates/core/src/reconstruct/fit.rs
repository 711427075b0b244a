use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assign::{assign_points, assignment_errors, ErrorStats, PointAssignment};
use super::{Entity, EntityKind, GeometryModel, MeshPair};
use crate::error::{Error, Result};
use crate::fitting::{spline_fit_with, AugmentFn, FitProblem, FitReport, SplineFitOptions};
use crate::sampling::{
    augment_from_mesh, augment_from_surface, augmentation_sites, needs_augmentation, Strategy,
};
use crate::spline::{ParametricPoint, Spline};
use crate::Point;

#[derive(Clone, Debug)]
pub struct FittingOptions {
    /// Distance below which a mesh point is taken to lie on an entity.
    pub assignment_tolerance: f64,
    pub strategy: Strategy,
    pub fit: SplineFitOptions,
}

impl Default for FittingOptions {
    fn default() -> Self {
        FittingOptions {
            assignment_tolerance: 1e-4,
            strategy: Strategy::Surface,
            fit: SplineFitOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityFit {
    pub entity_id: usize,
    pub kind: EntityKind,
    pub mesh_points: usize,
    /// Whether augmentation points were used in the final solve.
    pub augmented: bool,
    pub errors: ErrorStats,
    pub report: Option<FitReport>,
    /// Set when the entity could not be refit; it is then passed through unchanged.
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct FittingOutcome {
    pub model: GeometryModel,
    pub assignments: Vec<PointAssignment>,
    pub entities: Vec<EntityFit>,
    pub errors: ErrorStats,
    pub warnings: Vec<String>,
}

/// Refit every entity against the deformed mesh points lying on it. Surfaces are fitted first
/// so that curves can take augmentation targets from their reconstructed owners. Failures are
/// recorded per entity and leave that entity unchanged.
pub fn reconstruct_by_fitting(
    model: &GeometryModel,
    mesh: &MeshPair,
    opts: &FittingOptions,
) -> Result<FittingOutcome> {
    model.validate()?;
    let assignments = assign_points(model, mesh, opts.assignment_tolerance)?;
    let by_id: HashMap<usize, &PointAssignment> =
        assignments.iter().map(|a| (a.entity_id, a)).collect();

    let surfaces: Vec<(&Entity, EntityFit, Spline)> = model
        .entities
        .par_iter()
        .filter(|e| e.kind == EntityKind::Surface)
        .map(|e| fit_entity(e, by_id[&e.id], mesh, opts, None))
        .collect();
    let mut done: HashMap<usize, (EntityFit, Spline)> = HashMap::new();
    for (e, fit, s) in surfaces {
        done.insert(e.id, (fit, s));
    }

    let owners: HashMap<usize, (&Spline, &Spline)> = model
        .surfaces()
        .filter_map(|e| {
            let (fit, s) = &done[&e.id];
            fit.failure.is_none().then_some((e.id, (&e.spline, s)))
        })
        .collect();
    let curves: Vec<(&Entity, EntityFit, Spline)> = model
        .entities
        .par_iter()
        .filter(|e| e.kind == EntityKind::Curve)
        .map(|e| {
            let ctx = CurveContext {
                owners: &owners,
                assignments: &by_id,
            };
            fit_entity(e, by_id[&e.id], mesh, opts, Some(ctx))
        })
        .collect();
    for (e, fit, s) in curves {
        done.insert(e.id, (fit, s));
    }

    let mut warnings = Vec::new();
    let mut fits = Vec::with_capacity(model.entities.len());
    let mut all_errs = Vec::new();
    let out = model.map_splines(|e| done[&e.id].1.clone())?;
    for e in &model.entities {
        let (fit, s) = &done[&e.id];
        if let Some(f) = &fit.failure {
            warnings.push(format!("entity {}: {f}", e.id));
        }
        if let Some(r) = &fit.report {
            warnings.extend(r.warnings.iter().map(|w| format!("entity {}: {w}", e.id)));
        }
        all_errs.extend(assignment_errors(s, by_id[&e.id], mesh));
        fits.push(fit.clone());
    }
    Ok(FittingOutcome {
        model: out,
        assignments,
        entities: fits,
        errors: ErrorStats::from_errors(&all_errs),
        warnings,
    })
}

struct CurveContext<'a> {
    owners: &'a HashMap<usize, (&'a Spline, &'a Spline)>,
    assignments: &'a HashMap<usize, &'a PointAssignment>,
}

fn fit_entity<'e>(
    e: &'e Entity,
    a: &PointAssignment,
    mesh: &MeshPair,
    opts: &FittingOptions,
    curve: Option<CurveContext>,
) -> (&'e Entity, EntityFit, Spline) {
    let mut fit = EntityFit {
        entity_id: e.id,
        kind: e.kind,
        mesh_points: a.len(),
        augmented: false,
        errors: ErrorStats::default(),
        report: None,
        failure: None,
    };
    if e.parametric_space {
        return (e, fit, e.spline.clone());
    }
    match run_fit(e, a, mesh, opts, curve.as_ref()) {
        Ok((s, report, augmented)) => {
            fit.augmented = augmented;
            fit.errors = ErrorStats::from_errors(&assignment_errors(&s, a, mesh));
            fit.report = Some(report);
            (e, fit, s)
        }
        Err(err) => {
            log::warn!("entity {}: {err}", e.id);
            fit.failure = Some(err.to_string());
            fit.errors = ErrorStats::from_errors(&assignment_errors(&e.spline, a, mesh));
            (e, fit, e.spline.clone())
        }
    }
}

fn run_fit(
    e: &Entity,
    a: &PointAssignment,
    mesh: &MeshPair,
    opts: &FittingOptions,
    curve: Option<&CurveContext>,
) -> Result<(Spline, FitReport, bool)> {
    let targets = a.targets(mesh);
    let Some(ctx) = curve else {
        if a.is_empty() {
            return Err(Error::Association {
                entity: e.id,
                reason: "no mesh points on the surface".into(),
            });
        }
        if needs_augmentation(&e.spline, &a.param_coords).needed {
            log::debug!("surface {}: data leaves some control points free", e.id);
        }
        let problem = FitProblem::new(e.spline.clone(), a.param_coords.clone(), targets)?;
        let (s, r) = spline_fit_with(&problem, &opts.fit, None)?;
        return Ok((s, r, false));
    };

    let owner = e
        .owner_ids
        .iter()
        .find_map(|id| ctx.owners.get(id).copied());
    let mut pool: Vec<usize> = a.mask.clone();
    for id in &e.owner_ids {
        if let Some(oa) = ctx.assignments.get(id) {
            pool.extend(&oa.mask);
        }
    }
    pool.sort_unstable();
    pool.dedup();
    let candidates = (pool.len() >= 3).then_some(pool);
    let initial = &e.spline;
    let base = &a.param_coords;
    let tol = opts.assignment_tolerance;
    let strategy = opts.strategy;
    let used = std::sync::atomic::AtomicBool::new(false);
    let augment = |s: &Spline| -> Result<(Vec<ParametricPoint>, Vec<Point>)> {
        if !needs_augmentation(s, base).needed {
            used.store(false, std::sync::atomic::Ordering::Relaxed);
            return Ok((Vec::new(), Vec::new()));
        }
        let sites = augmentation_sites(s)?;
        let from_mesh = || augment_from_mesh(initial, &sites, mesh, candidates.as_deref());
        let aug = match (strategy, owner) {
            (Strategy::Surface, Some((o0, o1))) => {
                augment_from_surface(initial, &sites, o0, o1, tol).or_else(|err| {
                    log::warn!(
                        "curve {}: surface sampling failed ({err}), using ghost points",
                        e.id
                    );
                    from_mesh()
                })?
            }
            _ => from_mesh()?,
        };
        used.store(true, std::sync::atomic::Ordering::Relaxed);
        Ok((aug.added_param_coords, aug.added_target_points))
    };
    let augment: &AugmentFn = &augment;
    // A curve without mesh points is fitted to augmentation targets alone.
    let problem = if a.is_empty() {
        FitProblem {
            spline: e.spline.clone(),
            param_coords: Vec::new(),
            targets: Vec::new(),
            fix_boundary: false,
        }
    } else {
        FitProblem::new(e.spline.clone(), a.param_coords.clone(), targets)?
    };
    let (s, r) = spline_fit_with(&problem, &opts.fit, Some(augment))?;
    Ok((s, r, used.load(std::sync::atomic::Ordering::Relaxed)))
}
