use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assign::{assign_points, model_errors, ErrorStats, PointAssignment};
use super::deform::build_deformation_trivariate;
use super::{GeometryModel, MeshPair};
use crate::composition::compose;
use crate::error::Result;
use crate::fitting::FitReport;
use crate::lowdegree::{low_order_approximation, LowDegreeOptions, ReductionReport};
use crate::spline::Spline;

#[derive(Clone, Debug)]
pub struct CompositionOptions {
    pub degrees: [usize; 3],
    /// Degree reduction applied to every composed entity.
    pub reduce: Option<LowDegreeOptions>,
    /// Tolerance used to find the mesh points on each entity for error reporting.
    pub assignment_tolerance: f64,
}

impl CompositionOptions {
    pub fn new(degrees: [usize; 3]) -> Self {
        CompositionOptions {
            degrees,
            reduce: None,
            assignment_tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityComposition {
    pub entity_id: usize,
    pub input_degrees: Vec<usize>,
    pub composed_degrees: Vec<usize>,
    pub final_degrees: Vec<usize>,
    pub reduction: Option<ReductionReport>,
    /// Set when the entity could not be composed; it is then passed through unchanged.
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CompositionOutcome {
    pub trivariate: Spline,
    pub trivariate_report: FitReport,
    /// Entities composed with the deformation volume, before any reduction.
    pub composed: GeometryModel,
    /// Final model (equal to `composed` without reduction).
    pub model: GeometryModel,
    pub entities: Vec<EntityComposition>,
    pub assignments: Vec<PointAssignment>,
    pub composed_errors: ErrorStats,
    pub errors: ErrorStats,
    pub warnings: Vec<String>,
}

/// Fit one deformation volume of the given degrees to the mesh pair and apply it to every
/// entity by composition, optionally reducing the degrees afterwards.
pub fn reconstruct_by_composition(
    model: &GeometryModel,
    mesh: &MeshPair,
    opts: &CompositionOptions,
) -> Result<CompositionOutcome> {
    model.validate()?;
    let (t, t_report) = build_deformation_trivariate(mesh, opts.degrees)?;
    let assignments = assign_points(model, mesh, opts.assignment_tolerance)?;
    let (composed, mut entities) = compose_model(model, &t)?;
    let composed_errors = model_errors(&composed, &assignments, mesh);

    let mut warnings: Vec<String> = t_report
        .warnings
        .iter()
        .map(|w| format!("deformation volume: {w}"))
        .collect();
    let final_model = match &opts.reduce {
        None => composed.clone(),
        Some(lo) => {
            let reduced: Vec<Result<(Spline, ReductionReport)>> = composed
                .entities
                .par_iter()
                .zip(&entities)
                .map(|(e, ec)| {
                    if ec.failure.is_some() || e.parametric_space {
                        Ok((e.spline.clone(), ReductionReport::default()))
                    } else {
                        low_order_approximation(&e.spline, lo)
                    }
                })
                .collect();
            let mut splines = Vec::with_capacity(reduced.len());
            for ((r, ec), e) in reduced
                .into_iter()
                .zip(entities.iter_mut())
                .zip(&composed.entities)
            {
                match r {
                    Ok((s, rep)) => {
                        ec.final_degrees = s.degrees();
                        warnings.extend(
                            rep.warnings
                                .iter()
                                .map(|w| format!("entity {}: {w}", ec.entity_id)),
                        );
                        ec.reduction = Some(rep);
                        splines.push(s);
                    }
                    Err(err) => {
                        warnings.push(format!("entity {}: reduction failed: {err}", ec.entity_id));
                        splines.push(e.spline.clone());
                    }
                }
            }
            let mut it = splines.into_iter();
            composed.map_splines(|_| it.next().expect("one spline per entity"))?
        }
    };
    for ec in &entities {
        if let Some(f) = &ec.failure {
            warnings.push(format!("entity {}: {f}", ec.entity_id));
        }
    }
    let errors = model_errors(&final_model, &assignments, mesh);
    Ok(CompositionOutcome {
        trivariate: t,
        trivariate_report: t_report,
        composed,
        model: final_model,
        entities,
        assignments,
        composed_errors,
        errors,
        warnings,
    })
}

/// Replace every model-space entity by `t ∘ entity`. Entities outside the volume's box are
/// reported and passed through unchanged.
pub fn compose_model(
    model: &GeometryModel,
    t: &Spline,
) -> Result<(GeometryModel, Vec<EntityComposition>)> {
    let results: Vec<(Spline, EntityComposition)> = model
        .entities
        .par_iter()
        .map(|e| {
            let mut ec = EntityComposition {
                entity_id: e.id,
                input_degrees: e.spline.degrees(),
                composed_degrees: e.spline.degrees(),
                final_degrees: e.spline.degrees(),
                reduction: None,
                failure: None,
            };
            if e.parametric_space {
                return (e.spline.clone(), ec);
            }
            match compose(t, &e.spline) {
                Ok(s) => {
                    ec.composed_degrees = s.degrees();
                    ec.final_degrees = s.degrees();
                    (s, ec)
                }
                Err(err) => {
                    log::warn!("entity {}: {err}", e.id);
                    ec.failure = Some(err.to_string());
                    (e.spline.clone(), ec)
                }
            }
        })
        .collect();
    let (splines, reports): (Vec<Spline>, Vec<EntityComposition>) = results.into_iter().unzip();
    let mut it = splines.into_iter();
    let out = model.map_splines(|_| it.next().expect("one spline per entity"))?;
    Ok((out, reports))
}
