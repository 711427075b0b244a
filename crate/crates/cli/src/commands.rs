use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use nalgebra::Matrix3;
use serde::Serialize;

use cadrecon::fitting::SplineFitOptions;
use cadrecon::io::{self, IgesDocument, IgesWriteOptions};
use cadrecon::lowdegree::{low_order_approximation, LowDegreeOptions, ReductionReport};
use cadrecon::reconstruct::{
    assign_points, model_errors, reconstruct_by_composition, reconstruct_by_fitting,
    CompositionOptions, EntityComposition, EntityFit, EntityKind, ErrorStats, FittingOptions,
    GeometryModel, MeshPair,
};
use cadrecon::synthetic::{grid_points, plate, Deformation, PlateParams};
use cadrecon::Vector;

use crate::{
    Case, ComposeArgs, DeformationArg, FitArgs, GenerateArgs, MeshArgs, ReduceArgs, ReportArgs,
};

/// A failed command with its exit status: 2 for usage and I/O problems, 1 when the pipeline
/// itself failed.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type Outcome = Result<Vec<String>, Failure>;

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn pipeline(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let bytes = read(path)?;
    String::from_utf8(bytes).map_err(|_| usage(anyhow!("{} is not valid UTF-8", path.display())))
}

fn load_iges(path: &Path) -> Result<(GeometryModel, IgesDocument), Failure> {
    io::read_iges(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(usage)
}

fn load_mesh(
    pair: Option<&Path>,
    initial: Option<&Path>,
    deformed: Option<&Path>,
) -> Result<MeshPair, Failure> {
    let (text, second, name) = match (pair, initial, deformed) {
        (Some(p), None, None) => (read_text(p)?, None, p),
        (None, Some(a), Some(b)) => (read_text(a)?, Some(read_text(b)?), a),
        _ => {
            return Err(usage(anyhow!(
                "give either --mesh-pair or both --mesh-initial and --mesh-deformed"
            )))
        }
    };
    io::read_mesh_pair(&text, second.as_deref())
        .with_context(|| format!("reading mesh {}", name.display()))
        .map_err(usage)
}

fn mesh_from(args: &MeshArgs) -> Result<MeshPair, Failure> {
    load_mesh(
        args.mesh_pair.as_deref(),
        args.mesh_initial.as_deref(),
        args.mesh_deformed.as_deref(),
    )
}

/// Outputs are rendered in memory first and written only once the whole command succeeded.
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn json(&mut self, path: PathBuf, value: &impl Serialize) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(pipeline)?;
        bytes.push(b'\n');
        self.add(path, bytes);
        Ok(())
    }

    fn commit(self) -> Result<(), Failure> {
        for (path, bytes) in self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .map_err(usage)?;
            }
            io::write_atomic(&path, &bytes)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(usage)?;
        }
        Ok(())
    }
}

fn output_name(input: &Path) -> String {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    format!("{stem}.igs")
}

fn report_path(out: &Path, report: &Option<PathBuf>) -> PathBuf {
    report.clone().unwrap_or_else(|| out.join("report.json"))
}

fn check_positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(usage(anyhow!(
            "--{name} must be a positive number, got {v}"
        )))
    }
}

fn write_model(
    doc: &IgesDocument,
    model: &GeometryModel,
    warnings: &mut Vec<String>,
) -> Result<Vec<u8>, Failure> {
    let (bytes, w) =
        io::write_iges_with(doc, model, &IgesWriteOptions::default()).map_err(pipeline)?;
    warnings.extend(w);
    Ok(bytes)
}

#[derive(Serialize)]
struct FitRunReport<'a> {
    command: &'static str,
    input: String,
    mesh_points: usize,
    strategy: String,
    epsilon: Option<f64>,
    errors: ErrorStats,
    entities: &'a [EntityFit],
    warnings: &'a [String],
}

pub fn fit(args: FitArgs) -> Outcome {
    if let Some(e) = args.epsilon {
        check_positive("epsilon", e)?;
    }
    if args.max_degree < 1 {
        return Err(usage(anyhow!("--max-degree must be at least 1")));
    }
    let mesh = mesh_from(&args.mesh)?;
    let (mut model, doc) = load_iges(&args.iges)?;
    let tol = FittingOptions::default().assignment_tolerance;
    for id in model.infer_owners(tol) {
        log::info!("curve {id}: no boundary links, owners inferred geometrically");
    }
    let opts = FittingOptions {
        strategy: args.strategy.into(),
        fit: SplineFitOptions {
            epsilon: args.epsilon,
            max_degree: args.max_degree,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcome = reconstruct_by_fitting(&model, &mesh, &opts).map_err(pipeline)?;
    if !outcome.entities.is_empty() && outcome.entities.iter().all(|e| e.failure.is_some()) {
        return Err(pipeline(anyhow!("no entity could be refit")));
    }
    let mut warnings = outcome.warnings.clone();
    let mut out = Outputs::new();
    out.add(
        args.output.out.join(output_name(&args.iges)),
        write_model(&doc, &outcome.model, &mut warnings)?,
    );
    out.json(
        report_path(&args.output.out, &args.output.report),
        &FitRunReport {
            command: "fit",
            input: args.iges.display().to_string(),
            mesh_points: mesh.len(),
            strategy: format!("{:?}", opts.strategy).to_lowercase(),
            epsilon: args.epsilon,
            errors: outcome.errors,
            entities: &outcome.entities,
            warnings: &warnings,
        },
    )?;
    out.commit()?;
    Ok(warnings)
}

#[derive(Serialize)]
struct ComposeRunReport<'a> {
    command: &'static str,
    input: String,
    mesh_points: usize,
    degrees: [usize; 3],
    /// Largest pointwise misfit of the deformation volume on the mesh.
    volume_max_error: f64,
    reduce_to: Option<usize>,
    /// Errors of the composed model before any reduction.
    composed_errors: ErrorStats,
    errors: ErrorStats,
    entities: &'a [EntityComposition],
    warnings: &'a [String],
}

fn low_degree_options(
    target: usize,
    epsilon: f64,
    delta: f64,
) -> Result<LowDegreeOptions, Failure> {
    if target < 1 {
        return Err(usage(anyhow!("--reduce-to must be at least 1")));
    }
    check_positive("epsilon", epsilon)?;
    if !(delta >= 1.0) {
        return Err(usage(anyhow!("--delta must be at least 1, got {delta}")));
    }
    let mut o = LowDegreeOptions::new(target, epsilon);
    o.delta = delta;
    Ok(o)
}

pub fn compose(args: ComposeArgs) -> Outcome {
    let degrees: [usize; 3] = args
        .degrees
        .as_slice()
        .try_into()
        .map_err(|_| usage(anyhow!("--degrees takes three values")))?;
    if degrees.contains(&0) {
        return Err(usage(anyhow!("--degrees must all be at least 1")));
    }
    let mut opts = CompositionOptions::new(degrees);
    if let Some(p) = args.reduction.reduce_to {
        opts.reduce = Some(low_degree_options(
            p,
            args.reduction.epsilon,
            args.reduction.delta,
        )?);
    }
    let mesh = mesh_from(&args.mesh)?;
    let (model, doc) = load_iges(&args.iges)?;
    let outcome = reconstruct_by_composition(&model, &mesh, &opts).map_err(pipeline)?;
    if !outcome.entities.is_empty() && outcome.entities.iter().all(|e| e.failure.is_some()) {
        return Err(pipeline(anyhow!("no entity could be composed")));
    }
    let mut warnings = outcome.warnings.clone();
    let mut out = Outputs::new();
    out.add(
        args.output.out.join(output_name(&args.iges)),
        write_model(&doc, &outcome.model, &mut warnings)?,
    );
    out.json(
        report_path(&args.output.out, &args.output.report),
        &ComposeRunReport {
            command: "compose",
            input: args.iges.display().to_string(),
            mesh_points: mesh.len(),
            degrees,
            volume_max_error: outcome.trivariate_report.final_max_error,
            reduce_to: args.reduction.reduce_to,
            composed_errors: outcome.composed_errors,
            errors: outcome.errors,
            entities: &outcome.entities,
            warnings: &warnings,
        },
    )?;
    out.commit()?;
    Ok(warnings)
}

#[derive(Serialize)]
struct EntityReduction {
    entity_id: usize,
    input_degrees: Vec<usize>,
    final_degrees: Vec<usize>,
    reduction: Option<ReductionReport>,
    failure: Option<String>,
}

#[derive(Serialize)]
struct ReduceRunReport<'a> {
    command: &'static str,
    input: String,
    reduce_to: usize,
    /// Largest dense-grid deviation over all entities.
    max_deviation: f64,
    entities: &'a [EntityReduction],
    warnings: &'a [String],
}

pub fn reduce(args: ReduceArgs) -> Outcome {
    let opts = low_degree_options(args.reduce_to, args.epsilon, args.delta)?;
    let (model, doc) = load_iges(&args.iges)?;
    use rayon::prelude::*;
    let results: Vec<_> = model
        .entities
        .par_iter()
        .map(|e| {
            if e.parametric_space {
                Ok((e.spline.clone(), ReductionReport::default()))
            } else {
                low_order_approximation(&e.spline, &opts)
            }
        })
        .collect();
    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    let mut splines = Vec::new();
    for (e, r) in model.entities.iter().zip(results) {
        let mut rep = EntityReduction {
            entity_id: e.id,
            input_degrees: e.spline.degrees(),
            final_degrees: e.spline.degrees(),
            reduction: None,
            failure: None,
        };
        match r {
            Ok((s, rr)) => {
                rep.final_degrees = s.degrees();
                warnings.extend(rr.warnings.iter().map(|w| format!("entity {}: {w}", e.id)));
                rep.reduction = Some(rr);
                splines.push(s);
            }
            Err(err) => {
                warnings.push(format!("entity {}: reduction failed: {err}", e.id));
                rep.failure = Some(err.to_string());
                splines.push(e.spline.clone());
            }
        }
        reports.push(rep);
    }
    if reports.iter().all(|r| r.failure.is_some()) {
        return Err(pipeline(anyhow!("no entity could be reduced")));
    }
    let mut it = splines.into_iter();
    let reduced = model
        .map_splines(|_| it.next().expect("one spline per entity"))
        .map_err(pipeline)?;
    let max_deviation = reports
        .iter()
        .filter_map(|r| r.reduction.as_ref())
        .map(|r| r.max_deviation)
        .fold(0.0, f64::max);
    let mut out = Outputs::new();
    out.add(
        args.output.out.join(output_name(&args.iges)),
        write_model(&doc, &reduced, &mut warnings)?,
    );
    out.json(
        report_path(&args.output.out, &args.output.report),
        &ReduceRunReport {
            command: "reduce",
            input: args.iges.display().to_string(),
            reduce_to: args.reduce_to,
            max_deviation,
            entities: &reports,
            warnings: &warnings,
        },
    )?;
    out.commit()?;
    Ok(warnings)
}

#[derive(Serialize)]
struct GenerateReport {
    case: String,
    deformation: Deformation,
    mesh_points: usize,
    entities: usize,
    max_displacement: f64,
}

pub fn generate(args: GenerateArgs) -> Outcome {
    let deformation = match args.deformation {
        DeformationArg::Identity => Deformation::Identity,
        DeformationArg::Prescribed => {
            if !args.c.is_finite() {
                return Err(usage(anyhow!("--c must be finite")));
            }
            Deformation::Prescribed { c: args.c }
        }
        DeformationArg::Bending => {
            if !args.deflection.is_finite() {
                return Err(usage(anyhow!("--deflection must be finite")));
            }
            Deformation::Bending {
                deflection: args.deflection,
            }
        }
        DeformationArg::Affine => {
            let v = args.affine.as_deref().unwrap_or_default();
            if v.len() != 12 || !v.iter().all(|x| x.is_finite()) {
                return Err(usage(anyhow!(
                    "--deformation affine needs --affine with twelve finite values"
                )));
            }
            Deformation::Affine {
                matrix: Matrix3::from_row_slice(&v[..9]),
                translation: Vector::new(v[9], v[10], v[11]),
            }
        }
    };
    let size: [f64; 3] = args
        .size
        .as_slice()
        .try_into()
        .map_err(|_| usage(anyhow!("--size takes three values")))?;
    let mut out = Outputs::new();
    let (points, entities, case) = match args.case {
        Case::Plate => {
            let mut params = PlateParams {
                length: size[0],
                width: size[1],
                thickness: size[2],
                hole_diameter: args.hole_diameter,
                radial_samples: args.radial_samples,
                ..Default::default()
            };
            match args.samples.as_deref() {
                None => {}
                Some([n]) => params.samples_per_piece = *n,
                Some(_) => return Err(usage(anyhow!("--samples takes one value for the plate"))),
            }
            let case = plate(&params).map_err(|e| usage(e.into()))?;
            let doc = IgesDocument::for_model(&case.model).map_err(pipeline)?;
            out.add(
                args.out.join("plate.igs"),
                io::write_iges(&doc, &case.model).map_err(pipeline)?,
            );
            (case.mesh, case.model.entities.len(), "plate")
        }
        Case::Grid => {
            let n: [usize; 3] = match args.samples.as_deref() {
                None => [10, 10, 3],
                Some(s) => s
                    .try_into()
                    .map_err(|_| usage(anyhow!("--samples takes three values for the grid")))?,
            };
            (
                grid_points(n, size).map_err(|e| usage(e.into()))?,
                0,
                "grid",
            )
        }
    };
    let mesh = MeshPair::new(points.clone(), deformation.apply(&points)).map_err(pipeline)?;
    out.add(
        args.out.join(format!("{case}.mesh")),
        io::write_mesh_pair(&mesh, "mm").into_bytes(),
    );
    out.json(
        args.out.join(format!("{case}.json")),
        &GenerateReport {
            case: case.into(),
            deformation,
            mesh_points: mesh.len(),
            entities,
            max_displacement: mesh.max_displacement(),
        },
    )?;
    out.commit()?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct EntitySummary {
    id: usize,
    kind: EntityKind,
    degrees: Vec<usize>,
    control_points: Vec<usize>,
    rational: bool,
    owners: Vec<usize>,
    parametric_space: bool,
    errors: Option<ErrorStats>,
}

#[derive(Serialize)]
struct ModelReport {
    input: String,
    entities: Vec<EntitySummary>,
    topology_records: usize,
    max_degree: usize,
    errors: Option<ErrorStats>,
}

pub fn report(args: ReportArgs) -> Outcome {
    let has_mesh = args.mesh_pair.is_some() || args.mesh_initial.is_some();
    if args.reference.is_some() != has_mesh {
        return Err(usage(anyhow!(
            "--reference and a mesh (--mesh-pair or --mesh-initial/--mesh-deformed) go together"
        )));
    }
    let (model, _) = load_iges(&args.iges)?;
    let mut per_entity = vec![None; model.entities.len()];
    let mut total = None;
    if let Some(reference) = &args.reference {
        let mesh = load_mesh(
            args.mesh_pair.as_deref(),
            args.mesh_initial.as_deref(),
            args.mesh_deformed.as_deref(),
        )?;
        let (original, _) = load_iges(reference)?;
        let ids: Vec<usize> = original.entities.iter().map(|e| e.id).collect();
        if ids != model.entities.iter().map(|e| e.id).collect::<Vec<_>>() {
            return Err(usage(anyhow!(
                "model and reference have different entities"
            )));
        }
        let tol = FittingOptions::default().assignment_tolerance;
        let assignments = assign_points(&original, &mesh, tol).map_err(pipeline)?;
        for (k, (e, a)) in model.entities.iter().zip(&assignments).enumerate() {
            let errs = cadrecon::reconstruct::assignment_errors(&e.spline, a, &mesh);
            per_entity[k] = Some(ErrorStats::from_errors(&errs));
        }
        total = Some(model_errors(&model, &assignments, &mesh));
    }
    let entities: Vec<EntitySummary> = model
        .entities
        .iter()
        .zip(per_entity)
        .map(|(e, errors)| EntitySummary {
            id: e.id,
            kind: e.kind,
            degrees: e.spline.degrees(),
            control_points: e.spline.counts(),
            rational: e.spline.is_rational(),
            owners: e.owner_ids.clone(),
            parametric_space: e.parametric_space,
            errors,
        })
        .collect();
    let rep = ModelReport {
        input: args.iges.display().to_string(),
        max_degree: model
            .entities
            .iter()
            .map(|e| e.spline.max_degree())
            .max()
            .unwrap_or(0),
        topology_records: model.topology.len(),
        entities,
        errors: total,
    };
    match args.report {
        Some(path) => {
            let mut out = Outputs::new();
            out.json(path, &rep)?;
            out.commit()?;
        }
        None => {
            let text = serde_json::to_string_pretty(&rep).map_err(pipeline)?;
            println!("{text}");
        }
    }
    Ok(Vec::new())
}
