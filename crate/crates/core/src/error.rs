use thiserror::Error;

use crate::projection::ProjectionResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("invalid spline: {0}")]
    InvalidSpline(String),

    #[error("parameter {value} outside domain [{lo}, {hi}] in direction {direction}")]
    Domain {
        direction: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("refinement error: {0}")]
    Refinement(String),

    #[error("projection did not converge after {iterations} iterations (distance {distance:e})")]
    ProjectionNotConverged {
        iterations: usize,
        distance: f64,
        best: Box<ProjectionResult>,
    },

    #[error(
        "rank-deficient fit: control points {unconstrained:?} are not constrained by the data"
    )]
    RankDeficient { unconstrained: Vec<usize> },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("no knot insertion needed: all pointwise errors are zero")]
    NoInsertionNeeded,

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("entity {entity} is not associated with a surface: {reason}")]
    Association { entity: usize, reason: String },

    #[error("control point {index} at ({x}, {y}, {z}) lies outside the deformation volume")]
    Containment {
        index: usize,
        x: f64,
        y: f64,
        z: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "degenerate bounding box along axis {axis}: inflate the mesh thickness along that axis"
    )]
    DegenerateBox { axis: usize },

    #[error("IGES parse error at line {line}: {message}")]
    IgesParse { line: usize, message: String },

    #[error("IGES write error: {0}")]
    IgesWrite(String),

    #[error("mesh format error at line {line}: {message}")]
    Mesh { line: usize, message: String },

    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
