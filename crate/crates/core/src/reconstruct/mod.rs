//! The two reconstruction pipelines and the synthetic deformation generator.

mod assign;
mod compose;
mod deform;
mod fit;
mod mesh;
mod model;

pub use assign::{
    assign_points, assignment_errors, model_errors, points_on, ErrorStats, PointAssignment,
};
pub use compose::{
    compose_model, reconstruct_by_composition, CompositionOptions, CompositionOutcome,
    EntityComposition,
};
pub use deform::{
    auto_deformation_trivariate, build_deformation_trivariate, fit_trivariate, identity_trivariate,
    mesh_box, prescribed_deformation, BOX_MARGIN,
};
pub use fit::{reconstruct_by_fitting, EntityFit, FittingOptions, FittingOutcome};
pub use mesh::MeshPair;
pub use model::{Entity, EntityKind, GeometryModel, TopologyRecord};
