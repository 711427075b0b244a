//! Reconstruction of deformed spline CAD models from pre/post-analysis mesh correspondences.
//!
//! Two pipelines are provided:
//!
//! - [`reconstruct::reconstruct_by_fitting`] refits every spline entity of the model against
//!   the mesh points lying on it, refining degree and knots as needed.
//! - [`reconstruct::reconstruct_by_composition`] fits one trivariate Bézier deformation volume
//!   to the whole mesh and applies it to every entity by exact functional composition,
//!   optionally followed by [`lowdegree::low_order_approximation`] to bring the degrees back
//!   to what CAD systems accept.
//!
//! Models are read from and written to IGES (rational B-spline entities 126/128, everything
//! else carried through verbatim) by the [`io`] module.

pub mod composition;
pub mod error;
pub mod fitting;
pub mod io;
pub mod linalg;
pub mod lowdegree;
pub mod projection;
pub mod reconstruct;
pub mod sampling;
pub mod spline;
pub mod synthetic;

pub use error::{Error, Result};
pub use spline::{KnotVector, ParametricPoint, Spline};

pub type Point = nalgebra::Point3<f64>;
pub type Vector = nalgebra::Vector3<f64>;
