//! Tensor-product B-spline/NURBS kernel: evaluation, derivatives and the geometry-preserving
//! refinement operators (knot insertion, degree elevation) plus degree reduction.

mod knots;
mod param;
mod reduce;
mod refine;
#[allow(clippy::module_inception)]
mod spline;

pub use knots::{KnotSpan, KnotVector};
pub use param::ParametricPoint;
pub use reduce::{reduce_degree, ReductionError};
pub(crate) use refine::insertion_matrix;
pub use refine::{elevate_degree, elevate_degree_by, extract_range, insert_knot, refine_to_bezier};
pub use spline::{tensor_grid, Spline};

/// Library-level geometric tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Maximum evaluation change allowed for geometry-preserving operators (model units).
    pub geometric_identity: f64,
    /// Distance below which two correspondence points are merged.
    pub merge_distance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            geometric_identity: 1e-12,
            merge_distance: 1e-7,
        }
    }
}
