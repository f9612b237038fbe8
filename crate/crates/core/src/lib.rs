//! Single-facility location across a hyperplane that separates two normed media.

#![allow(clippy::too_many_arguments, clippy::type_complexity)]

pub mod convex;
pub mod error;
pub mod fmt;
pub mod geometry;
pub mod instances;
pub mod linalg;
pub mod locate;
pub mod newton;
pub mod norms;
mod paths;
pub mod refraction;
pub mod socp_export;

pub use convex::ConvexSet;
pub use error::{Error, Result};
pub use geometry::{DemandPoint, Frame, Hyperplane, Side};
pub use locate::{LocateResult, LocationInstance, SolveOptions};
pub use norms::{NormKind, NormSpec};
pub use refraction::{PathQuery, PathResult, Reduction, RetmOutcome};
