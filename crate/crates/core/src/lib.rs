//! Geodesics, cut loci, exponential-map singularities and small-time heat
//! asymptotics for chart-level (sub)-Riemannian structures.

// `!(x > 0.0)` is the intended way to reject NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod geometry;
pub mod ode;
pub mod flow;
pub mod sampling;
pub mod distance;
pub mod series;
pub mod quadrature;
pub mod singularity;
pub mod laplace;
pub mod asymptotics;

pub use error::{Error, Result};
pub use geometry::{Covector, FrameJet, Kind, Point, Structure, StructureConfig, Volume};
pub use flow::GeodesicRecord;
pub use distance::{DistanceResult, HingedProfile};
pub use singularity::{SingularityReport, SmoothMapSample};
pub use laplace::{DiagonalPhase, ExpansionResult};
pub use asymptotics::{AsymptoticPrediction, BoundsPrediction, GeodesicClassification, Regime};
