//! Vehicle state estimation from the nadir video of a hovering UAV.
//!
//! The pipeline turns per-frame rotated bounding boxes into georeferenced,
//! UTC-stamped vehicle trajectories and quantifies each error source along
//! the way:
//!
//! - [`georef`]: pixel → local-tangent-plane mapping from ground control points
//!   and its error budget under pixel ambiguity.
//! - [`stabilize`]: MLESAC similarity estimation that removes hover drift.
//! - [`measure`]: bounding box → `(center, yaw)` measurement with relief
//!   displacement correction and known-dimension rescaling.
//! - [`filter`]: 8-state linear Kalman filter, course over ground and sideslip.
//! - [`sync`]: LED/PPS frame → UTC time base and synchronization error bounds.
//! - [`bench`]: comparison against a reference trace, cumulative error tables.
//! - [`sim`]: synthetic scene generator used as a ground-truth oracle.
//! - [`pipeline`]: the stages chained from detections to filtered states.
//! - [`io`]: the CSV/JSON file formats shared by all of the above.
//!
//! Angles are radians internally, normalized to `(-π, π]`. Files carry degrees.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod bench;
pub mod budget;
pub mod filter;
pub mod geometry;
pub mod georef;
pub mod io;
pub mod measure;
pub mod pipeline;
pub mod sim;
pub mod stabilize;
pub mod sync;

pub use nalgebra::Vector2;

/// 2-vector used for both pixel (PCF) and metric (LTP) coordinates.
pub type Vec2 = Vector2<f64>;

/// Crate-level error wrapping the per-module errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Georef(#[from] georef::GeorefError),
    #[error(transparent)]
    Stabilize(#[from] stabilize::StabilizeError),
    #[error(transparent)]
    Measure(#[from] measure::MeasureError),
    #[error(transparent)]
    Filter(#[from] filter::FilterError),
    #[error(transparent)]
    Sync(#[from] sync::SyncError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Pipeline(#[from] pipeline::PipelineError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
