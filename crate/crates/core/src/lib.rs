//! 2D radar odometry for automotive (sparse Doppler point clouds) and
//! scanning (dense polar power images) radars.
//!
//! The processing chain is:
//!
//! 1. [`preprocess`]: thresholding of polar power images, range gating and
//!    Doppler consistency filtering of automotive detections.
//! 2. [`egomotion`]: instantaneous ego-velocity from radial velocities (RANSAC
//!    plus least squares) and its integration into a relative motion.
//! 3. [`submap`]: stacking of the latest scans into one frame as weighted
//!    Gaussians, carrying measurement and ego-motion uncertainty.
//! 4. [`ndt`]: weighted probabilistic normal-distributions maps.
//! 5. [`matcher`]: weighted point-to-distribution NDT matching with Newton's
//!    method and a failure-driven escalation ladder.
//! 6. [`pipeline`]: the odometry loop tying it all together.
//!
//! [`eval`] implements the trajectory error metrics and [`ingest`] the file
//! formats plus a synthetic scene generator with ground truth.

pub mod egomotion;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod matcher;
pub mod ndt;
pub mod pipeline;
pub mod preprocess;
pub mod submap;
pub mod viz;

pub use crate::error::{Error, Result};
pub use crate::geometry::{Covariance3, Gaussian2, Mat2, Pose2, Vec2};
pub use crate::ingest::{PointScan, PolarScan, RadarPoint, Scan, Trajectory};
pub use crate::matcher::{FailureReason, MatchConfig, MatchResult};
pub use crate::ndt::{NdtConfig, NdtMap};
pub use crate::pipeline::{Mode, OdometryOutput, PipelineConfig};
pub use crate::submap::{Submap, WeightedPoint};
