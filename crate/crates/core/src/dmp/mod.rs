//! Demonstration ingest, primitive fitting and constrained rollout.

pub mod demo;
pub mod limits;
pub mod model;
pub mod preprocess;
pub mod rollout;

pub use demo::{Demonstration, Layout, Sample};
pub use limits::{KinematicLimits, DEFAULT_SAFETY_SCALE};
pub use model::{fit, DmpModel, Gains, DEFAULT_N_BASIS};
pub use preprocess::{resample_and_filter, PreprocessSpec};
pub use rollout::{rollout, TrajState, Trajectory, DEFAULT_DT};
