//! Synthesis and analysis of hybrid five-bar mechanisms: one input turns at
//! constant velocity, the other is a programmable servo.
//!
//! The crate covers the whole pipeline:
//!
//! - [`mechanism`]: dyad solutions and closure tracking around a task cycle
//! - [`motion`]: differentiation, harmonic content and resolver units
//! - [`objective`]: the weighted four-term synthesis objective
//! - [`synthesis`]: genetic algorithm plus steepest-descent refinement
//! - [`dynamics`]: inverse dynamics of the linkage
//! - [`control`]: two-axis discrete servo simulation

pub mod control;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod mechanism;
pub mod motion;
pub mod objective;
pub mod svg;
pub mod synthesis;
pub mod table;

pub use error::{Error, Result};
pub use geometry::Point;
pub use mechanism::{ClosureTrace, MechanismDims, PoseSample, TaskSample, TaskSpec};
pub use motion::{HarmonicSpectrum, MotionProfile};
pub use objective::{ObjectiveBreakdown, ObjectiveOptions, ObjectiveWeights};
