//! Partially observed linear-quadratic control with a finite simulator
//! class: Riccati solvers, Kalman filtering, class validation, the
//! value-target learner and sim-to-real evaluation.

pub mod benchmark;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lqg;
pub mod model_class;
pub mod riccati;
pub mod rng;
pub mod sim2real;
pub mod stats;
pub mod vtr;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use lqg::{solve, CostSpec, LqgEnv, LqgSystem, Policy, SolvedSystem, Trajectory};
pub use model_class::{ClassProfile, SimulatorClass, ValidationConfig, ValidationReport};
pub use sim2real::{GapReport, MinimaxTable, PolicySpec, ReductionTable};
pub use vtr::learner::{run_lqg_vtr, LearnerConfig, LqgVtr, Setting, TraceRow, VtrRun};
