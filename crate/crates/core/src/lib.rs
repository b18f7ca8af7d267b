//! Explicit Runge-Kutta integration with relaxation for conserved entropies.
//!
//! The [`stepper`] combines an embedded pair from [`tableau`], the step size
//! controller in [`controller`] and the scalar root solve in [`relaxation`].
//! [`harness`] runs convergence studies and work-precision sweeps over the
//! test problems in [`problems`] and writes CSV.

pub mod controller;
pub mod harness;
pub mod problems;
pub mod reference;
pub mod relaxation;
pub mod stepper;
pub mod tableau;

pub use controller::{ControllerConfig, ControllerState, PidGains, Tolerances};
pub use problems::{Problem, ProblemOptions};
pub use relaxation::{solve_gamma, RelaxationConfig};
pub use stepper::{
    integrate, FsalRStage1, IntegrateOptions, RFsalCompare, RFsalEmbedded, RunRecord, RunStatus, StepControl, Strategy,
};
pub use tableau::Tableau;
