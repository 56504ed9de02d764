//! Numerical witnesses for topological obstructions to stabilizing an
//! inverted pendulum.
//!
//! For a user-supplied control law on one of five pendulum systems the
//! crate constructs, at finite precision, the solutions whose existence the
//! obstruction arguments guarantee: trajectories that never fall and are
//! never captured by the stabilized neighborhood, and non-falling periodic
//! solutions under periodic forcing with friction.
//!
//! Layers, bottom-up:
//!
//! - [`dsl`]: control-law expressions and built-in controllers
//! - [`models`]: the vector fields
//! - [`integrator`]: adaptive Dormand–Prince with dense output and events
//! - [`lyapunov`]: quadratic capture regions from the linearization
//! - [`fate`]: first-exit classification
//! - [`finders`]: bisection, periodic-orbit and basin engines
//! - [`cli`]: scenario files, subcommands and artifacts

pub mod cli;
pub mod dsl;
pub mod fate;
pub mod finders;
pub mod integrator;
pub mod linalg;
pub mod lyapunov;
pub mod models;
pub mod output;

pub use dsl::{builtin, parse, ControlExpr, ControlLaw, Controller, VarSet};
pub use fate::{classify, CaptureRegion, Fate, FateTag};
pub use integrator::{integrate, integrate_closed_loop, DenseTrajectory, IntegratorConfig};
pub use models::{SphereVariant, SystemKind, SystemModel};
