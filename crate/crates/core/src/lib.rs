//! Simulation of stealthy false-data-injection attacks on ACC car-following.
//!
//! The crate is organized bottom-up:
//!
//! - [`dsl`]: one-variable attack functions `g(x)` as parsed expressions with
//!   exact symbolic derivatives.
//! - [`model`]: IDM, OVRV and attacked-OVRV acceleration laws and their
//!   rational-driving partial derivatives.
//! - [`validate`]: grid-based membership checks for the additive and
//!   multiplicative stealthy attack sets.
//! - [`engine`]: fixed-step RK4 platoon integration with attack injection,
//!   clamping and collision detection.
//! - [`metrics`]: average speed variation and VT-Micro fuel consumption.

pub mod dsl;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod validate;

pub use dsl::{AttackSpec, AttackWindow, Expr, InjectionMode};
pub use engine::{Scenario, Trajectory};
pub use model::{IdmParams, OvrvParams, VehicleKind, VehicleSpec, VehicleState};
