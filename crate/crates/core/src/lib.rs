//! Numerical laboratory for the degenerate clamped beam
//! `u_tt + a(x) u_xxxx = 0` on `(0, 1)`, `a(0) = 0`.
//!
//! Modules, bottom up: [`profiles`] (the coefficient and its class),
//! [`discretization`] (grid, quadratures, operator), [`dynamics`] (energy
//! conserving time stepping), [`modes`], [`observability`] (boundary-trace
//! identities and `C_T`), [`hum`] (null control at `x = 1`) and [`cli`].

pub mod banded;
pub mod cli;
pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod hum;
pub mod model;
pub mod modes;
pub mod observability;
pub mod profiles;

pub use dynamics::{solve_backward, solve_homogeneous, step_midpoint, BeamState, TimeGrid, TraceSeries, Trajectory};
pub use error::{Error, Result};
pub use hum::{synthesize_control, verify_null_control, ControlProblem, ControlSettings, HumSolution};
pub use model::BeamModel;
pub use modes::ModalBasis;
pub use observability::{estimate_ct, observability_bounds, quotient, IdentityReport, ObservabilityReport};
pub use profiles::{classify, make_power_profile, observability_time, DegeneracyClass, DegeneracyProfile, Regime};
