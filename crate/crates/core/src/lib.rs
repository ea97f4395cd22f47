//! Sensitivities of ODE flows and of first hitting times/states of level
//! sets with respect to initial conditions, plus an HJB-based optimality
//! verification scheme for bang-bang control-affine problems.
//!
//! The crate is organized bottom-up:
//!
//! - [`expr`]: parsed math expressions with exact forward-mode derivatives;
//! - [`system`]: vector fields, level sets, and control-affine problem
//!   instances (expression-backed or from a builtin registry);
//! - [`integrate`]: adaptive Dormand–Prince 5(4) with dense output and the
//!   variational (flow-Jacobian) augmentation;
//! - [`flow_sens`]: flow sensitivities and their identity residuals;
//! - [`hitting`]: first hitting time/state of a level set with exact
//!   implicit-function gradients;
//! - [`hjb_verify`]: feedback simulation, bang-arc costs, candidate value
//!   functions, Hamilton–Jacobi residuals, pointwise optimality checks,
//!   and a dynamic-programming oracle;
//! - [`fd_oracle`]: independent finite-difference oracles for every
//!   analytic derivative the crate produces.

pub mod expr;
pub mod fd_oracle;
pub mod flow_sens;
pub mod hitting;
pub mod hjb_verify;
pub mod integrate;
pub mod mat;
pub mod system;

pub use expr::{ExprAst, ParseError};
pub use system::{ControlAffineProblem, LevelSetDef, SystemDef};
