//! Solver and verification harness for one-dimensional Wasserstein gradient
//! flows whose entropy has a kink at the critical density `rho = 1`,
//! producing nonlinear diffusion with a jump in diffusion intensity and a
//! pressure variable on the critical region.
//!
//! The crate provides:
//! - entropy families with subdifferential calculus at the kink ([`entropy`]),
//! - exact 1D optimal transport on grid densities ([`density`]),
//! - the minimizing-movements (JKO) stepper with pressure extraction
//!   ([`jko`]),
//! - a regularized finite-volume cross-check solver ([`pde_fd`]),
//! - closed-form stationary oracles for the log-linear setup ([`stationary`]),
//! - theorem-derived trajectory diagnostics ([`diagnostics`]),
//! - independent verification oracles (assignment LP for the transport cost,
//!   Lagrangian convex minimization for the step) ([`oracle`]),
//! - configuration and command plumbing for the `jko1d` binary ([`config`],
//!   [`commands`]).

pub mod commands;
pub mod config;
pub mod density;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod jko;
pub mod oracle;
pub mod pde_fd;
pub mod potential;
pub mod stationary;

pub use density::GridDensity;
pub use entropy::EntropySpec;
pub use error::{Error, Result};
pub use jko::{jko_step, run_trajectory, JkoOptions};
pub use potential::Potential;
