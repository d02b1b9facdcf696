//! Numerical bifurcation toolkit for the radial coupled system
//! `-Δu_i + u_i = 0` in a ball with boundary fluxes
//! `∂u1/∂η = λ f1(u2)`, `∂u2/∂η = λ f2(u1)`.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod banded;
pub mod continuation;
pub mod error;
pub mod grid;
pub mod model;
pub mod monotone;
pub mod solver;
pub mod steklov;
pub mod verify;

pub use analysis::{BifurcationReport, Direction};
pub use continuation::{Branch, BranchPoint, ContinuationConfig};
pub use error::{Error, Result};
pub use grid::{pair_norm, RadialGrid, SystemState};
pub use model::{ModelParams, Nonlinearity, NonlinearityModel, RemainderLimits};
pub use solver::{NewtonConfig, NewtonOutcome};
pub use steklov::SteklovPair;
