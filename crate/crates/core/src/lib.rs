//! Structure-preserving simulation of a one-dimensional compressible,
//! viscous, heat-conducting micropolar fluid in Lagrangian mass coordinates,
//! together with experiment drivers that measure conservation, entropy
//! production, decay to equilibrium and absorbing-ball behavior.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod functionals;
pub mod harness;
pub mod operators;
pub mod output;
pub mod state;
pub mod timestep;

pub use error::{Error, Result};
pub use state::{DeltaBox, Equilibrium, FluidState, Grid, Order, PhysParams};
pub use timestep::{StepControl, StepStats};
