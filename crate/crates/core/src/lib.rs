//! Deep Echo State Networks.
//!
//! A [`DeepReservoir`] is a stack of untrained leaky-integrator recurrent
//! layers fed bottom-up within each time step; a [`Readout`] is the linear map
//! from all layers' concatenated states to the outputs, trained in closed
//! form. Around those sit seeded construction ([`init`]), dynamics
//! diagnostics ([`analysis`]) and benchmark task generators ([`tasks`]).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod init;
pub mod readout;
pub mod reservoir;
pub mod tasks;
pub mod weights;

pub use error::{Error, Result};
pub use init::{build_reservoir, InitConfig, PerLayer};
pub use readout::{Metric, Readout, RegressionProblem};
pub use reservoir::{Activation, DeepReservoir, GlobalState, LayerSpec, StateTrajectory};
pub use weights::{CsrMatrix, Weights};
