//! Simulation and optimization of reconfigurable intelligent surfaces whose
//! varactor biases come from standing waves on a shared transmission line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod biasline;
pub mod cli;
pub mod error;
pub mod metasurface;
pub mod optimize;
pub mod varactor;

pub use error::{Error, Result};
