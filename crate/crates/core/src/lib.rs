//! Fixed-spectrum analysis and distributed controller synthesis for
//! multi-channel linear time-invariant systems.

pub mod cli;
pub mod error;
pub mod examples;
pub mod extend;
pub mod graphs;
pub mod linmath;
pub mod mcsys;
pub mod random;
pub mod report;
pub mod setpoint;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
