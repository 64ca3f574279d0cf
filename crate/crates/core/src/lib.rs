//! First jump times of continuous-state branching processes with immigration.

pub mod error;
pub mod laws;
pub mod measures;
pub mod mechanisms;
pub mod oracle;
pub mod odeflow;
pub mod params;
pub mod simkit;

#[cfg(test)]
mod testutil;

pub use error::{CbiError, Result};
