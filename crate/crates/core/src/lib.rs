//! Throughput optimization for an energy-harvesting cooperative three-node network.

pub mod barrier;
pub mod convex;
pub mod error;
pub mod experiments;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod strategy;

pub use error::{Error, Result};
