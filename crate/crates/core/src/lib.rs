//! Weighted random dot product graphs: moment-wise spectral embedding,
//! asymptotic covariances, recovery of edge-weight distributions from
//! moment sequences, and generation of statistically similar graphs.

pub mod asymptotics;
pub mod discrete;
pub mod error;
pub mod generator;
pub mod graph;
pub mod maxent;
pub mod metrics;
pub mod model;
mod quad;
pub mod spectral;

pub use error::{Error, Result};
