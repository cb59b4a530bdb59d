//! Physics-guided fair neighborhood sampling for graph neural models of
//! stream water temperature, with a synthetic basin generator and a fairness
//! evaluation harness.

pub mod basin;
pub mod config;
pub mod bundle;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod influence;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
