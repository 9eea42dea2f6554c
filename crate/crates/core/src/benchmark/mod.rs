//! The power-grid benchmark: grid model, experiment configuration,
//! simulator and output writers.

pub mod config;
pub mod grid;
pub mod ingest;
pub mod sim;
pub mod montecarlo;
pub mod output;
