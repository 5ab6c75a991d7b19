//! Cooperative robot–human navigation with jointly optimized timed bands.

pub mod band;
pub mod config;
pub mod constraints;
pub mod error;
pub mod geometry;
pub mod gridplan;
pub mod optimizer;
pub mod output;
pub mod planner;
pub mod prediction;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
