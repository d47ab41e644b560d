pub mod config;
pub mod deconflict;
pub mod error;
pub mod features;
pub mod geometry;
pub mod powerplant;
pub mod predictor;
pub mod report;
pub mod simkit;
pub mod units;

pub use error::{Error, Result};
