//! The guide under `book/`, compiled so that every listing runs as a doc-test.
#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/units.md")]
pub mod units {}

#[doc = include_str!("../../../book/src/cruise-power.md")]
pub mod cruise_power {}

#[doc = include_str!("../../../book/src/deconfliction.md")]
pub mod deconfliction {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/predictor.md")]
pub mod predictor {}

#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}

#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
