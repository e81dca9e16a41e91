//! Experiment runner for `neqdiff-core`: configuration files, parallel
//! ensembles, verification suites and their CSV/JSON artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiments;
pub mod parallel;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use report::{Check, Outcome};
