//! Experiment driver for bargaining failure from normative disagreement.
//!
//! Configuration files, run directories, the self-play and cross-play
//! tournaments and the `normbargain` command line. The algorithms live in
//! `normbargain-core`.

pub mod cli;
pub mod config;
pub mod evaluate;
pub mod report;
pub mod store;
pub mod train;
pub mod verify;

pub use config::{Algo, Experiment, ExperimentConfig};
