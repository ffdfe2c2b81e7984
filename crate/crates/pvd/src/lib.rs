//! File IO, plan execution, calibration and the command line for `pvd-core`.

pub mod bench;
pub mod calibrate;
pub mod cli;
pub mod config;
pub mod datagen;
pub mod executor;
pub mod load;
pub mod trace;
