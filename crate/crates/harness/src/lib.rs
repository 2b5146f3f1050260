//! Command-line harness for the `stageopt-core` algorithms: instance files,
//! configuration, benchmark sweeps, CSV output and plotting.

pub mod bench;
pub mod commands;
pub mod config;
pub mod instance_io;
pub mod plot;
