//! Library surface of the `setsim` command-line tool: run configuration,
//! output manifests and the per-subcommand pipelines.

pub mod config;
pub mod outputs;
pub mod pipelines;

pub use config::{GammaSpec, RunConfig};
