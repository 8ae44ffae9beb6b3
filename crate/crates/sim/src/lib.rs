//! Files, command line and thread pool around `msstefan_core`.

pub mod acceptance;
pub mod config;
pub mod output;
pub mod parallel;

pub use config::{ConfigFile, RunConfig};
pub use parallel::Rayon;
