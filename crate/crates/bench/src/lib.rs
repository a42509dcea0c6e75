//! Instance generation, oracles, benchmark sweeps and performance profiles
//! for the `minlp` command-line tool.

pub mod bench;
pub mod error;
pub mod instance;
pub mod oracle;
pub mod profile;
pub mod suite;

pub use error::{BenchError, Result};
