//! Case files, run driver, file formats and solver benchmark for
//! [`ibpm_core`].

pub mod bench;
pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use config::{parse_config, parse_config_str, CaseConfig};
pub use error::{Error, Result};
pub use run::{run_case, RunOptions, RunSummary};
