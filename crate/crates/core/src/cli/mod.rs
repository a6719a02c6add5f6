//! Configuration, raster and report plumbing behind the `phasepart` binary.

pub mod config;
pub mod raster;
pub mod report;

pub use config::{parse_config, ConfigError, ConfigErrors, RunConfig, OUTPUT_DIR_ENV};
pub use raster::{read_pgm, render_labels, Pgm};
pub use report::write_report;
