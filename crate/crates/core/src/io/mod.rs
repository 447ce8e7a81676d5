//! Configuration files, result files and physical units.

pub mod config;
pub mod output;
pub mod units;

pub use config::{load_config, parse_config, OutputFormat, OutputSpec, RunConfig, Spacing, TimeGrid};
pub use units::{to_physical_units, UnitSystem};
