//! Scenario files, orchestration, metrics and reports for `qkdn-core`.
//!
//! This is the std side of the workspace: everything that touches files,
//! text formats or the command line lives here.

pub mod config;
pub mod metrics;
pub mod report;
pub mod scenario;

pub use config::{parse_config, ConfigError, ParseError, Protocol, ScenarioConfig, ValidationError};
pub use metrics::{Counts, Metrics};
pub use report::Format;
pub use scenario::{compare_protocols, plot_series, run_scenario, simulate, Outcome, ScenarioError, ScenarioReport};

pub use qkdn_core;
