//! Config-driven experiment runner behind the `specrecon` binary.

pub mod config;
pub mod plot;
pub mod run;

pub use config::{parse_config, parse_with_overrides, Command, ExperimentConfig, Format};
pub use plot::{emit_plot, render_svg, PlotKind, Series};
pub use run::{run_experiment, run_with_threads, ManifestEntry, RunOutcome};
