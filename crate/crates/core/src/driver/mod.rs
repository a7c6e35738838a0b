//! Configuration, presets, single runs, frequency scans, convergence ladders
//! and reports.

pub mod artifacts;
pub mod config;
pub mod report;
pub mod run;
pub mod scan;

pub use artifacts::{Checkpoint, Heatmap, RunPaths};
pub use config::{parse_config, preset, validate_config, RunConfig, Rung, PRESETS};
pub use report::emit_report;
pub use run::{relax_ground_state, run_quench, run_single, write_ground_state, RunArtifacts, RunControl};
pub use scan::{run_ladder, run_scan, LadderDeviation, LadderResult, ScanResult, ScanRow};
