//! Batch frontend for the separation pipeline: simulate, align, separate,
//! evaluate and the chained `pipeline` run.
//!
//! Output layout under the output directory:
//!
//! ```text
//! manifest.json              pipeline record (stages, seeds, config)
//! simulate/                  source{1,2}.png mixture{1,2}.png manifest.json
//! align/                     aligned{1,2}.png field.json manifest.json
//! separate-<mode>/run-NN/    model.json y{1,2}.pfm y{1,2}.display.png trace.csv
//! separate-<mode>/           ranking.json best.model.json worst.model.json manifest.json
//! evaluate/                  report.csv report.json scatter-<panel>.csv manifest.json
//! ```

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pfm;

pub use commands::{cmd_align, cmd_evaluate, cmd_pipeline, cmd_separate, cmd_separate_mode, cmd_simulate, Layout};
pub use config::{Overrides, PipelineConfig};
