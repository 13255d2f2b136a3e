//! Pipeline driver for `sccalib`: configuration, stage execution and
//! artifact export on top of [`sccalib_core`].

pub mod config;
pub mod manifest;
pub mod stages;
pub mod svg;

pub use config::{PipelineConfig, TrackerSpec};
pub use manifest::{RunManifest, StageRecord};
pub use stages::{run_all, run_stage, Layout, Stage};
