//! Scene files, run driver, output writers and the canned experiments.

pub mod build;
pub mod config;
pub mod experiments;
pub mod output;
pub mod run;
pub mod sampler;

pub use build::{build_body, build_simulation};
pub use config::{
    load_scene, BodyConfig, BodyKind, ContactConfig, FrictionPair, GridConfig, KeyframeConfig, OutputConfig,
    SceneConfig, VolumeConfig, VolumeShape,
};
pub use output::{ForceRow, FrameManifest, StatsRecord};
pub use run::{run_simulation, step_count, RunSummary};
