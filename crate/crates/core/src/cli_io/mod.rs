//! Run configuration, command dispatch, manifests and artifact I/O.

mod artifacts;
mod config;
mod stages;

pub use artifacts::{find_artifact, stage_artifacts, Grids, Manifest, RunDir, StageRecord, Versions, MANIFEST};
pub use config::{
    apply_overrides, parse_config, ConstructionBlock, EvolutionBlock, Expectation, GridBlock, IdealBlock, RunConfig,
    SimilarityBlock, SpectrumBlock, VerifyBlock,
};
pub use stages::{dispatch, exit_code, similarity_dynamics, Command, RunOutcome};
