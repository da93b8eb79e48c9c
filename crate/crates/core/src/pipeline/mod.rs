//! End-to-end orchestration of the three training stages.

mod checkpoint_set;
mod config;
mod experiment;
mod prepare;
mod reinforce;
mod supervised;

pub use checkpoint_set::{CheckpointSet, StageTag};
pub use config::{DataSource, ExperimentConfig, Stage1Config, Stage2Config, Stage3Config};
pub use experiment::{
    annotation_csv, to_jsonl, AnnotationRow, ArtifactDir, Experiment, RunManifest, TrainAllOutcome,
    ANNOTATION_CSV, ANNOTATION_PROPORTIONS, MANIFEST, METRICS_CSV, METRICS_JSONL, STAGE1_CHECKPOINT,
    STAGE1_HISTORY, STAGE2_CHECKPOINT, STAGE2_HISTORY, STAGE3_CHECKPOINT, STAGE3_HISTORY,
};
pub use prepare::{load_instances, prepare_data, PreparedData};
pub use reinforce::{run_stage3, Stage3Outcome, Stage3Record, Stage3Session, Stage3State};
pub use supervised::{
    run_stage1, run_stage2, stage2_pairs, Stage1Epoch, Stage1Outcome, Stage2Epoch, Stage2Outcome, Stage2Pairs,
};
