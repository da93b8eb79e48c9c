use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint_set::{CheckpointSet, StageTag};
use super::config::ExperimentConfig;
use super::prepare::{prepare_data, PreparedData};
use super::reinforce::{run_stage3, Stage3Outcome, Stage3Record, Stage3Session};
use super::supervised::{run_stage1, run_stage2, Stage1Epoch, Stage2Epoch};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, metrics_csv, metrics_jsonl, reward_accuracy, InstanceIndex, MetricsRow};
use crate::models::{ActorModel, RewardModel};
use crate::ppo::RatioMode;

pub const MANIFEST: &str = "manifest.json";
pub const STAGE1_CHECKPOINT: &str = "stage1.ckpt.json";
pub const STAGE2_CHECKPOINT: &str = "stage2.ckpt.json";
pub const STAGE3_CHECKPOINT: &str = "stage3.ckpt.json";
pub const STAGE1_HISTORY: &str = "history_stage1.jsonl";
pub const STAGE2_HISTORY: &str = "history_stage2.jsonl";
pub const STAGE3_HISTORY: &str = "history_stage3.jsonl";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const ANNOTATION_CSV: &str = "annotation_grid.csv";

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Output directory for one seed's artifacts.
#[derive(Debug, Clone)]
pub struct ArtifactDir {
    root: PathBuf,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", root.display()))))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    }
}

/// Split manifest plus the run identity, written next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub split: crate::data::SplitManifest,
    pub heldout_pairs: usize,
    /// `key=value` edits applied on top of the configuration file.
    #[serde(default)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainAllOutcome {
    pub stage1_actor: ActorModel,
    pub stage1_history: Vec<Stage1Epoch>,
    pub reward: RewardModel,
    pub stage2_history: Vec<Stage2Epoch>,
    pub stage3: Stage3Outcome,
    /// Stage-1 and final actor on the test split.
    pub metrics: Vec<MetricsRow>,
}

/// One row of the annotation-proportion grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub proportion: f64,
    pub seed: u64,
    pub reward_acc: Option<f64>,
    pub ndcg: [f64; 5],
}

pub const ANNOTATION_PROPORTIONS: [f64; 4] = [0.05, 0.10, 0.20, 0.40];

pub fn annotation_csv(rows: &[AnnotationRow]) -> String {
    let mut out = String::from("proportion,seed,reward_acc,ndcg1,ndcg3,ndcg5,ndcg10,ndcg20\n");
    for r in rows {
        let acc = r.reward_acc.map(|a| a.to_string()).unwrap_or_default();
        let n = r.ndcg;
        out.push_str(&format!(
            "{},{},{acc},{},{},{},{},{}\n",
            r.proportion, r.seed, n[0], n[1], n[2], n[3], n[4]
        ));
    }
    out
}

/// One seed of one configuration, optionally persisting every artifact.
pub struct Experiment<'c> {
    cfg: &'c ExperimentConfig,
    seed: u64,
    out: Option<ArtifactDir>,
    overrides: Vec<String>,
}

impl<'c> Experiment<'c> {
    pub fn new(cfg: &'c ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let out = out.map(ArtifactDir::create).transpose()?;
        Ok(Self { cfg, seed, out, overrides: Vec::new() })
    }

    /// Records configuration overrides in the run manifest.
    pub fn with_overrides(mut self, overrides: Vec<String>) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn artifacts(&self) -> Option<&ArtifactDir> {
        self.out.as_ref()
    }

    fn emit(&self, name: &str, contents: impl FnOnce() -> Result<String>) -> Result<()> {
        match &self.out {
            Some(dir) => dir.write(name, &contents()?),
            None => Ok(()),
        }
    }

    fn emit_checkpoint(&self, name: &str, set: &CheckpointSet) -> Result<()> {
        match &self.out {
            Some(dir) => set.save(&dir.path(name)),
            None => Ok(()),
        }
    }

    /// Builds the data and writes the run manifest.
    pub fn data(&self) -> Result<PreparedData> {
        let data = prepare_data(self.cfg, self.seed)?;
        self.emit(MANIFEST, || {
            let m = RunManifest {
                seed: self.seed,
                config_hash: self.cfg.hash()?,
                config: self.cfg.clone(),
                split: data.split.manifest(),
                heldout_pairs: data.heldout_pairs.len(),
                overrides: self.overrides.clone(),
            };
            Ok(serde_json::to_string_pretty(&m)?)
        })?;
        Ok(data)
    }

    pub fn load_checkpoint(&self, stage: StageTag) -> Result<CheckpointSet> {
        let dir = self
            .out
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("no output directory to load checkpoints from".into()))?;
        let name = match stage {
            StageTag::Stage1 => STAGE1_CHECKPOINT,
            StageTag::Stage2 => STAGE2_CHECKPOINT,
            StageTag::Stage3 => STAGE3_CHECKPOINT,
        };
        let set = CheckpointSet::load_for(&dir.path(name), stage, self.cfg)?;
        if set.seed != self.seed {
            return Err(Error::Checkpoint(format!("checkpoint is for seed {}, not {}", set.seed, self.seed)));
        }
        Ok(set)
    }

    pub fn stage1(&self, data: &PreparedData) -> Result<(CheckpointSet, Vec<Stage1Epoch>)> {
        let out = run_stage1(self.cfg, &data.split.source, self.seed)?;
        self.emit(STAGE1_HISTORY, || to_jsonl(&out.history))?;
        let mut set = CheckpointSet::new(StageTag::Stage1, self.cfg, self.seed)?;
        set.stage1_actor = Some(out.actor);
        self.emit_checkpoint(STAGE1_CHECKPOINT, &set)?;
        Ok((set, out.history))
    }

    pub fn stage2(&self, data: &PreparedData, stage1: &CheckpointSet) -> Result<(CheckpointSet, Vec<Stage2Epoch>)> {
        let out = run_stage2(self.cfg, &data.split, self.seed)?;
        self.emit(STAGE2_HISTORY, || to_jsonl(&out.history))?;
        let mut set = CheckpointSet::new(StageTag::Stage2, self.cfg, self.seed)?;
        set.stage1_actor = Some(stage1.stage1_actor()?.clone());
        set.reward = Some(out.reward);
        self.emit_checkpoint(STAGE2_CHECKPOINT, &set)?;
        Ok((set, out.history))
    }

    /// Runs stage 3 from a stage-2 set, or continues a stage-3 set, writing a
    /// checkpoint after every iteration. Stops early after `stop_after`
    /// completed iterations if given.
    pub fn stage3(&self, data: &PreparedData, from: &CheckpointSet, stop_after: Option<usize>) -> Result<CheckpointSet> {
        let reward = from.reward()?;
        let mut session = match (&from.stage, &from.stage3) {
            (StageTag::Stage3, Some(state)) => {
                Stage3Session::resume(self.cfg, reward, &data.split, self.seed, state.clone())?
            }
            (StageTag::Stage2, _) => {
                Stage3Session::start(self.cfg, from.stage1_actor()?, reward, &data.split, self.seed)?
            }
            (stage, _) => {
                return Err(Error::Checkpoint(format!("cannot run stage 3 from a {stage:?} checkpoint")))
            }
        };
        let mut set = CheckpointSet::new(StageTag::Stage3, self.cfg, self.seed)?;
        set.stage1_actor = from.stage1_actor.clone();
        set.reward = Some(reward.clone());
        while !session.is_done() && stop_after.is_none_or(|n| session.state().iteration < n) {
            session.step()?;
            if self.out.is_some() {
                set.stage3 = Some(session.state().clone());
                self.emit_checkpoint(STAGE3_CHECKPOINT, &set)?;
            }
        }
        self.emit(STAGE3_HISTORY, || to_jsonl(&session.state().history))?;
        set.stage3 = Some(session.into_state());
        self.emit_checkpoint(STAGE3_CHECKPOINT, &set)?;
        Ok(set)
    }

    pub fn heldout_accuracy(&self, data: &PreparedData, reward: &RewardModel) -> Result<f64> {
        let index = InstanceIndex::new(&data.split.test);
        reward_accuracy(reward, &data.heldout_pairs, &index)
    }

    /// Stage-1 and final rows on the test split, written as CSV and JSONL.
    pub fn metrics(&self, data: &PreparedData, finished: &CheckpointSet) -> Result<Vec<MetricsRow>> {
        let state = finished
            .stage3
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("metrics need a stage-3 checkpoint".into()))?;
        let stage1 = evaluate_model(finished.stage1_actor()?, &data.split.test, "stage1", self.seed, 0)?;
        let mut last = evaluate_model(&state.actor, &data.split.test, "final", self.seed, state.iteration)?;
        last.reward_acc = Some(self.heldout_accuracy(data, finished.reward()?)?);
        let rows = vec![stage1, last];
        self.emit(METRICS_CSV, || Ok(metrics_csv(&rows)))?;
        self.emit(METRICS_JSONL, || metrics_jsonl(&rows))?;
        Ok(rows)
    }

    pub fn train_all(&self) -> Result<TrainAllOutcome> {
        let data = self.data()?;
        let (s1, stage1_history) = self.stage1(&data)?;
        let (s2, stage2_history) = self.stage2(&data, &s1)?;
        let s3 = self.stage3(&data, &s2, None)?;
        let metrics = self.metrics(&data, &s3)?;
        let state = s3.stage3.expect("stage 3 ran");
        Ok(TrainAllOutcome {
            stage1_actor: s1.stage1_actor.expect("stage 1 ran"),
            stage1_history,
            reward: s2.reward.expect("stage 2 ran"),
            stage2_history,
            stage3: Stage3Outcome { actor: state.actor, critic: state.critic, history: state.history },
            metrics,
        })
    }

    /// Stage 3 once per ratio mode from the same stage-2 checkpoint, with the
    /// test split evaluated after every iteration. Writes `ratio_<mode>.jsonl`.
    pub fn ablate_ratio(&self, data: &PreparedData, stage2: &CheckpointSet) -> Result<Vec<(RatioMode, Stage3Outcome)>> {
        let actor = stage2.stage1_actor()?;
        let reward = stage2.reward()?;
        let baseline = evaluate_model(actor, &data.split.test, "stage1", self.seed, 0)?;
        let mut runs = Vec::new();
        for mode in RatioMode::ALL {
            let mut cfg = self.cfg.clone();
            cfg.stage3.ppo.ratio_mode = mode;
            cfg.stage3.eval_every = 1;
            let out = run_stage3(&cfg, actor, reward, &data.split, self.seed)?;
            self.emit(&format!("ratio_{}.jsonl", mode.name()), || {
                let mut rows = vec![MetricsRow { split: mode.name().into(), ..baseline.clone() }];
                rows.extend(out.history.iter().map(|r| curve_row(mode, self.seed, r)));
                metrics_jsonl(&rows)
            })?;
            runs.push((mode, out));
        }
        Ok(runs)
    }

    /// Reward accuracy and final NDCG for each annotation proportion, plus
    /// the stage-1 actor as the proportion-0 row.
    pub fn ablate_annotation(&self, stage1: &CheckpointSet) -> Result<Vec<AnnotationRow>> {
        let actor = stage1.stage1_actor()?;
        let base = self.data()?;
        let mut rows = vec![AnnotationRow {
            proportion: 0.0,
            seed: self.seed,
            reward_acc: None,
            ndcg: evaluate_model(actor, &base.split.test, "stage1", self.seed, 0)?.ndcg(),
        }];
        for p in ANNOTATION_PROPORTIONS {
            let mut cfg = self.cfg.clone();
            cfg.split.annotation_proportion = p;
            let data = prepare_data(&cfg, self.seed)?;
            let reward = run_stage2(&cfg, &data.split, self.seed)?.reward;
            let acc = self.heldout_accuracy(&data, &reward)?;
            let out = run_stage3(&cfg, actor, &reward, &data.split, self.seed)?;
            rows.push(AnnotationRow {
                proportion: p,
                seed: self.seed,
                reward_acc: Some(acc),
                ndcg: evaluate_model(&out.actor, &data.split.test, "final", self.seed, cfg.stage3.ppo.n_iters)?.ndcg(),
            });
        }
        self.emit(ANNOTATION_CSV, || Ok(annotation_csv(&rows)))?;
        Ok(rows)
    }
}

fn curve_row(mode: RatioMode, seed: u64, rec: &Stage3Record) -> MetricsRow {
    let n = rec.test_ndcg.unwrap_or([f64::NAN; 5]);
    MetricsRow {
        split: mode.name().into(),
        seed,
        iteration: rec.diagnostics.iteration + 1,
        ndcg1: n[0],
        ndcg3: n[1],
        ndcg5: n[2],
        ndcg10: n[3],
        ndcg20: n[4],
        reward_acc: None,
    }
}
