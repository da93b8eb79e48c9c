use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use lrppo::data::{parse_letor, serialize_letor, RankingInstance};
use lrppo::eval::MetricsRow;
use lrppo::pipeline::{
    load_instances, Experiment, ExperimentConfig, StageTag, STAGE1_CHECKPOINT, STAGE3_CHECKPOINT,
};

mod overrides;

#[derive(Parser, Debug)]
#[command(name = "lrppo", version, about = "Three-stage label relevance ranking experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed to run (repeatable). Falls back to the configuration's seed list.
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,
    /// Output directory; each seed writes to `<out>/seed-<n>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for trajectory collection.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Configuration override such as `stage3.ppo.n_iters=20` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write source.letor, target.letor and manifest.json.
    GenData,
    TrainStage1,
    TrainStage2,
    /// Run stage 3 from the stage-2 checkpoint, or resume a stage-3 checkpoint.
    TrainStage3,
    TrainAll,
    /// Evaluate the stage-1 and final actors of a finished run.
    Evaluate,
    /// Stage 3 once per ratio mode from the stage-2 checkpoint.
    AblateRatio,
    /// Stages 2 and 3 at each annotation proportion.
    AblateAnnotation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use lrppo::Error;
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_)) => 2,
        Some(Error::Data(_) | Error::Parse { .. }) => 3,
        Some(Error::NonFinite(_)) => 4,
        _ => 1,
    }
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| lrppo::Error::Config(format!("cannot read {}: {e}", path.display())))?,
        None => ExperimentConfig::default().to_json_pretty()?,
    };
    let base: Value = serde_json::from_str(&text).map_err(|e| lrppo::Error::Config(format!("config: {e}")))?;
    // Fill in defaults first so every known key is addressable by --set.
    let full = ExperimentConfig::from_json(&base.to_string())?;
    let mut value: Value = serde_json::from_str(&full.to_json_pretty()?)?;
    for edit in &common.overrides {
        overrides::apply(&mut value, edit)?;
    }
    let cfg = ExperimentConfig::from_json(&value.to_string())?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(lrppo::Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let seeds = if cli.common.seeds.is_empty() { cfg.seeds.clone() } else { cli.common.seeds.clone() };
    if seeds.is_empty() {
        return Err(lrppo::Error::Config("no seeds given".into()).into());
    }
    let out_root = cli.common.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    for seed in seeds {
        let dir = out_root.join(format!("seed-{seed}"));
        println!("== {:?} seed {seed} -> {}", cli.command, dir.display());
        let exp = Experiment::new(&cfg, seed, Some(&dir))?.with_overrides(cli.common.overrides.clone());
        run_seed(cli.command, &exp, &cfg, &dir)?;
    }
    Ok(())
}

fn run_seed(command: Command, exp: &Experiment<'_>, cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<()> {
    match command {
        Command::GenData => gen_data(exp, cfg, dir),
        Command::TrainStage1 => {
            let data = exp.data()?;
            let (_, history) = exp.stage1(&data)?;
            let last = history.last().expect("history has the untrained row");
            println!("stage 1: {} epochs, validation NDCG@5 {:.4}", last.epoch, last.val_ndcg[2]);
            Ok(())
        }
        Command::TrainStage2 => {
            let data = exp.data()?;
            let s1 = exp.load_checkpoint(StageTag::Stage1)?;
            let (s2, _) = exp.stage2(&data, &s1)?;
            println!("stage 2: held-out pair accuracy {:.4}", exp.heldout_accuracy(&data, s2.reward()?)?);
            Ok(())
        }
        Command::TrainStage3 => {
            let data = exp.data()?;
            let from = if dir.join(STAGE3_CHECKPOINT).exists() {
                let set = exp.load_checkpoint(StageTag::Stage3)?;
                let done = set.stage3.as_ref().map_or(0, |s| s.iteration);
                println!("resuming stage 3 at iteration {done}");
                set
            } else {
                exp.load_checkpoint(StageTag::Stage2)?
            };
            let finished = exp.stage3(&data, &from, None)?;
            print_metrics(&exp.metrics(&data, &finished)?);
            Ok(())
        }
        Command::TrainAll => {
            let out = exp.train_all()?;
            println!(
                "stage 1: validation NDCG@5 {:.4}; stage 3: {} iterations",
                out.stage1_history.last().expect("non-empty").val_ndcg[2],
                out.stage3.history.len()
            );
            print_metrics(&out.metrics);
            Ok(())
        }
        Command::Evaluate => {
            let data = exp.data()?;
            let finished = exp.load_checkpoint(StageTag::Stage3)?;
            print_metrics(&exp.metrics(&data, &finished)?);
            Ok(())
        }
        Command::AblateRatio => {
            let data = exp.data()?;
            let s2 = exp.load_checkpoint(StageTag::Stage2)?;
            for (mode, out) in exp.ablate_ratio(&data, &s2)? {
                let last = out.history.last().and_then(|r| r.test_ndcg).map_or(f64::NAN, |n| n[2]);
                println!("{:<17} final NDCG@5 {last:.4}", mode.name());
            }
            Ok(())
        }
        Command::AblateAnnotation => {
            let s1 = if dir.join(STAGE1_CHECKPOINT).exists() {
                exp.load_checkpoint(StageTag::Stage1)?
            } else {
                exp.stage1(&exp.data()?)?.0
            };
            for row in exp.ablate_annotation(&s1)? {
                let acc = row.reward_acc.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
                println!("{:>5.0}%  reward acc {acc:>6}  NDCG@5 {:.4}", row.proportion * 100.0, row.ndcg[2]);
            }
            Ok(())
        }
    }
}

fn gen_data(exp: &Experiment<'_>, cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<()> {
    let (source, target) = load_instances(cfg, exp.seed())?;
    write_letor(&dir.join("source.letor"), &source)?;
    write_letor(&dir.join("target.letor"), &target)?;
    let data = exp.data()?;
    println!(
        "{} source and {} target instances; {} train / {} test target instances",
        source.len(),
        target.len(),
        data.split.target_train.len(),
        data.split.test.len()
    );
    Ok(())
}

fn write_letor(path: &Path, instances: &[RankingInstance]) -> anyhow::Result<()> {
    let text = serialize_letor(instances)?;
    std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    let back = parse_letor(&std::fs::read_to_string(path)?)?;
    if back.instances != instances {
        bail!("{} does not re-parse to the generated data", path.display());
    }
    Ok(())
}

fn print_metrics(rows: &[MetricsRow]) {
    println!("{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10}", "row", "NDCG@1", "NDCG@3", "NDCG@5", "NDCG@10", "NDCG@20", "reward acc");
    for r in rows {
        let acc = r.reward_acc.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        println!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {acc:>10}",
            r.split, r.ndcg1, r.ndcg3, r.ndcg5, r.ndcg10, r.ndcg20
        );
    }
}
