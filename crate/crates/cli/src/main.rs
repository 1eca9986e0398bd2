//! `proofread`: synthesize data, train the split classifier, rank and correct
//! segmentation errors, evaluate, and serve interactive sessions.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use proofread_core::cnn::{load_checkpoint, save_checkpoint, train, CnnArch, TrainSchedule};
use proofread_core::correct::{
    rank_dataset, run_corrections, CorrectionEvent, Decision, DecisionProvider, Oracle, Scripted,
    Threshold,
};
use proofread_core::detect::write_rankings;
use proofread_core::metrics::{best_possible_vi, error_census, mean, median, prf1, roc, vi};
use proofread_core::patches::{
    build_training_set, export_training_set, import_training_set, TrainingSet,
};
use proofread_core::synth::{synth_dataset, SynthSpec};
use proofread_core::{load_dataset, save_labels, Dataset, EngineConfig};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "proofread",
    version,
    about = "Split/merge proofreading for neuron segmentations"
)]
struct Cli {
    /// Worker threads for scoring (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Emit logs as JSON lines on stderr.
    #[arg(long, global = true)]
    log_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted split and merge errors.
    Synth(SynthArgs),
    /// Extract a balanced boundary-patch training set from a dataset with ground truth.
    BuildTrain(BuildTrainArgs),
    /// Train the split-error classifier.
    Train(TrainArgs),
    /// Score every split and merge candidate and write the rankings.
    Rank(RankArgs),
    /// Run the correction loop and write corrected labels plus a decision log.
    Correct(CorrectArgs),
    /// Report VI against ground truth, and classifier quality if a checkpoint is given.
    Eval(EvalArgs),
    /// Serve the interactive session API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct EngineArgs {
    /// Watershed seed pairs tried per segment.
    #[arg(long, default_value_t = 50)]
    merge_candidates: usize,
    /// Smallest segment area considered for merge correction.
    #[arg(long, default_value_t = 200)]
    min_segment_area: usize,
}

impl EngineArgs {
    fn config(&self, seed: u64, p_t: f64, patch_size: usize) -> Result<EngineConfig> {
        let cfg = EngineConfig {
            rng_seed: seed,
            p_t,
            patch_size,
            n_merge_candidates: self.merge_candidates,
            min_segment_area: self.min_segment_area,
            ..EngineConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    cells: usize,
    #[arg(long, default_value_t = 8)]
    sections: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Planted split errors, spread round-robin over sections.
    #[arg(long, default_value_t = 0)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    merges: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildTrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 75)]
    patch_size: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// A training-set directory from `build-train`, or a dataset with ground truth.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long)]
    seed: u64,
    /// Directory receiving `model.ckpt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Oracle,
    Auto,
    Interactive,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 0.95)]
    pt: f64,
    #[arg(long)]
    seed: u64,
    /// Recorded decision log to replay in interactive mode.
    #[arg(long)]
    decisions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Compare labels against ground truth.
    #[arg(long)]
    against_gt: bool,
    /// Also score the dataset's boundary patches with this classifier.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

fn init_logging(json: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr);
    if json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        width: a.width,
        height: a.height,
        n_cells: a.cells,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let (ds, manifests) = synth_dataset("synth", &spec, a.sections, a.splits, a.merges)?;
    let manifest = save_labels(&ds, &a.out)?;
    write_json(&a.out.join("errors.json"), &json!(manifests))?;
    tracing::info!(manifest = %manifest.display(), sections = a.sections, "dataset written");
    Ok(())
}

fn build_train(a: BuildTrainArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let cfg = EngineConfig {
        patch_size: a.patch_size,
        rng_seed: a.seed,
        ..EngineConfig::default()
    };
    cfg.validate()?;
    let set = build_training_set(&ds, &cfg, a.seed)?;
    export_training_set(&set, &a.out)?;
    tracing::info!(
        correct = set.correct.len(),
        errors = set.errors.len(),
        "training set written"
    );
    Ok(())
}

fn load_training(path: &Path, seed: u64) -> Result<TrainingSet> {
    if path.join("training_set.json").is_file() {
        return Ok(import_training_set(path)?);
    }
    let ds = load_dataset(path)?;
    let cfg = EngineConfig::with_seed(seed);
    Ok(build_training_set(&ds, &cfg, seed)?)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let set = load_training(&a.dataset, a.seed)?;
    let size = set
        .labeled()
        .first()
        .map(|(p, _)| p.size)
        .context("training set is empty")?;
    let arch = CnnArch {
        input_size: size,
        ..CnnArch::default()
    };
    let schedule = TrainSchedule {
        max_epochs: a.max_epochs,
        patience: a.patience,
        batch_size: a.batch_size,
        ..TrainSchedule::default()
    };
    let ckpt = train(&set, &arch, &schedule, a.seed)?;
    let path = a.out.join("model.ckpt");
    save_checkpoint(&ckpt, &path)?;
    tracing::info!(
        epochs = ckpt.meta.epochs,
        best_epoch = ckpt.meta.best_epoch,
        val_loss = ckpt.meta.val_loss,
        checkpoint = %path.display(),
        "training finished"
    );
    Ok(())
}

fn rank_cmd(a: RankArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let cfg = a
        .engine
        .config(a.seed, 0.95, ckpt.weights.arch.input_size)?;
    let r = rank_dataset(&ds, &ckpt.weights, &cfg)?;
    let path = a.out.join("rankings.jsonl");
    write_rankings(&path, &r.splits, &r.merges)?;
    tracing::info!(splits = r.splits.len(), merges = r.merges.len(), rankings = %path.display(), "ranked");
    Ok(())
}

fn read_decisions(path: &Path) -> Result<VecDeque<Decision>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let e: CorrectionEvent =
                serde_json::from_str(l).with_context(|| format!("parsing {}", path.display()))?;
            Ok(e.decision)
        })
        .collect()
}

fn correct_cmd(a: CorrectArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let cfg = a
        .engine
        .config(a.seed, a.pt, ckpt.weights.arch.input_size)?;
    let mut provider: Box<dyn DecisionProvider> = match a.mode {
        Mode::Oracle => {
            if !ds.has_ground_truth() {
                bail!("oracle mode needs ground truth for every section");
            }
            Box::new(Oracle)
        }
        Mode::Auto => Box::new(Threshold { p_t: a.pt }),
        Mode::Interactive => {
            let Some(path) = &a.decisions else {
                bail!("interactive mode replays --decisions; use `serve` for live sessions");
            };
            Box::new(Scripted {
                p_t: a.pt,
                decisions: read_decisions(path)?,
            })
        }
    };
    let weights = Arc::new(ckpt.weights);
    let rankings = rank_dataset(&ds, &weights, &cfg)?;
    let (out, log) = run_corrections(ds, rankings, provider.as_mut(), weights, &cfg)?;
    save_labels(&out, a.out.join("labels"))?;
    log.write_jsonl(&a.out.join("log.jsonl"))?;
    log.write_summary(&a.out.join("summary.json"))?;
    tracing::info!(
        events = log.events.len(),
        accepted = log.accepted().count(),
        initial_median_vi = log.initial.as_ref().map(|v| v.median),
        final_median_vi = log.final_vi.as_ref().map(|v| v.median),
        "correction finished"
    );
    Ok(())
}

fn eval_report(ds: &Dataset, a: &EvalArgs) -> Result<serde_json::Value> {
    let mut report = json!({ "dataset": ds.name, "sections": ds.sections.len() });
    if a.against_gt {
        let mut rows = Vec::new();
        let (mut vis, mut best) = (Vec::new(), Vec::new());
        for s in &ds.sections {
            let gt = s
                .gt_labels
                .as_ref()
                .with_context(|| format!("section {} has no ground truth", s.index()))?;
            let v = vi(&s.labels, gt, true)?;
            let b = best_possible_vi(&s.labels, gt)?;
            let census = error_census(&s.labels, gt)?;
            rows.push(json!({
                "index": s.index(),
                "vi": v.vi,
                "split_term": v.h_x_given_y,
                "merge_term": v.h_y_given_x,
                "best_possible_vi": b.vi,
                "split_errors": census.split_errors,
                "merge_errors": census.merge_errors,
            }));
            vis.push(v.vi);
            best.push(b.vi);
        }
        report["per_section"] = json!(rows);
        report["median_vi"] = json!(median(&vis));
        report["mean_vi"] = json!(mean(&vis));
        report["median_best_possible_vi"] = json!(median(&best));
    }
    if let Some(path) = &a.checkpoint {
        let ckpt = load_checkpoint(path)?;
        let cfg = EngineConfig {
            patch_size: ckpt.weights.arch.input_size,
            rng_seed: a.seed,
            ..EngineConfig::default()
        };
        let set = build_training_set(ds, &cfg, a.seed)?;
        let items = set.labeled();
        let patches: Vec<_> = items.iter().map(|(p, _)| (*p).clone()).collect();
        let labels: Vec<bool> = items.iter().map(|(_, l)| *l == 1).collect();
        let scores = proofread_core::cnn::predict(&ckpt.weights, &patches)?;
        let curve = roc(&scores, &labels)?;
        let pr = prf1(&scores, &labels, a.pt)?;
        report["classifier"] = json!({
            "patches": patches.len(),
            "auc": curve.auc,
            "precision": pr.precision,
            "recall": pr.recall,
            "f1": pr.f1,
            "threshold": a.pt,
        });
    }
    Ok(report)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let report = eval_report(&ds, &a)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &a.out {
        write_json(&out.join("eval.json"), &report)?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "serving");
        proofread_service::serve(listener, proofread_service::AppState::new()).await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::BuildTrain(a) => build_train(a),
        Command::Train(a) => train_cmd(a),
        Command::Rank(a) => rank_cmd(a),
        Command::Correct(a) => correct_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_json);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
