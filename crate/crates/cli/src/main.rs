use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use markush_gate::evalmetrics::{roc_curve, roc_svg, PatchPrediction, RocCurve};
use markush_gate::imgdata::{load_image, save_png, Dataset, Split};
use markush_gate::patchgen::{dump_patches, generate_patches, PatchSpec};
use markush_gate::pipeline::{
    evaluate, predict_cnn, predict_orb, prepare_corpus, repeat, train_cnn, train_orb, Corpus,
    Level, Method, PipelineConfig, TrainMode,
};
use markush_gate::synth::{generate_corpus, SynthConfig};
use markush_gate::tabular::{write_search_csv, OrbModel};
use markush_gate::tinycnn::{
    load_checkpoint, saliency_map, save_checkpoint, write_history_csv, write_trials_csv,
};
use serde::Serialize;

const SEED_ENV: &str = "MARKUSH_GATE_SEED";

/// Markush structure detection: corpus synthesis, patching, training and
/// evaluation of the ORB and CNN pipelines.
#[derive(Parser)]
#[command(name = "markush-gate", version)]
struct Cli {
    /// Worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus.
    Synth {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Cut every image of a dataset into labeled patches.
    Patches {
        /// Manifest JSON of the dataset.
        #[arg(short, long)]
        dataset: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 224)]
        patch_size: u32,
        #[arg(long, default_value_t = 0.5)]
        overlap_threshold: f64,
    },
    /// Grid search of the ORB + boosted trees pipeline.
    TrainOrb {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Hyperparameter search and refit of the patch CNN.
    TrainCnn {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Score a trained model on one split.
    Eval {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "image")]
        level: LevelArg,
        /// Probability above which an item is called Markush.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Report JSON path (default: <output_dir>/eval_<split>_<level>.json).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write per-item scores as CSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Also write the ROC curve as SVG.
        #[arg(long)]
        roc: Option<PathBuf>,
    },
    /// Train and evaluate repeatedly with derived seeds; report mean and
    /// margin of error.
    Repeat {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short = 'n', long, default_value_t = 5)]
        runs: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Plot ROC curves from prediction CSVs written by `eval`.
    RocPlot {
        /// `name=path.csv`, repeatable.
        #[arg(short, long = "curve", required = true)]
        curves: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Input-gradient saliency map of one patch under a CNN checkpoint.
    Saliency {
        #[arg(short, long)]
        model: PathBuf,
        /// PGM or PNG patch with the model's input size.
        #[arg(short, long)]
        patch: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FcOnly,
    FullModel,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Patch,
    Image,
}

/// Marks errors that exit with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))
}

fn load_pipeline_config(path: &Path) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::from_json(&read_config(path)?)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed_override()? {
        log::info!("seed overridden by {SEED_ENV}: {seed}");
        cfg.seed = seed;
    }
    if !cfg.dataset.exists() {
        return Err(usage(format!(
            "dataset {} does not exist",
            cfg.dataset.display()
        )));
    }
    Ok(cfg)
}

fn load_corpus(cfg: &PipelineConfig) -> Result<Corpus> {
    let corpus =
        Corpus::load(&cfg.dataset).with_context(|| format!("loading {}", cfg.dataset.display()))?;
    Ok(prepare_corpus(corpus, cfg)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cfg: &PipelineConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn cmd_synth(config: &Path, out: &Path) -> Result<()> {
    let mut cfg =
        SynthConfig::from_json(&read_config(config)?).map_err(|e| usage(e.to_string()))?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    let corpus = generate_corpus(&cfg, out)?;
    let n_true = corpus.manifest.entries.iter().filter(|e| e.label).count();
    println!(
        "{} images ({} markush, {} other) written to {}",
        corpus.images.len(),
        n_true,
        corpus.images.len() - n_true,
        out.display()
    );
    Ok(())
}

fn cmd_patches(dataset: &Path, out: &Path, spec: PatchSpec) -> Result<()> {
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let ds = Dataset::open(dataset).map_err(|e| usage(e.to_string()))?;
    ds.manifest.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(out)?;
    let mut patches = Vec::new();
    for e in &ds.manifest.entries {
        let img = ds.load(e)?;
        patches.extend(generate_patches(e, &img, &spec));
    }
    let index = dump_patches(&patches, out)?;
    let pos = index.iter().filter(|p| p.label).count();
    println!(
        "patches: {} total, {} markush, {} other",
        index.len(),
        pos,
        index.len() - pos
    );
    Ok(())
}

#[derive(Serialize)]
struct OrbTrainReport {
    best: markush_gate::tabular::OrbGridCell,
    best_val_macro_f1: f64,
    n_templates_in_model: usize,
}

fn cmd_train_orb(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_pipeline_config(config)?;
    if cfg.method != Method::Orb {
        return Err(usage("train-orb needs a config with method \"orb\""));
    }
    let dir = out_dir(&cfg, out)?;
    let corpus = load_corpus(&cfg)?;
    let outcome = train_orb(&corpus, cfg.orb_block()?, cfg.seed)?;
    fs::write(dir.join("model.json"), outcome.model.to_json())?;
    write_search_csv(&outcome.trials, &dir.join("search.csv"))?;
    write_json(
        &dir.join("train_report.json"),
        &OrbTrainReport {
            best: outcome.best,
            best_val_macro_f1: outcome.best_val_macro_f1,
            n_templates_in_model: outcome.model.templates.len(),
        },
    )?;
    println!(
        "best cell {:?}: validation macro F1 {:.4}",
        outcome.best, outcome.best_val_macro_f1
    );
    Ok(())
}

#[derive(Serialize)]
struct CnnTrainReport {
    mode: TrainMode,
    best_trial: usize,
    best_val_macro_f1: f64,
    best_epoch: usize,
    best_config: markush_gate::tinycnn::TrainConfig,
}

fn cmd_train_cnn(
    config: &Path,
    out: Option<PathBuf>,
    trials: Option<usize>,
    mode: Option<ModeArg>,
) -> Result<()> {
    let mut cfg = load_pipeline_config(config)?;
    if cfg.method != Method::Cnn {
        return Err(usage("train-cnn needs a config with method \"cnn\""));
    }
    {
        let block = cfg.cnn.as_mut().expect("validated");
        if let Some(t) = trials {
            if t == 0 {
                return Err(usage("--trials must be at least 1"));
            }
            block.trials = t;
        }
        if let Some(m) = mode {
            block.mode = match m {
                ModeArg::FcOnly => TrainMode::FcOnly,
                ModeArg::FullModel => TrainMode::FullModel,
            };
        }
    }
    let dir = out_dir(&cfg, out)?;
    let corpus = load_corpus(&cfg)?;
    let block = cfg.cnn_block()?;
    let outcome = train_cnn(&corpus, &cfg.patch, block, cfg.seed)?;
    save_checkpoint(&outcome.model, &dir.join("model.tcnn"))?;
    write_history_csv(&outcome.refit_history, &dir.join("history.csv"))?;
    write_trials_csv(&outcome.trials, &dir.join("trials.csv"))?;
    let best = &outcome.trials[outcome.best_trial];
    write_json(
        &dir.join("train_report.json"),
        &CnnTrainReport {
            mode: block.mode,
            best_trial: outcome.best_trial,
            best_val_macro_f1: best.best_val_macro_f1,
            best_epoch: best.best_epoch,
            best_config: outcome.best_config.clone(),
        },
    )?;
    println!(
        "best trial {} of {}: validation macro F1 {:.4} at epoch {}",
        outcome.best_trial,
        outcome.trials.len(),
        best.best_val_macro_f1,
        best.best_epoch
    );
    Ok(())
}

fn write_predictions(path: &Path, preds: &[PatchPrediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "truth", "predicted", "score"])?;
    for p in preds {
        w.write_record([
            p.image_id.clone(),
            u8::from(p.truth).to_string(),
            u8::from(p.predicted).to_string(),
            p.score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Image-level rows carry the image truth and max patch score.
fn image_rows(
    preds: &[PatchPrediction],
    truth: &BTreeMap<String, bool>,
) -> Result<Vec<PatchPrediction>> {
    Ok(markush_gate::evalmetrics::aggregate_by_image(preds, truth)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    config: &Path,
    model: &Path,
    split: Split,
    level: Level,
    threshold: f64,
    out: Option<PathBuf>,
    predictions: Option<PathBuf>,
    roc: Option<PathBuf>,
) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(usage("--threshold must lie strictly between 0 and 1"));
    }
    let cfg = load_pipeline_config(config)?;
    if !model.exists() {
        return Err(usage(format!("model {} does not exist", model.display())));
    }
    let corpus = load_corpus(&cfg)?;
    let truth = corpus.image_truth(split)?;
    let mut preds = match cfg.method {
        Method::Orb => {
            if level == Level::Patch {
                return Err(usage("ORB models classify whole images; use --level image"));
            }
            let m = OrbModel::from_json(&fs::read_to_string(model)?)?;
            predict_orb(&m, &corpus, split)?
        }
        Method::Cnn => predict_cnn(&load_checkpoint(model)?, &corpus, split, &cfg.patch)?,
    };
    for p in &mut preds {
        p.predicted = p.score > threshold;
    }
    let report = evaluate(&preds, level, &truth)?;
    let rows = match (cfg.method, level) {
        (Method::Cnn, Level::Image) => image_rows(&preds, &truth)?,
        _ => preds,
    };
    let level_name = match level {
        Level::Patch => "patch",
        Level::Image => "image",
    };
    let path = match out {
        Some(p) => p,
        None => out_dir(&cfg, None)?.join(format!("eval_{split}_{level_name}.json")),
    };
    write_json(&path, &report)?;
    if let Some(p) = predictions {
        write_predictions(&p, &rows)?;
    }
    if let Some(p) = roc {
        let labels: Vec<bool> = rows.iter().map(|r| r.truth).collect();
        let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
        let curve = roc_curve(&labels, &scores)?;
        fs::write(&p, roc_svg(&[(level_name, &curve)]))?;
    }
    println!("{}", report.to_json());
    Ok(())
}

fn cmd_repeat(config: &Path, runs: usize, out: Option<PathBuf>) -> Result<()> {
    if runs < 2 {
        return Err(usage("margin of error needs at least 2 runs"));
    }
    let cfg = load_pipeline_config(config)?;
    let corpus = load_corpus(&cfg)?;
    let report = repeat(&corpus, &cfg, runs)?;
    let path = match out {
        Some(p) => p,
        None => out_dir(&cfg, None)?.join("repeat.json"),
    };
    write_json(&path, &report)?;
    let s = &report.image_summary;
    println!(
        "image macro F1 {:.4} ± {:.4} over {} runs",
        s.mean,
        s.margin_of_error,
        s.scores.len()
    );
    if let Some(p) = &report.patch_summary {
        println!("patch macro F1 {:.4} ± {:.4}", p.mean, p.margin_of_error);
    }
    Ok(())
}

fn read_curve(path: &Path) -> Result<RocCurve> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let (mut labels, mut scores) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).context("short prediction row");
        labels.push(field(1)? == "1");
        scores.push(field(3)?.parse::<f64>()?);
    }
    Ok(roc_curve(&labels, &scores)?)
}

fn cmd_roc_plot(curves: &[String], out: &Path) -> Result<()> {
    let mut loaded = Vec::new();
    for spec in curves {
        let Some((name, path)) = spec.split_once('=') else {
            return Err(usage(format!("curve {spec:?} is not name=path.csv")));
        };
        let curve = read_curve(Path::new(path))?;
        println!("{name}: AUC {:.4}", curve.auc);
        loaded.push((name.to_string(), curve));
    }
    let refs: Vec<(&str, &RocCurve)> = loaded.iter().map(|(n, c)| (n.as_str(), c)).collect();
    fs::write(out, roc_svg(&refs))?;
    Ok(())
}

fn cmd_saliency(model: &Path, patch: &Path, out: &Path) -> Result<()> {
    let net = load_checkpoint(model).map_err(|e| usage(e.to_string()))?;
    let img = load_image(patch).map_err(|e| usage(e.to_string()))?;
    let map = saliency_map(&net, &img)?;
    save_png(&map, out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Synth { config, out } => cmd_synth(&config, &out),
        Command::Patches {
            dataset,
            out,
            patch_size,
            overlap_threshold,
        } => cmd_patches(
            &dataset,
            &out,
            PatchSpec {
                patch_size,
                overlap_threshold,
            },
        ),
        Command::TrainOrb { config, out } => cmd_train_orb(&config, out),
        Command::TrainCnn {
            config,
            out,
            trials,
            mode,
        } => cmd_train_cnn(&config, out, trials, mode),
        Command::Eval {
            config,
            model,
            split,
            level,
            threshold,
            out,
            predictions,
            roc,
        } => cmd_eval(
            &config,
            &model,
            match split {
                SplitArg::Train => Split::Train,
                SplitArg::Validation => Split::Validation,
                SplitArg::Test => Split::Test,
            },
            match level {
                LevelArg::Patch => Level::Patch,
                LevelArg::Image => Level::Image,
            },
            threshold,
            out,
            predictions,
            roc,
        ),
        Command::Repeat { config, runs, out } => cmd_repeat(&config, runs, out),
        Command::RocPlot { curves, out } => cmd_roc_plot(&curves, &out),
        Command::Saliency { model, patch, out } => cmd_saliency(&model, &patch, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
