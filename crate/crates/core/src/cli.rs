//! Command-line front end: `synth`, `segment`, `features`, `train`, `eval`
//! and `experiment`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! A `--config FILE` of `key,value` (or `key=value`) lines supplies any long
//! option not given on the command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::audio_io::{read_wav, segment, write_wav};
use crate::autoencoder::{load_model, save_model, train_rows, TrainConfig};
use crate::dataset::{split, Manifest, Scheme, Split, MANIFEST_FILE};
use crate::dsp::cache::write_feature_cache;
use crate::dsp::{DspConfig, FeatureMode};
use crate::error::Error;
use crate::experiment::{
    format_threshold, run_experiment, score_test_set, synth_corpus, train_matrix, write_loss_history, write_outputs,
    CorpusFeatures, ExperimentResults, Preset,
};
use crate::par::Execution;
use crate::scoring::{eval_report, write_scores, ClipAggregate, EvalReport, ScoredClip};
use crate::synthgen::{Condition, SignalModel};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "propcrack", version, about = "Acoustic crack detection for drone propellers")]
pub struct Cli {
    /// Master seed for synthesis, splits and training.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Spectral representation: fft (one vector per clip) or stft (one per frame).
    #[arg(long, global = true, default_value = "stft")]
    pub mode: FeatureMode,
    /// Corpus directory holding WAV files and manifest.csv.
    #[arg(long, global = true, default_value = "data")]
    pub data_dir: PathBuf,
    /// Report file (text); a .csv twin is written next to it.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Optional key/value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Verbose logging.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus into the data directory.
    Synth(SynthArgs),
    /// Cut a long WAV recording into fixed-length clips.
    Segment(SegmentArgs),
    /// Extract features for a manifest into a feature cache.
    Features(FeaturesArgs),
    /// Train one model on the normal train split.
    Train(TrainArgs),
    /// Score the test split and print F1/AUC per defect type.
    Eval(EvalArgs),
    /// Train and evaluate all eleven dataset variants.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub normal_clips: Option<usize>,
    #[arg(long)]
    pub abnormal_clips: Option<usize>,
    #[arg(long)]
    pub clip_seconds: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub seconds: f64,
    /// Output name prefix; defaults to the input file stem.
    #[arg(long)]
    pub prefix: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training budget overrides shared by `train` and `experiment`.
#[derive(Debug, Args, Clone, Default)]
pub struct BudgetArgs {
    /// Preset supplying default epochs, batch size, frame stride and test fraction.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub frame_stride: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// all, angle-<deg> or power-<pct>; used when the manifest has no split yet.
    #[arg(long, default_value = "all")]
    pub scheme: Scheme,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Debug, Args, Clone)]
pub struct EvalArgs {
    /// Split manifest; defaults to the one written next to the model by `train`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value = "mean")]
    pub aggregate: ClipAggregate,
}

#[derive(Debug, Args, Clone)]
pub struct ExperimentArgs {
    /// Generate a corpus with this preset into the data directory first.
    #[arg(long)]
    pub synth: Option<String>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Output directory for models, scores and splits (default: <data-dir>/experiment).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Number of variants trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, default_value = "mean")]
    pub aggregate: ClipAggregate,
}

/// Maps a failure to its exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        Some(Error::InvalidConfig(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Reads `key,value` / `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(',')
            .or_else(|| line.split_once('='))
            .ok_or_else(|| Error::InvalidConfig(format!("config line {}: expected key,value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if key == "key" && v.trim() == "value" {
            continue;
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Appends `--key=value` for config keys not already on the command line.
fn apply_config(mut args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let pos = args.iter().position(|a| a == "--config");
    let inline = args
        .iter()
        .find_map(|a| a.to_str().and_then(|s| s.strip_prefix("--config=")).map(PathBuf::from));
    let path = match (pos, inline) {
        (Some(i), _) => args.get(i + 1).map(PathBuf::from),
        (None, p) => p,
    };
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    for (key, value) in parse_config(&text)? {
        let flag = format!("--{key}");
        let present = args
            .iter()
            .filter_map(|a| a.to_str())
            .any(|a| a == flag || a.starts_with(&format!("{flag}=")));
        if !present {
            args.push(format!("{flag}={value}").into());
        }
    }
    Ok(args)
}

/// Full CLI entry point; returns the process exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match apply_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => EXIT_SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(a) => {
            let summary = cmd_synth(cli, a)?;
            println!("{summary}");
        }
        Command::Segment(a) => {
            let n = cmd_segment(a)?;
            println!("wrote {n} segment(s) to {}", a.out_dir.display());
        }
        Command::Features(a) => {
            let (path, rows) = cmd_features(cli, a)?;
            println!("wrote {rows} feature vector(s) to {}", path.display());
        }
        Command::Train(a) => {
            let summary = cmd_train(cli, a)?;
            println!("{summary}");
        }
        Command::Eval(a) => {
            let table = cmd_eval(cli, a)?;
            print!("{table}");
        }
        Command::Experiment(a) => {
            let started = Instant::now();
            let results = cmd_experiment(cli, a)?;
            print!("{}", crate::experiment::render_report(&results));
            log::info!("experiment finished in {:.1} s", started.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn manifest_path(cli: &Cli, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.data_dir.join(MANIFEST_FILE))
}

/// Directory WAV paths in a manifest are relative to.
fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn cmd_synth(cli: &Cli, args: &SynthArgs) -> anyhow::Result<String> {
    let preset = Preset::by_name(&args.preset)?;
    let mut specs = preset.synth_specs(cli.seed);
    if let Some(n) = args.normal_clips {
        specs[0].clips_per_variable = n;
    }
    if let Some(n) = args.abnormal_clips {
        specs[1].clips_per_variable = n;
    }
    if let Some(s) = args.clip_seconds {
        for spec in specs.iter_mut() {
            spec.clip_seconds = s;
        }
    }
    let manifest = synth_corpus(&specs, &SignalModel::default(), &cli.data_dir, Execution::Parallel)?;
    let count = |c| manifest.iter().filter(|e| e.condition() == c).count();
    Ok(format!(
        "wrote {} clips to {} ({} normal, {} ripped, {} broken)",
        manifest.len(),
        cli.data_dir.display(),
        count(Condition::Normal),
        count(Condition::Ripped),
        count(Condition::Broken)
    ))
}

pub fn cmd_segment(args: &SegmentArgs) -> anyhow::Result<usize> {
    let clip = read_wav(&args.input)?;
    let segments = segment(&clip, args.seconds)?;
    let prefix = match &args.prefix {
        Some(p) => p.clone(),
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .context("input has no file name")?,
    };
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    for (i, seg) in segments.iter().enumerate() {
        write_wav(args.out_dir.join(format!("{prefix}_{i:03}.wav")), seg)?;
    }
    Ok(segments.len())
}

/// Writes the feature cache plus an index `clip_id,first_row,rows`.
pub fn cmd_features(cli: &Cli, args: &FeaturesArgs) -> anyhow::Result<(PathBuf, usize)> {
    let mpath = manifest_path(cli, &args.manifest);
    let manifest = Manifest::read(&mpath)?;
    let features = CorpusFeatures::extract(&manifest, &manifest_root(&mpath), &DspConfig::default(), cli.mode, Execution::Parallel)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cli.data_dir.join(format!("features-{}.adfv", cli.mode)));
    let all = features.stacked(manifest.iter().map(|e| e.path.as_str()), 1)?;
    write_feature_cache(&out, &all)?;
    let mut index = String::from("clip_id,first_row,rows\n");
    let mut first = 0;
    for e in manifest.iter() {
        let rows = features.rows(&e.path)?.nrows();
        let _ = writeln!(index, "{},{first},{rows}", e.clip_id());
        first += rows;
    }
    let index_path = out.with_extension("index.csv");
    fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    Ok((out, all.nrows()))
}

fn budget(cli: &Cli, b: &BudgetArgs) -> anyhow::Result<(TrainConfig, usize, f64)> {
    let preset = Preset::by_name(&b.preset)?;
    let mut cfg = preset.train_config(cli.seed);
    if let Some(e) = b.epochs {
        cfg.epochs = e;
    }
    if let Some(n) = b.batch_size {
        cfg.batch_size = n;
    }
    if let Some(lr) = b.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg.validate()?;
    Ok((
        cfg,
        b.frame_stride.unwrap_or(preset.train_frame_stride),
        b.test_fraction.unwrap_or(preset.test_fraction),
    ))
}

fn model_path(cli: &Cli, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.data_dir.join("model.adae"))
}

fn sidecar(model: &Path, suffix: &str) -> PathBuf {
    let mut name = model.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    model.with_file_name(name)
}

pub fn cmd_train(cli: &Cli, args: &TrainArgs) -> anyhow::Result<String> {
    let mpath = manifest_path(cli, &args.manifest);
    let root = manifest_root(&mpath);
    let manifest = Manifest::read(&mpath)?;
    let (train_cfg, stride, test_fraction) = budget(cli, &args.budget)?;
    let model_out = model_path(cli, &args.model);
    let split_manifest = if manifest.has_assignments() {
        manifest
    } else {
        split(&manifest, args.scheme, test_fraction, cli.seed)?
    };
    split_manifest.check_train_is_normal()?;
    // only the train clips are needed
    let train_only = Manifest::new(split_manifest.with_split(Split::Train).cloned().collect())?;
    let features = CorpusFeatures::extract(&train_only, &root, &DspConfig::default(), cli.mode, Execution::Parallel)?;
    let stride = if cli.mode == FeatureMode::Fft { 1 } else { stride };
    let rows = train_matrix(&train_only, &features, stride)?;
    let (model, history) = train_rows(rows.view(), &train_cfg)?;
    if let Some(parent) = model_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_model(&model, &model_out)?;
    write_loss_history(sidecar(&model_out, ".loss.txt"), &history)?;
    // WAV paths in the split manifest stay relative to the corpus root
    let split_out = sidecar(&model_out, ".split.csv");
    let split_out = if manifest_root(&split_out) == root {
        split_out
    } else {
        root.join(split_out.file_name().unwrap_or_default())
    };
    split_manifest.write(&split_out)?;
    let last = history.last().map(|l| format!("{l:.6}")).unwrap_or_else(|| "-".into());
    Ok(format!(
        "trained on {} rows from {} clips for {} epochs (final loss {last}); model {}, split {}",
        rows.nrows(),
        train_only.len(),
        history.len(),
        model_out.display(),
        split_out.display()
    ))
}

/// Aligned single-row table in the per-condition F1(threshold)/AUC layout.
pub fn render_eval_table(ripped: Option<&EvalReport>, broken: Option<&EvalReport>) -> String {
    let f1 = |r: Option<&EvalReport>| {
        r.map(|e| format!("{:.2} ({})", 100.0 * e.best_f1, format_threshold(e.best_threshold)))
            .unwrap_or_else(|| "-".into())
    };
    let auc = |r: Option<&EvalReport>| r.map(|e| format!("{:.2}", 100.0 * e.roc_auc)).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    let _ = writeln!(out, "{:<36}{}", "F1 Score (Threshold)", "Roc AUC Score");
    let _ = writeln!(out, "{:<18}{:<18}{:<10}{}", "Ripped", "Broken", "Ripped", "Broken");
    let _ = writeln!(out, "{:<18}{:<18}{:<10}{}", f1(ripped), f1(broken), auc(ripped), auc(broken));
    out
}

pub fn cmd_eval(cli: &Cli, args: &EvalArgs) -> anyhow::Result<String> {
    let model_in = model_path(cli, &args.model);
    let mpath = args.manifest.clone().unwrap_or_else(|| {
        let side = sidecar(&model_in, ".split.csv");
        if side.exists() {
            side
        } else {
            cli.data_dir.join(side.file_name().unwrap_or_default())
        }
    });
    let model = load_model(&model_in)?;
    let manifest = Manifest::read(&mpath)?;
    let test_only = Manifest::new(manifest.with_split(Split::Test).cloned().collect())?;
    let features = CorpusFeatures::extract(&test_only, &manifest_root(&mpath), &DspConfig::default(), cli.mode, Execution::Parallel)?;
    let scores = score_test_set(&model, &test_only, &features, args.aggregate)?;
    write_scores(args.scores.clone().unwrap_or_else(|| sidecar(&model_in, ".scores.csv")), &scores)?;
    let of = |c: Condition| -> Vec<ScoredClip> { scores.iter().filter(|s| s.label == c).cloned().collect() };
    let normal = of(Condition::Normal);
    let (ripped, broken) = (of(Condition::Ripped), of(Condition::Broken));
    if normal.is_empty() || (ripped.is_empty() && broken.is_empty()) {
        return Err(Error::SingleClassOnly {
            n_normal: normal.len(),
            n_abnormal: ripped.len() + broken.len(),
        }
        .into());
    }
    let report = |abn: &[ScoredClip]| -> anyhow::Result<Option<EvalReport>> {
        if abn.is_empty() {
            Ok(None)
        } else {
            Ok(Some(eval_report(&normal, abn)?))
        }
    };
    let (r, b) = (report(&ripped)?, report(&broken)?);
    let table = render_eval_table(r.as_ref(), b.as_ref());
    if let Some(path) = &cli.report {
        fs::write(path, &table).map_err(|e| Error::io(path, e))?;
    }
    Ok(table)
}

pub fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> anyhow::Result<ExperimentResults> {
    if let Some(preset) = &args.synth {
        let summary = cmd_synth(
            cli,
            &SynthArgs {
                preset: preset.clone(),
                normal_clips: None,
                abnormal_clips: None,
                clip_seconds: None,
            },
        )?;
        log::info!("{summary}");
    }
    let preset = Preset::by_name(&args.budget.preset)?;
    let (train, stride, test_fraction) = budget(cli, &args.budget)?;
    let mut cfg = preset.experiment_config(cli.mode, cli.seed);
    cfg.train = train;
    cfg.train_frame_stride = stride;
    cfg.test_fraction = test_fraction;
    cfg.aggregate = args.aggregate;
    cfg.parallel_variants = args.parallel.max(1);

    let mpath = cli.data_dir.join(MANIFEST_FILE);
    let manifest = Manifest::read(&mpath)?;
    let features = CorpusFeatures::extract(&manifest, &cli.data_dir, &cfg.dsp, cfg.mode, cfg.exec)?;
    let results = run_experiment(&features, &cfg)?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| cli.data_dir.join("experiment"));
    let report = cli.report.clone().unwrap_or_else(|| out_dir.join("report.txt"));
    write_outputs(&results, &out_dir, &report)?;
    Ok(results)
}
