//! Eleven-variant experiment: six per-angle, four per-power and one all-data
//! model, each trained on its own normal train split and evaluated against
//! ripped and broken test clips separately.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::audio_io::read_wav;
use crate::autoencoder::{save_model, train_rows, AutoEncoderModel, TrainConfig};
use crate::dataset::{split, Manifest, Scheme, Split, MANIFEST_FILE};
use crate::dsp::{clip_feature_matrix, DspConfig, FeatureMode};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::scoring::{eval_report, score_matrix, write_scores, ClipAggregate, EvalReport, ScoredClip};
use crate::synthgen::{derive_seed, synth_dataset_with, Condition, RecordingVariable, SignalModel, SynthSpec};

/// Corpus size and training budget, defined in one place for every preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub normal_clips_per_variable: usize,
    pub abnormal_clips_per_variable: usize,
    pub clip_seconds: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Keep every n-th STFT frame of a train clip.
    pub train_frame_stride: usize,
    pub test_fraction: f64,
}

pub const PRESETS: [Preset; 2] = [
    Preset {
        name: "desk",
        normal_clips_per_variable: 20,
        abnormal_clips_per_variable: 5,
        clip_seconds: 2.0,
        epochs: 100,
        batch_size: 32,
        learning_rate: 1e-3,
        train_frame_stride: 16,
        test_fraction: 1.0 / 6.0,
    },
    Preset {
        name: "paper-scale",
        normal_clips_per_variable: 180,
        abnormal_clips_per_variable: 30,
        clip_seconds: 10.0,
        epochs: 100,
        batch_size: 32,
        learning_rate: 1e-3,
        train_frame_stride: 1,
        test_fraction: 1.0 / 6.0,
    },
];

impl Preset {
    pub fn by_name(name: &str) -> Result<&'static Preset> {
        PRESETS
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {name:?} (desk, paper-scale)")))
    }

    /// Normal and abnormal synthesis batches for a corpus seed.
    pub fn synth_specs(&self, seed: u64) -> [SynthSpec; 2] {
        let abnormal: Vec<RecordingVariable> = Condition::ABNORMAL
            .iter()
            .flat_map(|&c| RecordingVariable::grid(c))
            .collect();
        [
            SynthSpec::new(
                RecordingVariable::grid(Condition::Normal),
                self.normal_clips_per_variable,
                self.clip_seconds,
                seed,
            ),
            SynthSpec::new(abnormal, self.abnormal_clips_per_variable, self.clip_seconds, seed),
        ]
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn experiment_config(&self, mode: FeatureMode, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            dsp: DspConfig::default(),
            train: self.train_config(seed),
            test_fraction: self.test_fraction,
            train_frame_stride: self.train_frame_stride,
            aggregate: ClipAggregate::Mean,
            parallel_variants: 1,
            exec: Execution::Parallel,
        }
    }
}

/// Synthesizes every batch of `specs` into `dir` and writes `manifest.csv`.
pub fn synth_corpus(specs: &[SynthSpec], model: &SignalModel, dir: &Path, exec: Execution) -> Result<Manifest> {
    let mut manifest = Manifest::default();
    for spec in specs {
        manifest = manifest.merge(synth_dataset_with(spec, model, dir, exec)?)?;
    }
    manifest.write(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: FeatureMode,
    pub dsp: DspConfig,
    /// `train.seed` is the master seed; each variant derives its own.
    pub train: TrainConfig,
    pub test_fraction: f64,
    pub train_frame_stride: usize,
    pub aggregate: ClipAggregate,
    /// Variants trained concurrently (1 = sequential).
    pub parallel_variants: usize,
    pub exec: Execution,
}

/// Feature matrices for every entry of a manifest, in manifest order.
#[derive(Debug, Clone)]
pub struct CorpusFeatures {
    manifest: Manifest,
    rows: Vec<Array2<f64>>,
}

impl CorpusFeatures {
    pub fn extract(manifest: &Manifest, root: &Path, dsp: &DspConfig, mode: FeatureMode, exec: Execution) -> Result<Self> {
        dsp.validate()?;
        let rows = par::try_map(exec, manifest.entries(), |e| {
            let clip = read_wav(root.join(&e.path))?;
            clip_feature_matrix(&clip, dsp, mode)
        })?;
        Ok(Self {
            manifest: manifest.clone(),
            rows,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn index_of(&self, path: &str) -> Result<usize> {
        self.manifest
            .entries()
            .iter()
            .position(|e| e.path == path)
            .ok_or_else(|| Error::MalformedManifest(format!("{path} has no features")))
    }

    pub fn rows(&self, path: &str) -> Result<&Array2<f64>> {
        Ok(&self.rows[self.index_of(path)?])
    }

    /// All rows of the given clips, every `stride`-th frame, stacked.
    pub fn stacked<'a>(&self, paths: impl IntoIterator<Item = &'a str>, stride: usize) -> Result<Array2<f64>> {
        let stride = stride.max(1);
        let mut views = Vec::new();
        for p in paths {
            let m = self.rows(p)?;
            let picked: Vec<usize> = (0..m.nrows()).step_by(stride).collect();
            views.push(m.select(Axis(0), &picked));
        }
        if views.is_empty() {
            return Err(Error::EmptyFeatures);
        }
        let refs: Vec<_> = views.iter().map(|v| v.view()).collect();
        ndarray::concatenate(Axis(0), &refs).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

/// Normal train rows of a split manifest. Fails on abnormal train entries.
pub fn train_matrix(split_manifest: &Manifest, features: &CorpusFeatures, stride: usize) -> Result<Array2<f64>> {
    split_manifest.check_train_is_normal()?;
    features.stacked(split_manifest.with_split(Split::Train).map(|e| e.path.as_str()), stride)
}

/// Scores every test entry of a split manifest.
pub fn score_test_set(
    model: &AutoEncoderModel,
    split_manifest: &Manifest,
    features: &CorpusFeatures,
    aggregate: ClipAggregate,
) -> Result<Vec<ScoredClip>> {
    split_manifest
        .with_split(Split::Test)
        .map(|e| {
            let score = score_matrix(model, features.rows(&e.path)?.view(), aggregate)?;
            ScoredClip::new(e.clip_id(), score, e.condition())
        })
        .collect()
}

/// Ripped and broken reports for one scored test set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReports {
    pub ripped: EvalReport,
    pub broken: EvalReport,
}

impl ConditionReports {
    pub fn from_scores(scores: &[ScoredClip]) -> Result<Self> {
        let of = |c: Condition| -> Vec<ScoredClip> { scores.iter().filter(|s| s.label == c).cloned().collect() };
        let normal = of(Condition::Normal);
        Ok(Self {
            ripped: eval_report(&normal, &of(Condition::Ripped))?,
            broken: eval_report(&normal, &of(Condition::Broken))?,
        })
    }

    pub fn get(&self, c: Condition) -> &EvalReport {
        match c {
            Condition::Broken => &self.broken,
            _ => &self.ripped,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub scheme: Scheme,
    pub split: Manifest,
    pub model: AutoEncoderModel,
    pub loss_history: Vec<f64>,
    pub scores: Vec<ScoredClip>,
    pub reports: ConditionReports,
}

/// Trains and evaluates one variant. `index` decorrelates variant seeds.
pub fn run_variant(scheme: Scheme, index: usize, features: &CorpusFeatures, cfg: &ExperimentConfig) -> Result<VariantResult> {
    let master = cfg.train.seed;
    let split_manifest = split(
        features.manifest(),
        scheme,
        cfg.test_fraction,
        derive_seed(&[master, 1, index as u64]),
    )?;
    let stride = match cfg.mode {
        FeatureMode::Fft => 1,
        FeatureMode::Stft => cfg.train_frame_stride,
    };
    let train_rows_matrix = train_matrix(&split_manifest, features, stride)?;
    let train_cfg = TrainConfig {
        seed: derive_seed(&[master, 2, index as u64]),
        ..cfg.train.clone()
    };
    log::info!("{scheme}: training on {} rows", train_rows_matrix.nrows());
    let (model, loss_history) = train_rows(train_rows_matrix.view(), &train_cfg)?;
    let scores = score_test_set(&model, &split_manifest, features, cfg.aggregate)?;
    let reports = ConditionReports::from_scores(&scores)?;
    Ok(VariantResult {
        scheme,
        split: split_manifest,
        model,
        loss_history,
        scores,
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub mode: FeatureMode,
    pub variants: Vec<VariantResult>,
}

impl ExperimentResults {
    pub fn variant(&self, scheme: Scheme) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.scheme == scheme)
    }
}

/// Runs all eleven variants on precomputed features.
pub fn run_experiment(features: &CorpusFeatures, cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    let schemes = Scheme::variants();
    let jobs: Vec<(usize, Scheme)> = schemes.into_iter().enumerate().collect();
    let run = || par::try_map(Execution::Parallel, &jobs, |&(i, s)| run_variant(s, i, features, cfg));
    let variants = if cfg.parallel_variants > 1 {
        par::with_threads(cfg.parallel_variants, run)?
    } else {
        jobs.iter()
            .map(|&(i, s)| run_variant(s, i, features, cfg))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ExperimentResults {
        mode: cfg.mode,
        variants,
    })
}

/// Two significant digits, as the threshold column is usually printed.
pub fn format_threshold(t: f64) -> String {
    if t == 0.0 || !t.is_finite() {
        return format!("{t}");
    }
    let magnitude = t.abs().log10().floor() as i32;
    let decimals = (1 - magnitude).max(0) as usize;
    format!("{t:.decimals$}")
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

struct Row {
    label: String,
    reports: ConditionReports,
}

fn table_rows(results: &ExperimentResults, pick: impl Fn(&Scheme) -> Option<String>) -> Vec<Row> {
    results
        .variants
        .iter()
        .filter_map(|v| {
            pick(&v.scheme).map(|label| Row {
                label,
                reports: v.reports.clone(),
            })
        })
        .collect()
}

fn render_table(out: &mut String, title: &str, axis: &str, rows: &[Row], with_average: bool) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{axis:<10}{:<36}{}",
        "F1 Score (Threshold)", "Roc AUC Score"
    );
    let _ = writeln!(out, "{:<10}{:<18}{:<18}{:<10}{}", "", "Ripped", "Broken", "Ripped", "Broken");
    for r in rows {
        let cell = |c: Condition| {
            let e = r.reports.get(c);
            format!("{} ({})", pct(e.best_f1), format_threshold(e.best_threshold))
        };
        let _ = writeln!(
            out,
            "{:<10}{:<18}{:<18}{:<10}{}",
            r.label,
            cell(Condition::Ripped),
            cell(Condition::Broken),
            pct(r.reports.ripped.roc_auc),
            pct(r.reports.broken.roc_auc)
        );
    }
    if with_average && !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let _ = writeln!(
            out,
            "{:<10}{:<18}{:<18}{:<10}{}",
            "Average",
            pct(mean(&|r| r.reports.ripped.best_f1)),
            pct(mean(&|r| r.reports.broken.best_f1)),
            pct(mean(&|r| r.reports.ripped.roc_auc)),
            pct(mean(&|r| r.reports.broken.roc_auc))
        );
    }
    out.push('\n');
}

fn angle_rows(results: &ExperimentResults) -> Vec<Row> {
    table_rows(results, |s| match s {
        Scheme::PerAngle(a) => Some(format!("{a}°")),
        _ => None,
    })
}

fn power_rows(results: &ExperimentResults) -> Vec<Row> {
    table_rows(results, |s| match s {
        Scheme::PerPower(t) => Some(format!("{t}%")),
        _ => None,
    })
}

fn all_rows(results: &ExperimentResults) -> Vec<Row> {
    table_rows(results, |s| match s {
        Scheme::All => Some("All".to_string()),
        _ => None,
    })
}

/// Plain-text report with the per-angle, per-power and all-data tables.
pub fn render_report(results: &ExperimentResults) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Feature mode: {}\n", results.mode);
    render_table(&mut out, "Model performance by recording angle", "Degrees", &angle_rows(results), true);
    render_table(&mut out, "Model performance by throttle power", "Power", &power_rows(results), true);
    render_table(&mut out, "Model performance on all data", "Data", &all_rows(results), false);
    out
}

pub const REPORT_CSV_HEADER: &str = "table,variant,ripped_f1,ripped_threshold,broken_f1,broken_threshold,ripped_auc,broken_auc,n_normal,n_ripped,n_broken";

/// Machine-readable twin of [`render_report`]; metrics as fractions.
pub fn render_report_csv(results: &ExperimentResults) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for v in &results.variants {
        let table = match v.scheme {
            Scheme::PerAngle(_) => "angle",
            Scheme::PerPower(_) => "power",
            Scheme::All => "all",
        };
        let (r, b) = (&v.reports.ripped, &v.reports.broken);
        let _ = writeln!(
            out,
            "{table},{},{},{},{},{},{},{},{},{},{}",
            v.scheme, r.best_f1, r.best_threshold, b.best_f1, b.best_threshold, r.roc_auc, b.roc_auc, r.n_normal, r.n_abnormal, b.n_abnormal
        );
    }
    out
}

/// Writes report, CSV twin, and per-variant model, scores, split and loss files.
pub fn write_outputs(results: &ExperimentResults, out_dir: &Path, report_path: &Path) -> Result<()> {
    let mk = |d: &Path| fs::create_dir_all(d).map_err(|e| Error::io(d, e));
    for sub in ["models", "scores", "splits", "loss"] {
        mk(&out_dir.join(sub))?;
    }
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        mk(parent)?;
    }
    for v in &results.variants {
        let name = v.scheme.to_string();
        save_model(&v.model, out_dir.join("models").join(format!("{name}.adae")))?;
        write_scores(out_dir.join("scores").join(format!("{name}.csv")), &v.scores)?;
        v.split.write(out_dir.join("splits").join(format!("{name}.csv")))?;
        write_loss_history(out_dir.join("loss").join(format!("{name}.txt")), &v.loss_history)?;
    }
    let write = |p: &Path, s: String| fs::write(p, s).map_err(|e| Error::io(p, e));
    write(report_path, render_report(results))?;
    write(&report_path.with_extension("csv"), render_report_csv(results))
}

pub fn write_loss_history(path: impl AsRef<Path>, history: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let text: String = history.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_formatting() {
        assert_eq!(format_threshold(0.0014), "0.0014");
        assert_eq!(format_threshold(0.04), "0.040");
        assert_eq!(format_threshold(0.011), "0.011");
        assert_eq!(format_threshold(0.01234), "0.012");
        assert_eq!(format_threshold(2.5), "2.5");
        assert_eq!(format_threshold(12.0), "12");
    }

    #[test]
    fn presets_are_defined() {
        let desk = Preset::by_name("desk").unwrap();
        let [normal, abnormal] = desk.synth_specs(1);
        assert_eq!(normal.clip_count(), 480);
        assert_eq!(abnormal.clip_count(), 240);
        let full_scale = Preset::by_name("paper-scale").unwrap();
        let [normal, abnormal] = full_scale.synth_specs(1);
        assert_eq!(normal.clip_count(), 4320);
        assert_eq!(abnormal.clip_count(), 1440);
        assert!(Preset::by_name("huge").is_err());
    }
}
