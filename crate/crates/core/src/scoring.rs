//! Reconstruction-error anomaly scores and the two detection metrics:
//! ROC AUC (Mann–Whitney, midranks) and best-threshold F1.
//! Abnormal is the positive class throughout.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::autoencoder::{mse_loss, AutoEncoderModel};
use crate::dsp::FeatureVector;
use crate::error::{Error, Result};
use crate::synthgen::Condition;

pub const SCORES_HEADER: [&str; 3] = ["clip_id", "score", "label"];

/// How per-frame errors combine into one clip score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipAggregate {
    #[default]
    Mean,
    Max,
}

impl FromStr for ClipAggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(ClipAggregate::Mean),
            "max" => Ok(ClipAggregate::Max),
            other => Err(Error::InvalidConfig(format!("unknown aggregate {other:?}"))),
        }
    }
}

impl fmt::Display for ClipAggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipAggregate::Mean => "mean",
            ClipAggregate::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredClip {
    pub clip_id: String,
    pub score: f64,
    pub label: Condition,
}

impl ScoredClip {
    pub fn new(clip_id: impl Into<String>, score: f64, label: Condition) -> Result<Self> {
        if !(score.is_finite() && score >= 0.0) {
            return Err(Error::InvalidConfig(format!("score {score} must be finite and >= 0")));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            score,
            label,
        })
    }
}

/// Mean squared error between each feature vector and its reconstruction,
/// averaged over the clip's frames (a single vector in FFT mode).
pub fn anomaly_score(model: &AutoEncoderModel, features: &[FeatureVector]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let mut total = 0.0;
    for x in features {
        total += mse_loss(x.values(), &model.forward(x.values())?)?;
    }
    Ok(total / features.len() as f64)
}

/// Clip score from a frames × dim feature matrix.
pub fn score_matrix(model: &AutoEncoderModel, rows: ArrayView2<f64>, aggregate: ClipAggregate) -> Result<f64> {
    if rows.nrows() == 0 {
        return Err(Error::EmptyFeatures);
    }
    let errors = model.reconstruction_errors(rows)?;
    Ok(match aggregate {
        ClipAggregate::Mean => errors.sum() / errors.len() as f64,
        ClipAggregate::Max => errors.iter().fold(0.0, |m: f64, &e| m.max(e)),
    })
}

fn class_counts(scored: &[ScoredClip]) -> Result<(usize, usize)> {
    let n_abnormal = scored.iter().filter(|s| s.label.is_abnormal()).count();
    let n_normal = scored.len() - n_abnormal;
    if n_normal == 0 || n_abnormal == 0 {
        return Err(Error::SingleClassOnly { n_normal, n_abnormal });
    }
    Ok((n_normal, n_abnormal))
}

fn sorted_by_score(scored: &[ScoredClip]) -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = scored.iter().map(|s| (s.score, s.label.is_abnormal())).collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    v
}

/// Probability that a random abnormal clip outscores a random normal one,
/// ties counting one half, via midrank summation.
pub fn roc_auc(scored: &[ScoredClip]) -> Result<f64> {
    let (n_normal, n_abnormal) = class_counts(scored)?;
    let sorted = sorted_by_score(scored);
    let mut abnormal_rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let abnormal_here = sorted[i..j].iter().filter(|s| s.1).count();
        abnormal_rank_sum += midrank * abnormal_here as f64;
        i = j;
    }
    let na = n_abnormal as f64;
    let u = abnormal_rank_sum - na * (na + 1.0) / 2.0;
    Ok(u / (n_normal as f64 * na))
}

/// F1 with abnormal as positive; zero when precision + recall = 0.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    // 2PR/(P+R) reduced to one rounding
    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
}

/// Threshold candidates: one below the minimum, the midpoints between
/// consecutive distinct scores, and one above the maximum.
pub fn threshold_candidates(scored: &[ScoredClip]) -> Vec<f64> {
    let mut scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    scores.dedup();
    let (Some(&lo), Some(&hi)) = (scores.first(), scores.last()) else {
        return Vec::new();
    };
    std::iter::once(lo - 1.0)
        .chain(scores.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0))
        .chain(std::iter::once(hi + 1.0))
        .collect()
}

/// Maximum F1 over all candidate thresholds (predict abnormal iff
/// `score >= threshold`) and the smallest threshold attaining it.
pub fn best_f1(scored: &[ScoredClip]) -> Result<(f64, f64)> {
    let (_, n_abnormal) = class_counts(scored)?;
    let sorted = sorted_by_score(scored);
    let candidates = threshold_candidates(scored);
    // candidate k predicts abnormal for every clip in distinct-score groups >= k
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    let (mut tp, mut fp) = (n_abnormal, scored.len() - n_abnormal);
    let mut pos = 0;
    for &threshold in &candidates {
        while pos < sorted.len() && sorted[pos].0 < threshold {
            if sorted[pos].1 {
                tp -= 1;
            } else {
                fp -= 1;
            }
            pos += 1;
        }
        let f1 = f1_score(tp, fp, n_abnormal - tp);
        if f1 > best.0 {
            best = (f1, threshold);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub roc_auc: f64,
    pub best_f1: f64,
    pub best_threshold: f64,
    pub n_normal: usize,
    pub n_abnormal: usize,
}

/// Evaluates normal clips against a single abnormal condition.
pub fn eval_report(normal: &[ScoredClip], abnormal: &[ScoredClip]) -> Result<EvalReport> {
    if normal.is_empty() || abnormal.is_empty() {
        return Err(Error::SingleClassOnly {
            n_normal: normal.len(),
            n_abnormal: abnormal.len(),
        });
    }
    if let Some(s) = normal.iter().find(|s| s.label.is_abnormal()) {
        return Err(Error::InvalidConfig(format!("{} in the normal list is {}", s.clip_id, s.label)));
    }
    let condition = abnormal[0].label;
    if let Some(s) = abnormal.iter().find(|s| s.label != condition || !s.label.is_abnormal()) {
        return Err(Error::InvalidConfig(format!(
            "abnormal list mixes {condition} with {} ({})",
            s.label, s.clip_id
        )));
    }
    let all: Vec<ScoredClip> = normal.iter().chain(abnormal).cloned().collect();
    let (f1, threshold) = best_f1(&all)?;
    Ok(EvalReport {
        roc_auc: roc_auc(&all)?,
        best_f1: f1,
        best_threshold: threshold,
        n_normal: normal.len(),
        n_abnormal: abnormal.len(),
    })
}

pub fn scores_to_csv(scored: &[ScoredClip]) -> Result<Vec<u8>> {
    let fail = |e: csv::Error| Error::InvalidConfig(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCORES_HEADER).map_err(fail)?;
    for s in scored {
        w.write_record([s.clip_id.as_str(), &s.score.to_string(), s.label.as_str()])
            .map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn scores_from_csv(bytes: &[u8]) -> Result<Vec<ScoredClip>> {
    let fail = |m: String| Error::InvalidConfig(format!("scores file: {m}"));
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(|e| fail(e.to_string()))?;
    if header.iter().ne(SCORES_HEADER) {
        return Err(fail(format!("unexpected header {header:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| fail(e.to_string()))?;
            let score = rec[1].parse().map_err(|_| fail(format!("bad score {:?}", &rec[1])))?;
            ScoredClip::new(&rec[0], score, rec[2].parse()?)
        })
        .collect()
}

pub fn write_scores(path: impl AsRef<Path>, scored: &[ScoredClip]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scores_to_csv(scored)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{Activation, DenseLayer};
    use ndarray::{Array1, Array2};

    fn scored(scores: &[f64], labels: &[Condition]) -> Vec<ScoredClip> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&s, &l))| ScoredClip::new(format!("c{i}"), s, l).unwrap())
            .collect()
    }

    use Condition::{Broken as A, Normal as N};

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&scored(&[0.1, 0.2, 0.3, 0.4], &[N, N, A, A])).unwrap(), 1.0);
        assert_eq!(roc_auc(&scored(&[0.5; 5], &[N, A, N, A, A])).unwrap(), 0.5);
        assert_eq!(roc_auc(&scored(&[0.1, 0.2, 0.3, 0.4], &[A, A, N, N])).unwrap(), 0.0);
        assert!(matches!(
            roc_auc(&scored(&[0.1, 0.2], &[N, N])),
            Err(Error::SingleClassOnly { n_normal: 2, n_abnormal: 0 })
        ));
    }

    #[test]
    fn f1_examples() {
        let (f1, t) = best_f1(&scored(&[1.0, 2.0, 3.0, 4.0], &[N, N, A, A])).unwrap();
        assert_eq!((f1, t), (1.0, 2.5));
        let (f1, t) = best_f1(&scored(&[1.0, 2.0, 3.0, 4.0], &[A, A, N, N])).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(t < 1.0);
        assert!(best_f1(&scored(&[1.0], &[A])).is_err());
    }

    #[test]
    fn separated_data_scores_one_between_classes() {
        let data = scored(&[0.01, 0.02, 0.03, 0.5, 0.6], &[N, N, N, A, A]);
        for t in [0.031, 0.2, 0.49] {
            let tp = data.iter().filter(|s| s.label.is_abnormal() && s.score >= t).count();
            let fp = data.iter().filter(|s| !s.label.is_abnormal() && s.score >= t).count();
            assert_eq!(f1_score(tp, fp, 2 - tp), 1.0);
        }
        assert_eq!(best_f1(&data).unwrap().0, 1.0);
    }

    #[test]
    fn perfect_detector_report() {
        let normal = scored(&[0.1, 0.2], &[N, N]);
        let abnormal = scored(&[0.8, 0.9], &[A, A]);
        let r = eval_report(&normal, &abnormal).unwrap();
        assert_eq!((r.roc_auc, r.best_f1, r.n_normal, r.n_abnormal), (1.0, 1.0, 2, 2));
        assert!(eval_report(&normal, &[]).is_err());
        let mixed = scored(&[0.8, 0.9], &[A, Condition::Ripped]);
        assert!(eval_report(&normal, &mixed).is_err());
    }

    #[test]
    fn eq1_single_vector() {
        let zero = DenseLayer::new(Array2::zeros((256, 256)), Array1::zeros(256), Activation::Linear).unwrap();
        let model = AutoEncoderModel::from_layers(vec![zero]).unwrap();
        let mut x = vec![0.0; 256];
        x[0] = 1.0;
        let fv = FeatureVector::new(x).unwrap();
        assert_eq!(anomaly_score(&model, &[fv.clone()]).unwrap(), 1.0 / 256.0);
        assert_eq!(anomaly_score(&model, &[fv.clone(), fv.clone(), fv]).unwrap(), 1.0 / 256.0);
        assert!(matches!(anomaly_score(&model, &[]), Err(Error::EmptyFeatures)));
    }

    #[test]
    fn matrix_scoring_agrees_with_vectors() {
        let model = crate::autoencoder::AutoEncoderModel::with_widths(&[8, 4, 8], 3).unwrap();
        let rows = Array2::from_shape_fn((5, 8), |(i, j)| ((i * 8 + j) % 7) as f64 / 7.0);
        let vectors: Vec<FeatureVector> = rows.outer_iter().map(|r| FeatureVector::new(r.to_vec()).unwrap()).collect();
        let a = anomaly_score(&model, &vectors).unwrap();
        let b = score_matrix(&model, rows.view(), ClipAggregate::Mean).unwrap();
        assert!((a - b).abs() < 1e-12);
        let max = score_matrix(&model, rows.view(), ClipAggregate::Max).unwrap();
        assert!(max >= b);
    }

    #[test]
    fn scores_csv_round_trip() {
        let s = scored(&[0.0, 0.012345678901234, 3.0], &[N, Condition::Ripped, A]);
        let bytes = scores_to_csv(&s).unwrap();
        assert!(bytes.starts_with(b"clip_id,score,label\n"));
        assert_eq!(scores_from_csv(&bytes).unwrap(), s);
    }

    #[test]
    fn negative_scores_rejected() {
        assert!(ScoredClip::new("x", -1.0, N).is_err());
        assert!(ScoredClip::new("x", f64::NAN, N).is_err());
    }
}
