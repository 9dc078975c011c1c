//! Acoustic crack detection for drone propellers.
//!
//! The pipeline reads (or synthesizes) 48 kHz mono recordings, turns each
//! clip into normalized mel-band features (one global FFT spectrum per clip,
//! or one vector per STFT frame), trains a dense autoencoder on normal clips
//! only, and ranks test clips by reconstruction error. Detection quality is
//! summarized as ROC AUC and best-threshold F1, separately for ripped and
//! broken blades.
//!
//! Modules follow the pipeline order:
//! [`audio_io`] → [`synthgen`] → [`dsp`] → [`autoencoder`] → [`scoring`],
//! with [`dataset`] handling manifests and splits and [`experiment`] running
//! the eleven-variant sweep.

pub mod audio_io;
pub mod autoencoder;
pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod par;
pub mod scoring;
pub mod synthgen;

pub use audio_io::{read_wav, segment, write_wav, AudioClip};
pub use autoencoder::{init_model, load_model, mse_loss, save_model, train, AutoEncoderModel, TrainConfig};
pub use dataset::{build_manifest, split, Manifest, ManifestEntry, Scheme, Split};
pub use dsp::{clip_features_fft, clip_features_stft, DspConfig, FeatureMode, FeatureVector};
pub use error::{Error, Result};
pub use par::Execution;
pub use scoring::{anomaly_score, best_f1, eval_report, roc_auc, EvalReport, ScoredClip};
pub use synthgen::{synth_clip, synth_dataset, Condition, RecordingVariable, SynthSpec};
