use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use propcrack::audio_io::AudioClip;
use propcrack::dsp::{clip_feature_matrix, DspConfig, FeatureMode};
use propcrack::par::{self, Execution};
use propcrack::synthgen::{synth_clip, Condition, RecordingVariable};

const CLIPS: usize = 24;

fn variables() -> Vec<RecordingVariable> {
    RecordingVariable::grid(Condition::Normal)
}

fn strategies() -> Vec<Execution> {
    if Execution::parallel_available() {
        vec![Execution::Sequential, Execution::Parallel]
    } else {
        vec![Execution::Sequential]
    }
}

fn bench_synthesis(c: &mut Criterion) {
    let vars = variables();
    let mut group = c.benchmark_group("synthesis");
    group.sample_size(10);
    for exec in strategies() {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| par::map_range(exec, CLIPS, |i| synth_clip(&vars[i % vars.len()], 1.0, i as u64).unwrap()))
        });
    }
    group.finish();
}

fn bench_features(c: &mut Criterion) {
    let vars = variables();
    let clips: Vec<AudioClip> = (0..CLIPS)
        .map(|i| synth_clip(&vars[i % vars.len()], 1.0, i as u64).unwrap())
        .collect();
    let cfg = DspConfig::default();
    let mut group = c.benchmark_group("stft_features");
    group.sample_size(10);
    for exec in strategies() {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| par::map(exec, &clips, |clip| clip_feature_matrix(clip, &cfg, FeatureMode::Stft).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_synthesis, bench_features);
criterion_main!(benches);
