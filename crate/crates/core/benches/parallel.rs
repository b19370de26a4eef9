//! Sequential vs data-parallel execution on the hot paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ctl_core::codec::TokenId;
use ctl_core::grammar::{GrammarSpec, SampleParams, TARGET};
use ctl_core::lm::{Model, ModelConfig};
use ctl_core::par::Execution;
use ctl_core::synth::{encode_lines, synth_sessions};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn loss_and_grad(c: &mut Criterion) {
    let config = ModelConfig::custom(2, 4, 64, 256, 128, 300);
    let model = Model::init(config, 7).unwrap();
    let windows: Vec<Vec<TokenId>> = (0..8)
        .map(|b| (0..128).map(|t| ((b * 31 + t * 7) % 298 + 2) as TokenId).collect())
        .collect();
    let batch: Vec<&[TokenId]> = windows.iter().map(Vec::as_slice).collect();
    let mut group = c.benchmark_group("loss_and_grad");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.loss_and_grad(&batch, exec).unwrap())
        });
    }
    group.finish();
}

fn synth_and_encode(c: &mut Criterion) {
    let spec = GrammarSpec::builtin(TARGET).unwrap();
    let params = SampleParams::default();
    let mut group = c.benchmark_group("synth_encode_2000");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                let sessions = synth_sessions(&spec, 2000, 3, &params, exec).unwrap();
                encode_lines(&sessions, &spec, exec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, loss_and_grad, synth_and_encode);
criterion_main!(benches);
