//! Sequential vs. rayon throughput for the data-parallel stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mglstm::features::{extract_batch, FeatureSequence, FrameJob, GridExtractor, ProposalId};
use mglstm::glimpse::{build_glimpse_set, GlimpseConfig};
use mglstm::imaging::CameraIntrinsics;
use mglstm::nnet::{Model, Variant};
use mglstm::proposals::{generate_proposals, generate_proposals_batch, ProposalParams};
use mglstm::rng::SplitMix64;
use mglstm::synth::{render_scene, Scene, SceneDistribution};
use mglstm::training::{batch_gradient, Sample};
use mglstm::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn scenes(n: usize) -> (CameraIntrinsics, Vec<Scene>) {
    let k = CameraIntrinsics::default();
    let dist = SceneDistribution::default();
    let mut rng = SplitMix64::new(11);
    let scenes =
        (0..n).map(|_| render_scene(&dist.sample(&k, &mut rng), &k, dist.width, dist.height).unwrap()).collect();
    (k, scenes)
}

fn bench_proposals(c: &mut Criterion) {
    let (k, scenes) = scenes(8);
    let maps: Vec<_> = scenes.iter().map(|s| s.depth.clone()).collect();
    let params = ProposalParams::default();
    let mut g = c.benchmark_group("proposals");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(generate_proposals_batch(&maps, &k, &params, exec)))
        });
    }
    g.finish();
}

fn bench_extraction(c: &mut Criterion) {
    let (k, scenes) = scenes(4);
    let cfg = GlimpseConfig::default();
    let sets: Vec<Vec<_>> = scenes
        .iter()
        .map(|s| {
            generate_proposals(&s.depth, &k, &ProposalParams::default())
                .iter()
                .map(|p| build_glimpse_set(p, &k, s.depth.bounds(), &cfg).unwrap())
                .collect()
        })
        .collect();
    let jobs: Vec<FrameJob> = scenes
        .iter()
        .zip(&sets)
        .enumerate()
        .map(|(i, (s, sets))| FrameJob { image: i as u32, color: &s.color, depth: &s.depth, sets })
        .collect();
    let ex = GridExtractor { grid: 16 };
    let mut g = c.benchmark_group("extraction");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(extract_batch(&jobs, &ex, exec).unwrap()))
        });
    }
    g.finish();
}

fn bench_gradients(c: &mut Criterion) {
    let (steps, dim, hidden) = (9, 64, 32);
    let mut rng = SplitMix64::new(3);
    let seqs: Vec<FeatureSequence> = (0..64)
        .map(|i| {
            let color = (0..steps * dim).map(|_| rng.normal() as f32).collect();
            let depth = (0..steps * dim).map(|_| rng.normal() as f32).collect();
            let id = ProposalId { image: 0, proposal: i };
            FeatureSequence::new(id, Some(i % 4 == 0), steps, dim, color, depth).unwrap()
        })
        .collect();
    let samples: Vec<Sample> = seqs.iter().map(|s| Sample { seq: s, label: s.label.unwrap() }).collect();
    let mut g = c.benchmark_group("batch_gradient");
    g.sample_size(10);
    for variant in [Variant::Concat, Variant::Fusion] {
        let model = Model::init(variant, dim, hidden, &mut rng);
        for (name, exec) in MODES {
            let id = BenchmarkId::new(format!("{variant:?}").to_lowercase(), name);
            g.bench_with_input(id, &exec, |b, &exec| {
                b.iter(|| black_box(batch_gradient(&model, &samples, exec).unwrap()))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench_proposals, bench_extraction, bench_gradients);
criterion_main!(benches);
