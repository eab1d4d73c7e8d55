//! Data-parallel map against the sequential baseline on two workloads: the
//! Monte Carlo minimum-distance experiment split into chunks, and whole
//! training seeds. Build with `--no-default-features` to see the parallel
//! entry point fall back to the sequential path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmq_core::harness::{run_seed, ExperimentConfig};
use mmq_core::{par, SimRng};
use rand::{Rng, SeedableRng};

const CHUNK: usize = 4096;

/// One chunk of `min_k |x_k − c|` draws with `x_k ~ U(−1, 1)`.
fn mc_chunk(i: usize, m: usize, c: f64) -> f64 {
    let mut rng = SimRng::seed_from_u64(i as u64);
    let mut sum = 0.0;
    for _ in 0..CHUNK {
        let mut best = f64::INFINITY;
        for _ in 0..m {
            best = best.min((rng.random_range(-1.0..1.0) - c).abs());
        }
        sum += best;
    }
    sum
}

fn bench_mc(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc_min_distance");
    for chunks in [8usize, 64] {
        group.bench_with_input(BenchmarkId::new("parallel", chunks), &chunks, |b, &n| {
            b.iter(|| black_box(par::map_indexed(n, |i| mc_chunk(i, 15, 0.5))))
        });
        group.bench_with_input(BenchmarkId::new("sequential", chunks), &chunks, |b, &n| {
            b.iter(|| black_box(par::map_indexed_seq(n, |i| mc_chunk(i, 15, 0.5))))
        });
    }
    group.finish();
}

fn bench_seeds(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse(&format!(
        "env.name = dg\nalgo.name = iddpg\nalgo.hidden = 16,16\nalgo.pretrain_steps = 200\n\
         algo.batch_size = 32\nalgo.critic_ratio = 1\nrun.total_steps = 600\nrun.eval_interval = 600\n\
         run.eval_episodes = 1\nrun.output_dir = {}\n",
        dir.path().display()
    ))
    .unwrap();
    let seeds: Vec<u64> = (0..4).collect();
    let mut group = c.benchmark_group("training_seeds");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(par::map_slice(&seeds, |&s| run_seed(&cfg, s).unwrap().points.len())))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(par::map_indexed_seq(seeds.len(), |i| run_seed(&cfg, seeds[i]).unwrap().points.len())))
    });
    group.finish();
}

criterion_group!(benches, bench_mc, bench_seeds);
criterion_main!(benches);
