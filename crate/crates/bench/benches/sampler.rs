use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lspm_core::init::{base_initialization, classical_mds, state_from_base};
use lspm_core::model::log_likelihood;
use lspm_core::network::geodesic_distances;
use lspm_core::postprocess::procrustes_transform;
use lspm_core::sampler::{ChainSampler, SamplerConfig};
use lspm_core::simulate::simulate_network;
use lspm_core::{EdgeKind, Hyperparams, Link, ModelParams, SimulatedNetwork};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn network(n: usize, kind: EdgeKind) -> SimulatedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alpha = if kind == EdgeKind::Binary { 3.0 } else { 1.0 };
    simulate_network(n, &[0.5, 1.1], alpha, kind, false, &mut rng).unwrap()
}

fn likelihood(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_likelihood");
    for (kind, link) in [(EdgeKind::Binary, Link::Logit), (EdgeKind::Count, Link::Log)] {
        let sim = network(100, kind);
        let params = ModelParams { alpha: 1.0, link };
        group.bench_function(format!("{link:?} n=100"), |b| b.iter(|| log_likelihood(&sim.network, &sim.z_true, &params).unwrap()));
    }
    group.finish();
}

fn sampler_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampler_sweep");
    for n in [50, 100] {
        let sim = network(n, EdgeKind::Binary);
        let hp = Hyperparams::with_dims(5);
        let base = base_initialization(&sim.network, &hp, Link::Logit, 1.5).unwrap();
        let cfg = SamplerConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = state_from_base(&sim.network, &base, Link::Logit, 0.0, &mut rng).unwrap();
        let mut sampler = ChainSampler::new(&sim.network, &hp, &cfg, state).unwrap();
        group.bench_function(format!("n={n} p=5"), |b| b.iter(|| sampler.step(&mut rng).unwrap()));
    }
    group.finish();
}

fn initialization(c: &mut Criterion) {
    let sim = network(100, EdgeKind::Binary);
    let geo = geodesic_distances(&sim.network);
    c.bench_function("geodesic_distances n=100", |b| b.iter(|| geodesic_distances(&sim.network)));
    c.bench_function("classical_mds n=100 p=5", |b| b.iter(|| classical_mds(&geo, 5).unwrap()));
    let hp = Hyperparams::with_dims(5);
    c.bench_function("base_initialization n=100 p=5", |b| {
        b.iter(|| base_initialization(&sim.network, &hp, Link::Logit, 1.5).unwrap())
    });
}

fn procrustes(c: &mut Criterion) {
    let sim = network(100, EdgeKind::Binary);
    let other = network(100, EdgeKind::Count);
    c.bench_function("procrustes_transform n=100 p=2", |b| {
        b.iter_batched(|| other.z_true.clone(), |z| procrustes_transform(&z, &sim.z_true).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, likelihood, sampler_sweep, initialization, procrustes);
criterion_main!(benches);
