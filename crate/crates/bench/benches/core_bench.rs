use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use orbit_prestore::ac::{self, Advantage, Selection};
use orbit_prestore::env::Env;
use orbit_prestore::nn::{self, DenseNet};
use orbit_prestore::seed::SeedStream;
use orbit_prestore_bench::Fixture;

fn env_benches(c: &mut Criterion) {
    let fx = Fixture::new("desk", 1);
    let env = Env::new(&fx.graph, &fx.requests, fx.cfg.env_config()).unwrap();
    c.bench_function("desk/rollout", |b| {
        let mut rng = SeedStream::new(3).rng();
        b.iter(|| ac::rollout(black_box(&fx.agents), &env, Selection::Sample, &mut rng).unwrap())
    });
    let traj = ac::rollout(&fx.agents, &env, Selection::Sample, &mut SeedStream::new(4).rng()).unwrap();
    c.bench_function("desk/vd_update", |b| {
        b.iter(|| {
            let adv = ac::advantages(Advantage::Joint, &fx.agents, &traj, 0.99);
            ac::update_all(black_box(&fx.agents), &traj, &adv, 1e-3, 1e-3)
        })
    });
    c.bench_function("desk/train_10_epochs", |b| {
        let cfg = fx.train_config(10);
        b.iter(|| ac::train_vdac(&env, &cfg, black_box(&fx.agents)).unwrap())
    });
}

fn net_benches(c: &mut Criterion) {
    let mut rng = SeedStream::new(7).rng();
    let net = DenseNet::init(&[14, 100, 100, 11], &mut rng).unwrap();
    let rows: Vec<Vec<f64>> = (0..30).map(|i| (0..14).map(|j| ((i * 14 + j) % 5) as f64 * 0.2).collect()).collect();
    c.bench_function("net/forward_backward_30x100x100", |b| {
        b.iter_batched(
            || nn::batch(&rows, 14),
            |x| {
                let cache = net.forward_batch(x);
                let up = cache.output().clone();
                net.backward(&cache, &up)
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, env_benches, net_benches);
criterion_main!(benches);
