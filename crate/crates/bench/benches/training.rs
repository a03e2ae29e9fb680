use criterion::{criterion_group, criterion_main, Criterion};
use phasealign::filters::default_order_spec;
use phasealign::loss::{default_resolutions, LossKind, SequenceLoss};
use phasealign::nn::{
    biasnet_param_count, BiasNet, BiasNetArch, Bounds, Layout, Model, WarpMode, DEFAULT_HIDDEN,
};
use phasealign::train::GradientEngine;
use phasealign_bench::{sequence_pairs, FS};
use rand::SeedableRng;

fn layout() -> Layout {
    Layout::new(
        default_order_spec(),
        WarpMode::PerSection,
        Bounds::default(),
    )
    .unwrap()
}

fn forward(c: &mut Criterion) {
    let arch = BiasNetArch::new(11);
    let net = BiasNet::init(&arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
    assert_eq!(
        net.param_count(),
        biasnet_param_count(1, &DEFAULT_HIDDEN, 11)
    );
    c.bench_function("biasnet_forward", |b| b.iter(|| net.forward()));
}

fn gradient_step(c: &mut Criterion) {
    let (x, y) = sequence_pairs(8);
    let pairs: Vec<(&[f64], &[f64])> = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (a.as_slice(), b.as_slice()))
        .collect();
    let mut g = c.benchmark_group("batch8_gradient");
    g.sample_size(10);
    for kind in [LossKind::Mse, LossKind::Mstft] {
        let loss = SequenceLoss::new(kind, &default_resolutions()).unwrap();
        for threads in [1, 0] {
            let engine = GradientEngine::new(loss.clone(), FS as f64, threads).unwrap();
            let tag = format!(
                "{kind:?}_{}",
                if threads == 1 { "single" } else { "parallel" }
            );
            let naive = Model::naive(layout());
            g.bench_function(format!("naive_{tag}"), |b| {
                b.iter(|| engine.model_grads(&naive, &pairs).unwrap())
            });
            let connected = Model::connected(layout(), &DEFAULT_HIDDEN, 30.0, 0);
            g.bench_function(format!("connected_{tag}"), |b| {
                b.iter(|| engine.model_grads(&connected, &pairs).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, forward, gradient_step);
criterion_main!(benches);
