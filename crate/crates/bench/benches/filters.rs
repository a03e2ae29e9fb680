use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use phasealign::filters::{
    biquad_apf_step, cascade_process, impulse_response, warped_biquad_apf_step, BiquadState,
};
use phasealign::loss::{default_resolutions, MultiResolutionStftLoss};
use phasealign_bench::{sequence_pairs, seventh_order, sweep, FS};

fn sections(c: &mut Criterion) {
    let x = sweep(1.0);
    let mut g = c.benchmark_group("section");
    g.throughput(Throughput::Elements(x.len() as u64));
    g.bench_function("biquad", |b| {
        b.iter(|| {
            let mut s = BiquadState::default();
            x.samples()
                .iter()
                .fold(0.0, |acc, &v| acc + biquad_apf_step(&mut s, 0.64, -1.2, v))
        })
    });
    g.bench_function("warped_biquad", |b| {
        b.iter(|| {
            let mut s = BiquadState::default();
            x.samples().iter().fold(0.0, |acc, &v| {
                acc + warped_biquad_apf_step(&mut s, 0.64, -1.2, 0.3, v).unwrap()
            })
        })
    });
    g.finish();
}

fn cascade(c: &mut Criterion) {
    let cascade = seventh_order();
    let mut g = c.benchmark_group("cascade");
    for seconds in [0.1, 1.0] {
        let x = sweep(seconds);
        g.throughput(Throughput::Elements(x.len() as u64));
        g.bench_with_input(BenchmarkId::new("seventh_order", x.len()), &x, |b, x| {
            b.iter(|| cascade_process(&cascade, black_box(x)).unwrap())
        });
    }
    g.bench_function("impulse_response_8192", |b| {
        let coeffs = cascade.coeffs(FS as f64);
        b.iter(|| impulse_response(black_box(&coeffs), 8192).unwrap())
    });
    g.finish();
}

fn loss(c: &mut Criterion) {
    let (x, y) = sequence_pairs(1);
    let loss = MultiResolutionStftLoss::new(&default_resolutions()).unwrap();
    let mut g = c.benchmark_group("mstft_2048");
    g.bench_function("value", |b| {
        b.iter(|| loss.report(black_box(&y), black_box(&x)).unwrap())
    });
    g.bench_function("value_and_grad", |b| {
        b.iter(|| {
            loss.value_and_grad(black_box(&y[0]), black_box(&x[0]))
                .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, sections, cascade, loss);
criterion_main!(benches);
