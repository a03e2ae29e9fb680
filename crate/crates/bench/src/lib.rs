//! Shared fixtures for the benchmarks under `benches/`.

use phasealign::filters::{Cascade, CascadeSection};
use phasealign::signal::generate_log_sweep;
use phasealign::Signal;

pub const FS: u32 = 48_000;

/// Three warped biquads and a warped first-order section.
pub fn seventh_order() -> Cascade {
    Cascade::new(vec![
        CascadeSection::second(0.8, 300.0, Some(0.1)).unwrap(),
        CascadeSection::second(0.6, 2_000.0, Some(-0.2)).unwrap(),
        CascadeSection::second(0.7, 6_000.0, Some(0.05)).unwrap(),
        CascadeSection::first(0.3, Some(0.1)).unwrap(),
    ])
    .unwrap()
}

pub fn sweep(seconds: f64) -> Signal {
    generate_log_sweep(20.0, 20_000.0, seconds, FS, 0.5).unwrap()
}

/// `count` consecutive 2048-sample windows of a sweep and of its filtered
/// version.
pub fn sequence_pairs(count: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let x = sweep(count as f64 * 2048.0 / FS as f64 + 0.01);
    let y = phasealign::filters::cascade_process(&seventh_order(), &x).unwrap();
    let cut = |s: &Signal| -> Vec<Vec<f64>> {
        s.samples()
            .chunks_exact(2048)
            .take(count)
            .map(<[f64]>::to_vec)
            .collect()
    };
    (cut(&x), cut(&y))
}
