//! Test-signal synthesis: exponential sine sweep plus a few kinds of
//! program-like material for held-out evaluation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Signal;
use crate::error::{Error, Result};

/// Exponential (log-frequency) sine sweep
/// `x(t) = A sin(2 pi f1 L (exp(t / L) - 1))` with `L = T / ln(f2 / f1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSweep {
    pub f1: f64,
    pub f2: f64,
    pub duration: f64,
    pub amplitude: f64,
}

impl LogSweep {
    pub fn new(f1: f64, f2: f64, duration: f64, amplitude: f64) -> Result<Self> {
        if !(f1 > 0.0 && f1 < f2 && f2.is_finite()) {
            return Err(Error::param(format!(
                "sweep requires 0 < f1 < f2, got f1={f1}, f2={f2}"
            )));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::param(format!(
                "sweep duration must be positive, got {duration}"
            )));
        }
        if !amplitude.is_finite() {
            return Err(Error::param("sweep amplitude must be finite"));
        }
        Ok(LogSweep {
            f1,
            f2,
            duration,
            amplitude,
        })
    }

    fn rate_constant(&self) -> f64 {
        self.duration / (self.f2 / self.f1).ln()
    }

    /// Phase in radians at time `t`.
    pub fn phase(&self, t: f64) -> f64 {
        let l = self.rate_constant();
        2.0 * PI * self.f1 * l * ((t / l).exp() - 1.0)
    }

    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f1 * (t / self.rate_constant()).exp()
    }

    pub fn render(&self, sample_rate: u32) -> Result<Signal> {
        if sample_rate == 0 {
            return Err(Error::param("sample rate must be positive"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if self.f2 >= nyquist {
            return Err(Error::param(format!(
                "sweep end frequency {} Hz is not below Nyquist ({nyquist} Hz)",
                self.f2
            )));
        }
        let n = (self.duration * sample_rate as f64).round() as usize;
        let fs = sample_rate as f64;
        let samples = (0..n)
            .map(|i| self.amplitude * self.phase(i as f64 / fs).sin())
            .collect();
        Signal::new(samples, sample_rate)
    }
}

pub fn generate_log_sweep(
    f1: f64,
    f2: f64,
    duration: f64,
    sample_rate: u32,
    amplitude: f64,
) -> Result<Signal> {
    LogSweep::new(f1, f2, duration, amplitude)?.render(sample_rate)
}

/// Sum of sines with seeded random phases, scaled to `peak`.
pub fn multitone(
    freqs: &[f64],
    duration: f64,
    sample_rate: u32,
    peak: f64,
    seed: u64,
) -> Result<Signal> {
    if freqs.is_empty() {
        return Err(Error::Empty("multitone needs at least one frequency"));
    }
    let fs = sample_rate as f64;
    if let Some(f) = freqs.iter().find(|&&f| !(f > 0.0 && f < fs / 2.0)) {
        return Err(Error::param(format!("tone at {f} Hz outside (0, fs/2)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = freqs.iter().map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let n = (duration * fs).round() as usize;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            freqs
                .iter()
                .zip(&phases)
                .map(|(f, p)| (2.0 * PI * f * t + p).sin())
                .sum()
        })
        .collect();
    normalize(&mut samples, peak);
    Signal::new(samples, sample_rate)
}

/// Log-spaced tone set between `lo` and `hi`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (ratio * i as f64).exp()).collect()
}

/// Uniform white-noise bursts of `burst` seconds separated by `gap` seconds
/// of silence.
pub fn noise_bursts(
    duration: f64,
    burst: f64,
    gap: f64,
    sample_rate: u32,
    peak: f64,
    seed: u64,
) -> Result<Signal> {
    if burst <= 0.0 || gap < 0.0 {
        return Err(Error::param("burst must be positive and gap non-negative"));
    }
    let fs = sample_rate as f64;
    let n = (duration * fs).round() as usize;
    let period = ((burst + gap) * fs).round().max(1.0) as usize;
    let on = (burst * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            if i % period < on {
                peak * rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    Signal::new(samples, sample_rate)
}

/// Karplus-Strong plucked string, one note every `note_len` seconds
/// cycling through `freqs`.
pub fn plucked_string(
    freqs: &[f64],
    note_len: f64,
    sample_rate: u32,
    peak: f64,
    seed: u64,
) -> Result<Signal> {
    if freqs.is_empty() {
        return Err(Error::Empty("plucked_string needs at least one frequency"));
    }
    let fs = sample_rate as f64;
    let note_samples = (note_len * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(note_samples * freqs.len());
    for &f in freqs {
        let period = (fs / f).round().max(2.0) as usize;
        let mut line: Vec<f64> = (0..period).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut pos = 0;
        for _ in 0..note_samples {
            let next = (pos + 1) % period;
            let out = line[pos];
            line[pos] = 0.996 * 0.5 * (line[pos] + line[next]);
            samples.push(out);
            pos = next;
        }
    }
    normalize(&mut samples, peak);
    Signal::new(samples, sample_rate)
}

fn normalize(samples: &mut [f64], peak: f64) {
    let m = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if m > 0.0 {
        let k = peak / m;
        samples.iter_mut().for_each(|s| *s *= k);
    }
}
