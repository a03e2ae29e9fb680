//! Phase-sensitive training losses.
//!
//! The interference loss compares the sum of two spectrograms with the
//! spectrogram of the summed signals,
//!
//! `D = S(y) + S(y_hat) - S(y + y_hat)`,
//!
//! and averages `D^2` over all time-frequency cells. With magnitude
//! spectrograms (`power = 1`) the triangle inequality makes `D >= 0`, with
//! equality exactly where the two signals are in phase. `power = 2` is the
//! squared-magnitude form; its per-cell minimum sits at quadrature rather
//! than at alignment and is kept for comparison.
//!
//! Gradients with respect to the prediction are computed analytically
//! (an inverse FFT per frame) and registered on the tape as a single fused
//! node.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of `len` samples.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|m| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * m as f64 / len as f64).cos())
                .collect(),
        }
    }
}

fn default_power() -> u8 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub win_length: usize,
    #[serde(default)]
    pub window: Window,
    /// Exponent applied to the STFT magnitude: 1 or 2.
    #[serde(default = "default_power")]
    pub power: u8,
}

impl StftConfig {
    pub const fn new(fft_size: usize, hop: usize, win_length: usize) -> Self {
        StftConfig {
            fft_size,
            hop,
            win_length,
            window: Window::Hann,
            power: 1,
        }
    }

    pub fn with_power(mut self, power: u8) -> Self {
        self.power = power;
        self
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.hop == 0 || self.win_length == 0 {
            return Err(Error::config("STFT sizes must be positive"));
        }
        if self.win_length > self.fft_size {
            return Err(Error::config(format!(
                "window length {} exceeds FFT size {}",
                self.win_length, self.fft_size
            )));
        }
        if !matches!(self.power, 1 | 2) {
            return Err(Error::config(format!(
                "spectrogram power must be 1 or 2, got {}",
                self.power
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `1 + floor((len - win) / hop)`, or `None` if the signal is shorter
    /// than one window.
    pub fn frames(&self, len: usize) -> Option<usize> {
        (len >= self.win_length).then(|| 1 + (len - self.win_length) / self.hop)
    }
}

/// The three default resolutions (FFT size, hop, window).
pub fn default_resolutions() -> Vec<StftConfig> {
    vec![
        StftConfig::new(512, 50, 240),
        StftConfig::new(1024, 120, 600),
        StftConfig::new(2048, 240, 1200),
    ]
}

/// Row-major `frames x bins` matrix of `|STFT|^power`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }
}

/// Planned STFT for one resolution. Cheap to share between threads.
#[derive(Clone)]
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Stft {
            window: cfg.window.coefficients(cfg.win_length),
            forward: planner.plan_fft_forward(cfg.fft_size),
            inverse: planner.plan_fft_inverse(cfg.fft_size),
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    fn frame_count(&self, len: usize) -> Result<usize> {
        self.cfg.frames(len).ok_or_else(|| {
            Error::param(format!(
                "signal of {len} samples is shorter than one window ({})",
                self.cfg.win_length
            ))
        })
    }

    fn pad_offset(&self) -> usize {
        (self.cfg.fft_size - self.cfg.win_length) / 2
    }

    /// One-sided complex STFT, `frames x bins`.
    pub fn complex(&self, x: &[f64]) -> Result<Vec<Complex<f64>>> {
        let frames = self.frame_count(x.len())?;
        let (n, bins, off) = (self.cfg.fft_size, self.cfg.bins(), self.pad_offset());
        let mut out = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * self.cfg.hop;
            buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
            for (m, w) in self.window.iter().enumerate() {
                buf[off + m] = Complex::new(w * x[start + m], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            out.extend_from_slice(&buf[..bins]);
        }
        Ok(out)
    }

    pub fn spectrogram(&self, x: &[f64]) -> Result<Spectrogram> {
        let frames = self.frame_count(x.len())?;
        let p = self.cfg.power;
        let data = self
            .complex(x)?
            .into_iter()
            .map(|z| magnitude_pow(z, p))
            .collect();
        Ok(Spectrogram {
            frames,
            bins: self.cfg.bins(),
            data,
        })
    }

    /// Interference loss of one item and, optionally, its gradient with
    /// respect to `prediction`.
    pub fn interference(
        &self,
        target: &[f64],
        prediction: &[f64],
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        check_lengths(target, prediction)?;
        let frames = self.frame_count(target.len())?;
        let sum: Vec<f64> = target.iter().zip(prediction).map(|(a, b)| a + b).collect();
        let ty = self.complex(target)?;
        let tp = self.complex(prediction)?;
        let tz = self.complex(&sum)?;
        let p = self.cfg.power;
        let bins = self.cfg.bins();
        let cells = (frames * bins) as f64;

        let diffs: Vec<f64> = (0..ty.len())
            .map(|i| magnitude_pow(ty[i], p) + magnitude_pow(tp[i], p) - magnitude_pow(tz[i], p))
            .collect();
        let loss = diffs.iter().map(|d| d * d).sum::<f64>() / cells;
        if !want_grad {
            return Ok((loss, None));
        }

        let n = self.cfg.fft_size;
        let off = self.pad_offset();
        let mut grad = vec![0.0; target.len()];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let pf = p as f64;
        for t in 0..frames {
            buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
            for k in 0..bins {
                let i = t * bins + k;
                let scale = 2.0 * diffs[i] * pf / cells;
                buf[k] = (magnitude_pow_grad(tp[i], p) - magnitude_pow_grad(tz[i], p)) * scale;
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * self.cfg.hop;
            for (m, w) in self.window.iter().enumerate() {
                grad[start + m] += w * buf[off + m].re;
            }
        }
        Ok((loss, Some(grad)))
    }
}

#[inline]
fn magnitude_pow(z: Complex<f64>, power: u8) -> f64 {
    match power {
        1 => z.norm(),
        _ => z.norm_sqr(),
    }
}

/// `|z|^(p - 2) z`, the complex direction of `d|z|^p / p`.
#[inline]
fn magnitude_pow_grad(z: Complex<f64>, power: u8) -> Complex<f64> {
    match power {
        1 => {
            let m = z.norm();
            if m > 1e-300 {
                z / m
            } else {
                Complex::new(0.0, 0.0)
            }
        }
        _ => z,
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "target and prediction",
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn check_batch(y: &[Vec<f64>], y_hat: &[Vec<f64>]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            what: "batch sizes",
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("loss over an empty batch"));
    }
    Ok(())
}

pub fn spectrogram(x: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg)?.spectrogram(x)
}

/// Mean over batch items of the per-item interference loss.
pub fn interference_stft_loss(y: &[Vec<f64>], y_hat: &[Vec<f64>], cfg: &StftConfig) -> Result<f64> {
    check_batch(y, y_hat)?;
    let stft = Stft::new(*cfg)?;
    let mut total = 0.0;
    for (a, b) in y.iter().zip(y_hat) {
        total += stft.interference(a, b, false)?.0;
    }
    Ok(total / y.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub per_resolution: Vec<f64>,
    /// Batch size the loss was averaged over.
    pub n: usize,
}

/// Mean of interference losses over several STFT resolutions.
#[derive(Clone, Debug)]
pub struct MultiResolutionStftLoss {
    stfts: Vec<Stft>,
}

impl MultiResolutionStftLoss {
    pub fn new(resolutions: &[StftConfig]) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::Empty(
                "multi-resolution loss needs at least one resolution",
            ));
        }
        let stfts = resolutions
            .iter()
            .map(|c| Stft::new(*c))
            .collect::<Result<_>>()?;
        Ok(MultiResolutionStftLoss { stfts })
    }

    pub fn resolutions(&self) -> Vec<StftConfig> {
        self.stfts.iter().map(|s| *s.config()).collect()
    }

    pub fn report(&self, y: &[Vec<f64>], y_hat: &[Vec<f64>]) -> Result<LossReport> {
        check_batch(y, y_hat)?;
        let n = y.len() as f64;
        let mut per_resolution = Vec::with_capacity(self.stfts.len());
        for stft in &self.stfts {
            let mut total = 0.0;
            for (a, b) in y.iter().zip(y_hat) {
                total += stft.interference(a, b, false)?.0;
            }
            per_resolution.push(total / n);
        }
        let loss = per_resolution.iter().sum::<f64>() / per_resolution.len() as f64;
        Ok(LossReport {
            loss,
            per_resolution,
            n: y.len(),
        })
    }

    /// Loss of a single item with its gradient.
    pub fn value_and_grad(&self, target: &[f64], prediction: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.stfts.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; prediction.len()];
        for stft in &self.stfts {
            let (l, g) = stft.interference(target, prediction, true)?;
            loss += l;
            for (acc, v) in grad.iter_mut().zip(g.expect("gradient requested")) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|g| *g /= m);
        Ok((loss / m, grad))
    }
}

pub fn mstft_loss(
    y: &[Vec<f64>],
    y_hat: &[Vec<f64>],
    resolutions: &[StftConfig],
) -> Result<LossReport> {
    MultiResolutionStftLoss::new(resolutions)?.report(y, y_hat)
}

/// Mean squared sample difference.
pub fn mse_time_loss(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if y.is_empty() {
        return Err(Error::Empty("mse of empty signals"));
    }
    Ok(y.iter()
        .zip(y_hat)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        / y.len() as f64)
}

fn mse_value_and_grad(target: &[f64], prediction: &[f64]) -> Result<(f64, Vec<f64>)> {
    let loss = mse_time_loss(target, prediction)?;
    let k = 2.0 / target.len() as f64;
    let grad = target
        .iter()
        .zip(prediction)
        .map(|(a, b)| k * (b - a))
        .collect();
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mstft,
    Mse,
}

/// Per-sequence training objective.
#[derive(Clone, Debug)]
pub enum SequenceLoss {
    Mstft(MultiResolutionStftLoss),
    Mse,
}

impl SequenceLoss {
    pub fn new(kind: LossKind, resolutions: &[StftConfig]) -> Result<Self> {
        match kind {
            LossKind::Mse => Ok(SequenceLoss::Mse),
            LossKind::Mstft => Ok(SequenceLoss::Mstft(MultiResolutionStftLoss::new(
                resolutions,
            )?)),
        }
    }

    pub fn value(&self, target: &[f64], prediction: &[f64]) -> Result<f64> {
        match self {
            SequenceLoss::Mse => mse_time_loss(target, prediction),
            SequenceLoss::Mstft(m) => {
                let mut total = 0.0;
                for stft in &m.stfts {
                    total += stft.interference(target, prediction, false)?.0;
                }
                Ok(total / m.stfts.len() as f64)
            }
        }
    }

    pub fn value_and_grad(&self, target: &[f64], prediction: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            SequenceLoss::Mse => mse_value_and_grad(target, prediction),
            SequenceLoss::Mstft(m) => m.value_and_grad(target, prediction),
        }
    }

    /// Records the loss of `prediction` against a constant target as one
    /// fused node.
    pub fn on_tape<'t>(
        &self,
        tape: &'t Tape,
        target: &[f64],
        prediction: &[Var<'t>],
    ) -> Result<Var<'t>> {
        let values: Vec<f64> = prediction.iter().map(|v| v.value()).collect();
        let (loss, grad) = self.value_and_grad(target, &values)?;
        Ok(tape.custom(prediction, loss, &grad))
    }
}
