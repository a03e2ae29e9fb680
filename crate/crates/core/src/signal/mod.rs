//! Mono signals, test-signal synthesis, WAV I/O and sequence framing.

mod frame;
pub mod synth;
mod wav;

pub use frame::{frame, SequenceBatch};
pub use synth::{generate_log_sweep, LogSweep};
pub use wav::{read_wav, read_wav_with_info, write_wav, BitDepth, WavInfo};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mono buffer of samples with its sample rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    /// Fails if the rate is zero or any sample is NaN/Inf.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::param("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::param(format!("non-finite sample at index {i}")));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    /// Unit impulse of `len` samples.
    pub fn impulse(len: usize, sample_rate: u32) -> Result<Self> {
        let mut samples = vec![0.0; len];
        if let Some(s) = samples.first_mut() {
            *s = 1.0;
        }
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        Signal {
            samples,
            sample_rate,
        }
    }
}
