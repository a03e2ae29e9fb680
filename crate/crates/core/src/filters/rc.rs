use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// First-order RC low-pass discretized with the bilinear transform:
///
/// `y[n] = (rho (x[n] + x[n-1]) + (1 - rho) y[n-1]) / (1 + rho)`
///
/// with `rho = 1 / (2 fs R C)`. Setting `literal_rho` uses `rho = fs / (2 R C)`
/// instead, for comparison only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RcFilter {
    pub resistance: f64,
    pub capacitance: f64,
    #[serde(default)]
    pub literal_rho: bool,
}

impl Default for RcFilter {
    fn default() -> Self {
        RcFilter {
            resistance: 120.0,
            capacitance: 68e-9,
            literal_rho: false,
        }
    }
}

impl RcFilter {
    pub fn new(resistance: f64, capacitance: f64) -> Result<Self> {
        if !(resistance > 0.0
            && capacitance > 0.0
            && resistance.is_finite()
            && capacitance.is_finite())
        {
            return Err(Error::param(format!(
                "RC filter needs positive R and C, got R={resistance}, C={capacitance}"
            )));
        }
        Ok(RcFilter {
            resistance,
            capacitance,
            literal_rho: false,
        })
    }

    pub fn rho(&self, sample_rate: f64) -> f64 {
        let rc = self.resistance * self.capacitance;
        if self.literal_rho {
            sample_rate / (2.0 * rc)
        } else {
            1.0 / (2.0 * sample_rate * rc)
        }
    }

    /// Analog -3 dB frequency `1 / (2 pi R C)`.
    pub fn cutoff_hz(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.resistance * self.capacitance)
    }
}

pub fn rc_process(rc: &RcFilter, x: &Signal) -> Signal {
    let rho = rc.rho(x.sample_rate() as f64);
    let (mut prev_in, mut prev_out) = (0.0, 0.0);
    let out = x
        .samples()
        .iter()
        .map(|&v| {
            let y = (rho * (v + prev_in) + (1.0 - rho) * prev_out) / (1.0 + rho);
            prev_in = v;
            prev_out = y;
            y
        })
        .collect();
    Signal::from_parts_unchecked(out, x.sample_rate())
}
