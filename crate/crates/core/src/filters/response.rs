use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{process_sections, SectionCoeffs};
use crate::error::Result;

/// Impulse response of a chain of sections, `len` taps.
pub fn impulse_response(sections: &[SectionCoeffs<f64>], len: usize) -> Result<Vec<f64>> {
    let mut x = vec![0.0; len];
    if let Some(first) = x.first_mut() {
        *first = 1.0;
    }
    process_sections(sections, x, 0.0)
}

/// Full complex DFT of a real sequence.
pub fn frequency_response(h: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub freq_hz: f64,
    pub magnitude: f64,
    /// Unwrapped phase in radians.
    pub phase: f64,
}

/// One-sided magnitude and unwrapped phase of an impulse response.
pub fn magnitude_phase(h: &[f64], sample_rate: f64) -> Vec<ResponsePoint> {
    let n = h.len();
    let spec = frequency_response(h);
    let mut out = Vec::with_capacity(n / 2 + 1);
    let mut prev = 0.0;
    let mut offset = 0.0;
    for (k, z) in spec.iter().take(n / 2 + 1).enumerate() {
        let raw = z.arg();
        if k > 0 {
            let mut delta = raw + offset - prev;
            while delta > std::f64::consts::PI {
                offset -= 2.0 * std::f64::consts::PI;
                delta -= 2.0 * std::f64::consts::PI;
            }
            while delta < -std::f64::consts::PI {
                offset += 2.0 * std::f64::consts::PI;
                delta += 2.0 * std::f64::consts::PI;
            }
        }
        let phase = raw + offset;
        prev = phase;
        out.push(ResponsePoint {
            freq_hz: k as f64 * sample_rate / n as f64,
            magnitude: z.norm(),
            phase,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_delay_has_linear_phase() {
        let sections = [SectionCoeffs::FirstOrder {
            pole: 0.0,
            warp: None,
        }];
        let h = impulse_response(&sections, 256).unwrap();
        let resp = magnitude_phase(&h, 48000.0);
        for (k, p) in resp.iter().enumerate().take(128) {
            assert!((p.magnitude - 1.0).abs() < 1e-12);
            let expected = -2.0 * std::f64::consts::PI * k as f64 / 256.0;
            assert!((p.phase - expected).abs() < 1e-9, "{k}");
        }
    }
}
