//! All-pass sections (2nd-order TDF-II, warped 2nd-order, 1st-order),
//! cascades of them, and the bilinear RC low-pass used as a reference
//! target.
//!
//! Every step function is generic over [`Real`], so the same code runs on
//! plain `f64` for inference and on taped variables for training.

mod rc;
mod response;

pub use rc::{rc_process, RcFilter};
pub use response::{frequency_response, impulse_response, magnitude_phase, ResponsePoint};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::signal::Signal;

/// Guard on the warped-section normalizer `1 + a^2 c + a d`.
pub const MIN_WARP_DENOMINATOR: f64 = 1e-12;

/// Physical parameters of a 2nd-order all-pass section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApfParams {
    /// Pole radius, `0 <= R < 1`.
    #[serde(rename = "R")]
    pub radius: f64,
    /// Break frequency in Hz.
    #[serde(rename = "fc")]
    pub cutoff_hz: f64,
    /// Warping factor, `|a| < 1`; zero means unwarped.
    #[serde(rename = "a", default)]
    pub warp: f64,
}

impl ApfParams {
    pub fn new(radius: f64, cutoff_hz: f64, warp: f64) -> Result<Self> {
        let p = ApfParams {
            radius,
            cutoff_hz,
            warp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.radius) {
            return Err(Error::param(format!(
                "pole radius {} outside [0, 1)",
                self.radius
            )));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz.is_finite()) {
            return Err(Error::param(format!(
                "break frequency {} Hz must be positive",
                self.cutoff_hz
            )));
        }
        check_warp(self.warp)
    }
}

fn check_warp(a: f64) -> Result<()> {
    if a.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("warping factor {a} outside (-1, 1)")))
    }
}

fn check_pole(p: f64) -> Result<()> {
    if p.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "first-order pole {p} outside (-1, 1)"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoeffs {
    pub c: f64,
    pub d: f64,
}

/// `c = R^2`, `d = -2 R cos(2 pi fc / fs)`.
pub fn biquad_coeffs<T: Real>(radius: T, cutoff_hz: T, sample_rate: f64) -> (T, T) {
    let c = radius.pow2();
    let d = -(radius * 2.0) * (cutoff_hz * (2.0 * PI / sample_rate)).cos();
    (c, d)
}

pub fn compute_biquad_coeffs(params: &ApfParams, sample_rate: f64) -> BiquadCoeffs {
    let (c, d) = biquad_coeffs(params.radius, params.cutoff_hz, sample_rate);
    BiquadCoeffs { c, d }
}

/// Two state variables; warped sections reuse the same pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiquadState<T> {
    pub v1: T,
    pub v2: T,
}

impl<T: Real> BiquadState<T> {
    pub fn new(zero: T) -> Self {
        BiquadState { v1: zero, v2: zero }
    }
}

impl Default for BiquadState<f64> {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// One sample of the TDF-II all-pass
/// `A(z) = (c + d z^-1 + z^-2) / (1 + d z^-1 + c z^-2)`.
#[inline]
pub fn biquad_apf_step<T: Real>(state: &mut BiquadState<T>, c: T, d: T, x: T) -> T {
    let y = c * x + state.v1;
    state.v1 = d * x + state.v2 - d * y;
    state.v2 = x - c * y;
    y
}

/// One sample of the warped all-pass: the TDF-II structure above with each
/// unit delay replaced by `(a + z^-1) / (1 + a z^-1)`. With `a = 0` this
/// performs the same floating-point operations as [`biquad_apf_step`].
#[inline]
pub fn warped_biquad_apf_step<T: Real>(
    state: &mut BiquadState<T>,
    c: T,
    d: T,
    a: T,
    x: T,
) -> Result<T> {
    let a2 = a * a;
    let den = a2 * c + a * d + 1.0;
    if den.value().abs() < MIN_WARP_DENOMINATOR {
        return Err(Error::Degenerate {
            c: c.value(),
            d: d.value(),
            a: a.value(),
        });
    }
    let y = (x * (c + a2 + a * d) + state.v1) / den;
    let u = x - c * y;
    let v2 = state.v2;
    state.v1 =
        x * (a * 2.0 + d + a * c) + v2 * (-a2 + 1.0) + y * (-(a * c * 2.0) - d - a) - a2 * a * u;
    state.v2 = u - (a2 * u + a * v2);
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderState<T> {
    pub s: T,
}

impl<T: Real> FirstOrderState<T> {
    pub fn new(zero: T) -> Self {
        FirstOrderState { s: zero }
    }
}

impl Default for FirstOrderState<f64> {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// `A1(z) = (p + z^-1) / (1 + p z^-1)` in transposed form.
#[inline]
pub fn first_order_apf_step<T: Real>(state: &mut FirstOrderState<T>, p: T, x: T) -> T {
    let y = p * x + state.s;
    state.s = x - p * y;
    y
}

/// Warped 1st-order all-pass. Equivalent to [`first_order_apf_step`] with
/// pole `(p + a) / (1 + p a)`.
#[inline]
pub fn warped_first_order_apf_step<T: Real>(
    state: &mut FirstOrderState<T>,
    p: T,
    a: T,
    x: T,
) -> Result<T> {
    let den = p * a + 1.0;
    if den.value().abs() < MIN_WARP_DENOMINATOR {
        return Err(Error::Degenerate {
            c: p.value(),
            d: 0.0,
            a: a.value(),
        });
    }
    let y = (x * (p + a) + state.s) / den;
    let u = x - p * y;
    state.s = u * (-(a * a) + 1.0) - a * state.s;
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn as_usize(self) -> usize {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }
}

/// Shape of one cascade stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectionSpec {
    pub order: Order,
    pub warped: bool,
}

impl SectionSpec {
    pub const fn second(warped: bool) -> Self {
        SectionSpec {
            order: Order::Second,
            warped,
        }
    }

    pub const fn first(warped: bool) -> Self {
        SectionSpec {
            order: Order::First,
            warped,
        }
    }
}

/// Parses a comma-separated order spec such as `"2w,2w,2w,1w"`
/// (`w` marks a warped section).
pub fn parse_order_spec(spec: &str) -> Result<Vec<SectionSpec>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|tok| {
            let (num, warped) = match tok.strip_suffix('w') {
                Some(n) => (n, true),
                None => (tok, false),
            };
            match num {
                "1" => Ok(SectionSpec::first(warped)),
                "2" => Ok(SectionSpec::second(warped)),
                _ => Err(Error::config(format!(
                    "invalid section '{tok}' in order spec (use 1, 1w, 2 or 2w)"
                ))),
            }
        })
        .collect()
}

pub fn format_order_spec(sections: &[SectionSpec]) -> String {
    sections
        .iter()
        .map(|s| format!("{}{}", s.order.as_usize(), if s.warped { "w" } else { "" }))
        .collect::<Vec<_>>()
        .join(",")
}

/// The default 7th-order layout: three warped biquads and a warped
/// 1st-order section.
pub fn default_order_spec() -> Vec<SectionSpec> {
    vec![
        SectionSpec::second(true),
        SectionSpec::second(true),
        SectionSpec::second(true),
        SectionSpec::first(true),
    ]
}

/// Physical parameters of one section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SectionParams {
    Second(ApfParams),
    First {
        pole: f64,
        #[serde(default)]
        a: f64,
    },
}

/// Ready-to-run coefficients. A `warp` of `None` selects the unwarped
/// difference equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SectionCoeffs<T> {
    Biquad { c: T, d: T, warp: Option<T> },
    FirstOrder { pole: T, warp: Option<T> },
}

impl<T: Real> SectionCoeffs<T> {
    /// Runs one section over `input` from zeroed state.
    pub fn process(&self, input: &[T], zero: T) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(input.len());
        match *self {
            SectionCoeffs::Biquad { c, d, warp: None } => {
                let mut st = BiquadState::new(zero);
                out.extend(input.iter().map(|&x| biquad_apf_step(&mut st, c, d, x)));
            }
            SectionCoeffs::Biquad {
                c,
                d,
                warp: Some(a),
            } => {
                let mut st = BiquadState::new(zero);
                for &x in input {
                    out.push(warped_biquad_apf_step(&mut st, c, d, a, x)?);
                }
            }
            SectionCoeffs::FirstOrder { pole, warp: None } => {
                let mut st = FirstOrderState::new(zero);
                out.extend(
                    input
                        .iter()
                        .map(|&x| first_order_apf_step(&mut st, pole, x)),
                );
            }
            SectionCoeffs::FirstOrder {
                pole,
                warp: Some(a),
            } => {
                let mut st = FirstOrderState::new(zero);
                for &x in input {
                    out.push(warped_first_order_apf_step(&mut st, pole, a, x)?);
                }
            }
        }
        Ok(out)
    }
}

/// Applies the sections in order; errors carry the failing section index.
pub fn process_sections<T: Real>(
    sections: &[SectionCoeffs<T>],
    input: Vec<T>,
    zero: T,
) -> Result<Vec<T>> {
    sections.iter().enumerate().try_fold(input, |x, (i, s)| {
        s.process(&x, zero).map_err(|e| e.in_section(i))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeSection {
    pub spec: SectionSpec,
    pub params: SectionParams,
}

impl CascadeSection {
    pub fn second(radius: f64, cutoff_hz: f64, warp: Option<f64>) -> Result<Self> {
        let params = ApfParams::new(radius, cutoff_hz, warp.unwrap_or(0.0))?;
        Ok(CascadeSection {
            spec: SectionSpec::second(warp.is_some()),
            params: SectionParams::Second(params),
        })
    }

    pub fn first(pole: f64, warp: Option<f64>) -> Result<Self> {
        check_pole(pole)?;
        let a = warp.unwrap_or(0.0);
        check_warp(a)?;
        Ok(CascadeSection {
            spec: SectionSpec::first(warp.is_some()),
            params: SectionParams::First { pole, a },
        })
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.spec.order, &self.params) {
            (Order::Second, SectionParams::Second(p)) => p.validate(),
            (Order::First, SectionParams::First { pole, a }) => {
                check_pole(*pole)?;
                check_warp(*a)
            }
            _ => Err(Error::param("section order does not match its parameters")),
        }
    }

    pub fn coeffs(&self, sample_rate: f64) -> SectionCoeffs<f64> {
        let warped = self.spec.warped;
        match self.params {
            SectionParams::Second(p) => {
                let BiquadCoeffs { c, d } = compute_biquad_coeffs(&p, sample_rate);
                SectionCoeffs::Biquad {
                    c,
                    d,
                    warp: warped.then_some(p.warp),
                }
            }
            SectionParams::First { pole, a } => SectionCoeffs::FirstOrder {
                pole,
                warp: warped.then_some(a),
            },
        }
    }
}

/// An ordered composition of all-pass sections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub sections: Vec<CascadeSection>,
}

impl Cascade {
    pub fn new(sections: Vec<CascadeSection>) -> Result<Self> {
        for (i, s) in sections.iter().enumerate() {
            s.validate().map_err(|e| e.in_section(i))?;
        }
        Ok(Cascade { sections })
    }

    /// Sum of section orders.
    pub fn order(&self) -> usize {
        self.sections.iter().map(|s| s.spec.order.as_usize()).sum()
    }

    pub fn coeffs(&self, sample_rate: f64) -> Vec<SectionCoeffs<f64>> {
        self.sections
            .iter()
            .map(|s| s.coeffs(sample_rate))
            .collect()
    }
}

/// Runs `x` through every section of the cascade (states zeroed first).
pub fn cascade_process(cascade: &Cascade, x: &Signal) -> Result<Signal> {
    let coeffs = cascade.coeffs(x.sample_rate() as f64);
    let out = process_sections(&coeffs, x.samples().to_vec(), 0.0)?;
    Ok(Signal::from_parts_unchecked(out, x.sample_rate()))
}
