use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{process_sections, Cascade, SectionCoeffs, SectionParams};
use crate::loss::LossKind;
use crate::nn::ModelKind;
use crate::signal::Signal;

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BundleCoeffs {
    Biquad { c: f64, d: f64 },
    FirstOrder { pole: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleSection {
    pub order: usize,
    pub warped: bool,
    pub params: SectionParams,
    pub coeffs: BundleCoeffs,
}

impl BundleSection {
    fn to_coeffs(self) -> Result<SectionCoeffs<f64>> {
        let warp = |a: f64| self.warped.then_some(a);
        match (self.order, self.params, self.coeffs) {
            (2, SectionParams::Second(p), BundleCoeffs::Biquad { c, d }) => {
                Ok(SectionCoeffs::Biquad {
                    c,
                    d,
                    warp: warp(p.warp),
                })
            }
            (1, SectionParams::First { a, .. }, BundleCoeffs::FirstOrder { pole }) => {
                Ok(SectionCoeffs::FirstOrder {
                    pole,
                    warp: warp(a),
                })
            }
            _ => Err(Error::param(
                "section order, parameters and coefficients disagree",
            )),
        }
    }

    /// Stability checks on the stored coefficients.
    fn validate(&self) -> Result<()> {
        let a = match self.params {
            SectionParams::Second(p) => p.warp,
            SectionParams::First { a, .. } => a,
        };
        if self.warped && !(a.abs() < 1.0) {
            return Err(Error::param(format!("warping factor {a} outside (-1, 1)")));
        }
        match self.coeffs {
            BundleCoeffs::Biquad { c, d } => {
                if !(0.0..1.0).contains(&c) || !(d.abs() < 1.0 + c) {
                    return Err(Error::param(format!(
                        "unstable biquad coefficients c={c}, d={d}"
                    )));
                }
            }
            BundleCoeffs::FirstOrder { pole } => {
                if !(pole.abs() < 1.0) {
                    return Err(Error::param(format!("unstable first-order pole {pole}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub loss: Option<LossKind>,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub config_hash: Option<String>,
}

/// Exported filter coefficients, ready to run without any learning code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBundle {
    pub version: u32,
    pub sample_rate: u32,
    pub model: Option<ModelKind>,
    pub sections: Vec<BundleSection>,
    /// Labels of the physical parameters in network output order.
    #[serde(default)]
    pub routing: Vec<String>,
    pub provenance: Provenance,
}

impl CoefficientBundle {
    /// A bundle with no sections; applying it returns the input unchanged.
    pub fn identity(sample_rate: u32) -> Self {
        CoefficientBundle {
            version: BUNDLE_VERSION,
            sample_rate,
            model: None,
            sections: Vec::new(),
            routing: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn from_cascade(cascade: &Cascade, sample_rate: u32) -> Self {
        let coeffs = cascade.coeffs(sample_rate as f64);
        let sections = cascade
            .sections
            .iter()
            .zip(coeffs)
            .map(|(s, c)| BundleSection {
                order: s.spec.order.as_usize(),
                warped: s.spec.warped,
                params: s.params,
                coeffs: match c {
                    SectionCoeffs::Biquad { c, d, .. } => BundleCoeffs::Biquad { c, d },
                    SectionCoeffs::FirstOrder { pole, .. } => BundleCoeffs::FirstOrder { pole },
                },
            })
            .collect();
        CoefficientBundle {
            sections,
            ..Self::identity(sample_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != BUNDLE_VERSION {
            return Err(Error::param(format!(
                "unsupported bundle version {}",
                self.version
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::param("bundle sample rate must be positive"));
        }
        for (i, s) in self.sections.iter().enumerate() {
            s.validate()
                .and_then(|_| s.to_coeffs().map(|_| ()))
                .map_err(|e| e.in_section(i))?;
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.sections.iter().map(|s| s.order).sum()
    }

    pub fn coeffs(&self) -> Result<Vec<SectionCoeffs<f64>>> {
        self.sections
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_coeffs().map_err(|e| e.in_section(i)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: CoefficientBundle = serde_json::from_str(s)?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Runs `x` through the bundle's sections from zeroed state.
pub fn apply(bundle: &CoefficientBundle, x: &Signal) -> Result<Signal> {
    if bundle.sample_rate != x.sample_rate() {
        return Err(Error::RateMismatch {
            expected: bundle.sample_rate,
            actual: x.sample_rate(),
        });
    }
    let out = process_sections(&bundle.coeffs()?, x.samples().to_vec(), 0.0)?;
    Signal::new(out, x.sample_rate())
}
