//! Sample-domain error measures and the prediction-vs-reference report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::train::{apply, CoefficientBundle};

/// Normalizer of the mean absolute error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaeNorm {
    /// `1 / (n - 1)`.
    #[default]
    NMinusOne,
    /// `1 / n`.
    N,
}

fn check(y_hat: &[f64], y: &[f64]) -> Result<()> {
    if y_hat.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "prediction and target",
            left: y_hat.len(),
            right: y.len(),
        });
    }
    Ok(())
}

/// `sum |y_hat - y| / (n - 1)` (or `/ n`).
pub fn mae(y_hat: &[f64], y: &[f64], norm: MaeNorm) -> Result<f64> {
    check(y_hat, y)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::UndefinedMetric("mae needs at least two samples"));
    }
    let sum: f64 = y_hat.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    let d = match norm {
        MaeNorm::NMinusOne => (n - 1) as f64,
        MaeNorm::N => n as f64,
    };
    Ok(sum / d)
}

pub fn mse(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    check(y_hat, y)?;
    if y.is_empty() {
        return Err(Error::UndefinedMetric("mse of empty signals"));
    }
    Ok(y_hat
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64)
}

/// Error-to-signal ratio `sum (y_hat - y)^2 / sum y^2`.
pub fn esr(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    check(y_hat, y)?;
    let energy: f64 = y.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedMetric("esr of a zero-energy target"));
    }
    Ok(y_hat
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / energy)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mae: f64,
    pub mse: f64,
    pub esr: f64,
}

impl MetricRow {
    pub fn compute(y_hat: &[f64], y: &[f64], norm: MaeNorm) -> Result<Self> {
        Ok(MetricRow {
            mae: mae(y_hat, y, norm)?,
            mse: mse(y_hat, y)?,
            esr: esr(y_hat, y)?,
        })
    }
}

/// Aligned prediction against the target, plus the untouched input against
/// the target as a static reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub prediction: MetricRow,
    pub reference: MetricRow,
    pub mae_norm: MaeNorm,
    #[serde(default)]
    pub config_hash: Option<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Aligned text table with MAE, MSE and ESR columns.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<12}{:>14}{:>14}{:>14}\n", "", "MAE", "MSE", "ESR");
        for (name, r) in [
            ("prediction", &self.prediction),
            ("reference", &self.reference),
        ] {
            let _ = writeln!(
                s,
                "{name:<12}{:>14.6e}{:>14.6e}{:>14.6e}",
                r.mae, r.mse, r.esr
            );
        }
        s
    }
}

/// Applies `bundle` to `input` and scores it against `target`.
pub fn evaluate(
    bundle: &CoefficientBundle,
    input: &Signal,
    target: &Signal,
    norm: MaeNorm,
) -> Result<MetricsReport> {
    if input.sample_rate() != target.sample_rate() {
        return Err(Error::RateMismatch {
            expected: target.sample_rate(),
            actual: input.sample_rate(),
        });
    }
    let pred = apply(bundle, input)?;
    Ok(MetricsReport {
        prediction: MetricRow::compute(pred.samples(), target.samples(), norm)?,
        reference: MetricRow::compute(input.samples(), target.samples(), norm)?,
        mae_norm: norm,
        config_hash: bundle.provenance.config_hash.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        let y = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(mae(&[1.0; 4], &y, MaeNorm::NMinusOne).unwrap(), 4.0 / 3.0);
        assert_eq!(mae(&[1.0; 4], &y, MaeNorm::N).unwrap(), 1.0);
        assert_eq!(mae(&y, &y, MaeNorm::NMinusOne).unwrap(), 0.0);
        assert!(mae(&[1.0], &[1.0], MaeNorm::NMinusOne).is_err());
    }

    #[test]
    fn esr_examples() {
        let y = [0.5, -1.0, 0.25];
        assert_eq!(esr(&y, &y).unwrap(), 0.0);
        assert_eq!(esr(&[0.0; 3], &y).unwrap(), 1.0);
        assert_eq!(esr(&[-0.5, 1.0, -0.25], &y).unwrap(), 4.0);
        assert!(matches!(
            esr(&[1.0; 3], &[0.0; 3]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn esr_scale_invariance() {
        let y = [0.3, -0.7, 0.1, 0.9];
        let p = [0.2, -0.5, 0.3, 0.8];
        let k = -3.0;
        let ky: Vec<f64> = y.iter().map(|v| v * k).collect();
        let kp: Vec<f64> = p.iter().map(|v| v * k).collect();
        assert!((esr(&kp, &ky).unwrap() - esr(&p, &y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn identity_report_is_zero() {
        let x = Signal::new(vec![0.1, -0.2, 0.3, 0.0], 48000).unwrap();
        let r = evaluate(
            &CoefficientBundle::identity(48000),
            &x,
            &x,
            MaeNorm::NMinusOne,
        )
        .unwrap();
        assert_eq!(
            r.prediction,
            MetricRow {
                mae: 0.0,
                mse: 0.0,
                esr: 0.0
            }
        );
        assert_eq!(r.reference, r.prediction);
        assert_eq!(MetricsReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        let table = r.to_table();
        assert!(table.contains("prediction") && table.contains("ESR"));
    }
}
