//! Experiment files.
//!
//! A TOML file with an optional `preset`, an optional `spec_power`, a
//! `[paths]` table and a `[train]` table holding any [`TrainConfig`] field.
//! Values are resolved in this order, later wins:
//!
//! 1. the preset (`full`: 192 kHz protocol, `desk`: 48 kHz desk scale),
//! 2. keys in the file,
//! 3. command-line flags.
//!
//! Relative paths in the file are taken relative to the file's directory.

use std::path::{Path, PathBuf};

use phasealign::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// lr 1e-5, batch 512, 400 epochs at 192 kHz.
    #[default]
    Full,
    /// lr 3e-7, batch 8, 100 epochs at 48 kHz.
    Desk,
}

impl Preset {
    pub fn train_config(self) -> TrainConfig {
        match self {
            Preset::Full => TrainConfig::default(),
            Preset::Desk => TrainConfig {
                learning_rate: 3e-7,
                batch_size: 8,
                max_epochs: 100,
                sample_rate: 48_000,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    #[serde(default)]
    preset: Preset,
    spec_power: Option<u8>,
    #[serde(default)]
    paths: Paths,
    #[serde(default)]
    train: toml::Table,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub paths: Paths,
    pub train: TrainConfig,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_power(cfg: &mut TrainConfig, power: u8) {
    for r in &mut cfg.resolutions {
        r.power = power;
    }
}

impl ExperimentConfig {
    pub fn from_preset(preset: Preset) -> Self {
        ExperimentConfig {
            preset,
            paths: Paths::default(),
            train: preset.train_config(),
        }
    }

    /// Parses `text`; relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, String> {
        let file: ExperimentFile = toml::from_str(text).map_err(|e| e.message().to_string())?;
        let mut table =
            toml::Table::try_from(file.preset.train_config()).map_err(|e| e.to_string())?;
        merge(&mut table, file.train);
        let mut train: TrainConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| format!("[train] {}", e.message()))?;
        if let Some(p) = file.spec_power {
            set_power(&mut train, p);
        }
        let rebase =
            |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base_dir.join(p) } else { p });
        Ok(ExperimentConfig {
            preset: file.preset,
            paths: Paths {
                input: rebase(file.paths.input),
                target: rebase(file.paths.target),
                output_dir: rebase(file.paths.output_dir),
            },
            train,
        })
    }

    pub fn set_spec_power(&mut self, power: u8) {
        set_power(&mut self.train, power);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use phasealign::{LossKind, ModelKind};

    fn parse(s: &str) -> Result<ExperimentConfig, String> {
        ExperimentConfig::parse(s, Path::new("/cfg"))
    }

    #[test]
    fn empty_file_gives_full_protocol() {
        let c = parse("").unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.train.sample_rate, 192_000);
        assert_eq!(c.train.learning_rate, 1e-5);
        assert_eq!(c.train.batch_size, 512);
        assert_eq!(c.train.max_epochs, 400);
    }

    #[test]
    fn desk_preset_with_overrides() {
        let c = parse(
            r#"
preset = "desk"
spec_power = 2
[paths]
input = "in.wav"
output_dir = "/abs/out"
[train]
model = "naive"
order = "1"
learning_rate = 0.01
loss = "mse"
bounds = { fc = [50.0, 10000.0] }
"#,
        )
        .unwrap();
        assert_eq!(c.train.sample_rate, 48_000);
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.train.model, ModelKind::Naive);
        assert_eq!(c.train.loss, LossKind::Mse);
        assert_eq!(c.train.bounds.fc, [50.0, 10000.0]);
        assert_eq!(c.train.bounds.radius, TrainConfig::default().bounds.radius);
        assert!(c.train.resolutions.iter().all(|r| r.power == 2));
        assert_eq!(c.paths.input, Some(PathBuf::from("/cfg/in.wav")));
        assert_eq!(c.paths.output_dir, Some(PathBuf::from("/abs/out")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("learning_rate = 1.0").is_err());
        assert!(parse("[train]\nlearnig_rate = 1.0").is_err());
        assert!(parse("[paths]\ninptu = \"x\"").is_err());
        assert!(parse("preset = \"lab\"").is_err());
    }
}
