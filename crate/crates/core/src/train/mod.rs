//! Training driver: frames the signals into sequences, runs
//! model -> physical parameters -> coefficients -> cascade -> loss, and
//! updates the model with Adam.
//!
//! Gradients are split at the physical-parameter boundary. The network
//! forward pass is recorded once per step on its own tape; each sequence
//! then runs on a worker tape whose leaves are the physical parameters,
//! and the per-sequence gradients are reduced in sequence order before
//! being pulled back through the network. The reduction order is fixed,
//! so single-threaded and parallel runs produce identical results.

mod adam;
mod bundle;

pub use adam::AdamState;
pub use bundle::{
    apply, BundleCoeffs, BundleSection, CoefficientBundle, Provenance, BUNDLE_VERSION,
};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::filters::{format_order_spec, parse_order_spec, process_sections};
use crate::loss::{default_resolutions, LossKind, SequenceLoss, StftConfig};
use crate::nn::{Bounds, Layout, Model, ModelKind, WarpMode, DEFAULT_HIDDEN, DEFAULT_OMEGA0};
use crate::signal::{frame, Signal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub model: ModelKind,
    /// Comma-separated sections, e.g. `"2w,2w,2w,1w"`.
    pub order: String,
    pub warp_mode: WarpMode,
    pub sample_rate: u32,
    pub seq_len: usize,
    pub resolutions: Vec<StftConfig>,
    pub bounds: Bounds,
    pub hidden: Vec<usize>,
    pub omega0: f64,
    pub patience: usize,
    /// Relative improvement below which an epoch counts as stalled.
    pub min_delta: f64,
    pub shuffle: bool,
    /// Worker threads; 0 uses every core, 1 runs single-threaded.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 512,
            max_epochs: 400,
            seed: 0,
            loss: LossKind::Mstft,
            model: ModelKind::Connected,
            order: "2w,2w,2w,1w".to_string(),
            warp_mode: WarpMode::PerSection,
            sample_rate: 192_000,
            seq_len: 2048,
            resolutions: default_resolutions(),
            bounds: Bounds::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            omega0: DEFAULT_OMEGA0,
            patience: 20,
            min_delta: 1e-6,
            shuffle: true,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0
            || self.max_epochs == 0
            || self.seq_len == 0
            || self.sample_rate == 0
        {
            return Err(Error::config(
                "batch_size, max_epochs, seq_len and sample_rate must be positive",
            ));
        }
        if self.patience == 0 || !(self.min_delta >= 0.0) {
            return Err(Error::config(
                "patience must be positive and min_delta non-negative",
            ));
        }
        if self.model != ModelKind::Naive && (self.hidden.contains(&0) || !(self.omega0 > 0.0)) {
            return Err(Error::config("hidden sizes and omega0 must be positive"));
        }
        for r in &self.resolutions {
            r.validate()?;
            if self.loss == LossKind::Mstft && r.win_length > self.seq_len {
                return Err(Error::config(format!(
                    "STFT window {} longer than the training sequence ({})",
                    r.win_length, self.seq_len
                )));
            }
        }
        self.layout().map(|_| ())
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::new(parse_order_spec(&self.order)?, self.warp_mode, self.bounds)
    }

    /// Hex SHA-256 of the JSON form. `threads` is left out since it does not
    /// change results.
    pub fn hash(&self) -> String {
        let canonical = TrainConfig {
            threads: 0,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn build_model(&self) -> Result<Model> {
        Ok(Model::build(
            self.model,
            self.layout()?,
            &self.hidden,
            self.omega0,
            self.seed,
        ))
    }
}

/// Saved model state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub epoch: usize,
    pub loss: f64,
    pub sample_rate: u32,
    pub config_hash: String,
    pub model: Model,
}

impl ModelCheckpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub steps: Vec<StepLoss>,
    /// Mean step loss of each epoch, weighted by batch size.
    pub epochs: Vec<f64>,
}

impl LossCurve {
    /// `step,epoch,loss` rows preceded by a `# config_hash=` line.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\nstep,epoch,loss\n");
        for p in &self.steps {
            let _ = writeln!(s, "{},{},{}", p.step, p.epoch, p.loss);
        }
        s
    }

    pub fn to_epoch_csv(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\nepoch,loss\n");
        for (i, l) in self.epochs.iter().enumerate() {
            let _ = writeln!(s, "{},{}", i + 1, l);
        }
        s
    }
}

/// True once the best loss has not improved by more than
/// `min_delta * |best|` for `patience` consecutive epochs.
pub fn plateau_check(history: &[f64], patience: usize, min_delta: f64) -> bool {
    let Some((&first, rest)) = history.split_first() else {
        return false;
    };
    let mut best = first;
    let mut stalled = 0;
    for &l in rest {
        if l < best - min_delta * best.abs() {
            best = l;
            stalled = 0;
        } else {
            stalled += 1;
        }
    }
    stalled >= patience
}

/// Loss and gradient with respect to the physical parameters for one
/// sequence. `tape` is cleared first and may be reused.
pub fn sequence_loss_grad(
    layout: &Layout,
    physical: &[f64],
    input: &[f64],
    target: &[f64],
    loss: &SequenceLoss,
    sample_rate: f64,
    tape: &Tape,
) -> Result<(f64, Vec<f64>)> {
    tape.clear();
    let leaves = tape.leaf_vec(physical);
    let coeffs = layout.coeffs(&leaves.vars(), sample_rate)?;
    let x = tape.constant_vec(input).vars();
    let y = process_sections(&coeffs, x, tape.constant(0.0))?;
    let l = loss.on_tape(tape, target, &y)?;
    tape.backward(l);
    Ok((l.value(), leaves.grads()))
}

/// Mean loss of `model` over sequence pairs, evaluated without a tape.
pub fn dataset_loss(
    model: &Model,
    pairs: &[(&[f64], &[f64])],
    loss: &SequenceLoss,
    sample_rate: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("no sequences"));
    }
    let coeffs = model.layout.coeffs(&model.physical(), sample_rate)?;
    let mut total = 0.0;
    for (x, t) in pairs {
        let y = process_sections(&coeffs, x.to_vec(), 0.0)?;
        total += loss.value(t, &y)?;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradient {
    /// Mean loss over the batch.
    pub loss: f64,
    /// Gradient of the mean loss, laid out as [`Model::params`].
    pub grads: Vec<f64>,
    /// Physical parameters the batch was evaluated at.
    pub physical: Vec<f64>,
}

/// Evaluates batch gradients, optionally on a worker pool.
pub struct GradientEngine {
    loss: SequenceLoss,
    sample_rate: f64,
    pool: Option<rayon::ThreadPool>,
    net_tape: Tape,
}

impl GradientEngine {
    /// `threads == 1` runs on the calling thread; 0 uses every core.
    pub fn new(loss: SequenceLoss, sample_rate: f64, threads: usize) -> Result<Self> {
        let pool = if threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?,
            )
        };
        Ok(GradientEngine {
            loss,
            sample_rate,
            pool,
            net_tape: Tape::new(),
        })
    }

    /// Mean loss and mean gradient with respect to the physical parameters.
    pub fn physical_grads(
        &self,
        layout: &Layout,
        physical: &[f64],
        pairs: &[(&[f64], &[f64])],
    ) -> Result<(f64, Vec<f64>)> {
        if pairs.is_empty() {
            return Err(Error::Empty("empty batch"));
        }
        let (loss_fn, fs) = (&self.loss, self.sample_rate);
        let run = |tape: &mut Tape, (x, t): &(&[f64], &[f64])| {
            sequence_loss_grad(layout, physical, x, t, loss_fn, fs, tape)
        };
        let results: Vec<Result<(f64, Vec<f64>)>> = match &self.pool {
            None => {
                let mut tape = Tape::new();
                pairs.iter().map(|p| run(&mut tape, p)).collect()
            }
            Some(pool) => pool.install(|| pairs.par_iter().map_init(Tape::new, run).collect()),
        };
        let n = pairs.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; physical.len()];
        for r in results {
            let (l, g) = r?;
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    /// Mean loss and its gradient with respect to every model parameter.
    pub fn model_grads(&self, model: &Model, pairs: &[(&[f64], &[f64])]) -> Result<BatchGradient> {
        let tape = &self.net_tape;
        tape.clear();
        let (leaves, phys_vars) = model.physical_on_tape(tape);
        let physical: Vec<f64> = phys_vars.iter().map(|v| v.value()).collect();
        let (loss, dphys) = self.physical_grads(&model.layout, &physical, pairs)?;
        let seeds: Vec<_> = phys_vars.iter().copied().zip(dphys).collect();
        tape.backward_seeded(&seeds);
        Ok(BatchGradient {
            loss,
            grads: leaves.grads(),
            physical,
        })
    }
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Lowest-loss model state.
    pub checkpoint: ModelCheckpoint,
    pub bundle: CoefficientBundle,
    pub curve: LossCurve,
    pub epochs_run: usize,
    pub stopped_on_plateau: bool,
    pub config_hash: String,
}

/// Trains a freshly initialized model (see [`TrainConfig::build_model`]).
pub fn train(input: &Signal, target: &Signal, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_model(cfg.build_model()?, input, target, cfg)
}

/// Trains `model`, which must match the layout implied by `cfg`.
pub fn train_model(
    mut model: Model,
    input: &Signal,
    target: &Signal,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for s in [input, target] {
        if s.sample_rate() != cfg.sample_rate {
            return Err(Error::RateMismatch {
                expected: cfg.sample_rate,
                actual: s.sample_rate(),
            });
        }
    }
    if input.len() != target.len() {
        return Err(Error::LengthMismatch {
            what: "input and target",
            left: input.len(),
            right: target.len(),
        });
    }
    let hash = cfg.hash();
    let fs = cfg.sample_rate as f64;
    let xs = frame(input, cfg.seq_len)?;
    let ts = frame(target, cfg.seq_len)?;
    let engine = GradientEngine::new(
        SequenceLoss::new(cfg.loss, &cfg.resolutions)?,
        fs,
        cfg.threads,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(model.param_count());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut curve = LossCurve::default();
    let snapshot = |model: &Model, epoch: usize, loss: f64| ModelCheckpoint {
        version: 1,
        epoch,
        loss,
        sample_rate: cfg.sample_rate,
        config_hash: hash.clone(),
        model: model.clone(),
    };
    let mut best = snapshot(&model, 0, f64::INFINITY);
    let mut stopped = false;
    let mut step = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let pairs: Vec<(&[f64], &[f64])> = chunk
                .iter()
                .map(|&i| (xs.sequences[i].as_slice(), ts.sequences[i].as_slice()))
                .collect();
            let g = engine.model_grads(&model, &pairs)?;
            if !g.loss.is_finite() || g.grads.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    last_good: Box::new(best),
                });
            }
            assert!(
                model.layout.in_bounds(&g.physical),
                "physical parameters left their bounds"
            );
            step += 1;
            curve.steps.push(StepLoss {
                step,
                epoch,
                loss: g.loss,
            });
            weighted += g.loss * chunk.len() as f64;
            let mut params = model.params();
            adam.update(&mut params, &g.grads, cfg.learning_rate);
            model.set_params(&params)?;
            model.project();
        }
        let epoch_loss = weighted / order.len() as f64;
        curve.epochs.push(epoch_loss);
        epochs_run = epoch;
        log::info!("epoch {epoch}: loss {epoch_loss:.6e}");
        if epoch_loss < best.loss {
            best = snapshot(&model, epoch, epoch_loss);
        }
        if plateau_check(&curve.epochs, cfg.patience, cfg.min_delta) {
            log::info!("loss plateaued after {epoch} epochs");
            stopped = true;
            break;
        }
    }

    let mut bundle = CoefficientBundle::from_cascade(&best.model.cascade()?, cfg.sample_rate);
    bundle.model = Some(cfg.model);
    bundle.routing = best.model.layout.routing();
    bundle.provenance = Provenance {
        seed: cfg.seed,
        loss: Some(cfg.loss),
        epochs: epochs_run,
        final_loss: Some(best.loss),
        config_hash: Some(hash.clone()),
    };
    Ok(TrainOutcome {
        checkpoint: best,
        bundle,
        curve,
        epochs_run,
        stopped_on_plateau: stopped,
        config_hash: hash,
    })
}

/// Human-readable summary of a layout, e.g. for logs.
pub fn describe_layout(layout: &Layout) -> String {
    format!(
        "order {} ({}), {} parameters: {}",
        layout
            .sections
            .iter()
            .map(|s| s.order.as_usize())
            .sum::<usize>(),
        format_order_spec(&layout.sections),
        layout.len(),
        layout.routing().join(",")
    )
}
