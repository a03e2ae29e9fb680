use phasealign::filters::{magnitude_phase, rc_process, RcFilter};
use phasealign::loss::LossKind;
use phasealign::metrics::{evaluate, MaeNorm};
use phasealign::nn::ModelKind;
use phasealign::signal::{generate_log_sweep, Signal};
use phasealign::train::{
    apply, train, train_model, CoefficientBundle, ModelCheckpoint, TrainConfig,
};
use phasealign::Error;

const FS: u32 = 48_000;

fn sweep(seconds: f64) -> Signal {
    generate_log_sweep(20.0, 20_000.0, seconds, FS, 0.5).unwrap()
}

fn naive(order: &str, loss: LossKind, lr: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        batch_size: 8,
        max_epochs: epochs,
        loss,
        model: ModelKind::Naive,
        order: order.into(),
        sample_rate: FS,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn identity_task_learns_flat_phase() {
    let x = sweep(1.0);
    let out = train(&x, &x, &naive("2", LossKind::Mse, 1e-2, 60)).unwrap();
    let e = &out.curve.epochs;
    assert!(
        e[e.len() - 1] < 1e-3 * e[0],
        "{} -> {}",
        e[0],
        e[e.len() - 1]
    );
    let best = out.checkpoint.loss;
    assert!(e.iter().all(|&l| l >= best));

    let h = phasealign::filters::impulse_response(&out.bundle.coeffs().unwrap(), 8192).unwrap();
    for p in magnitude_phase(&h, FS as f64) {
        if p.freq_hz > 0.0 && p.freq_hz < 1000.0 {
            assert!(p.phase.abs() < 0.05, "{} Hz: {} rad", p.freq_hz, p.phase);
        }
    }
}

#[test]
fn rc_bundle_improves_esr_on_held_out_signal() {
    let (x, rc) = (sweep(2.0), RcFilter::default());
    let y = rc_process(&rc, &x);
    let out = train(&x, &y, &naive("1", LossKind::Mstft, 1e-2, 40)).unwrap();
    let fresh = generate_log_sweep(30.0, 15_000.0, 1.5, FS, 0.4).unwrap();
    let report = evaluate(
        &out.bundle,
        &fresh,
        &rc_process(&rc, &fresh),
        MaeNorm::NMinusOne,
    )
    .unwrap();
    assert!(report.prediction.esr < report.reference.esr);
    assert_eq!(
        report.config_hash.as_deref(),
        Some(out.config_hash.as_str())
    );
}

#[test]
fn one_step_changes_every_trainable_component() {
    let x = sweep(0.1);
    let y = rc_process(&RcFilter::default(), &x);
    for model in [ModelKind::Connected, ModelKind::Sequential] {
        let cfg = TrainConfig {
            max_epochs: 1,
            batch_size: 1,
            model,
            sample_rate: FS,
            shuffle: false,
            ..TrainConfig::default()
        };
        let before = cfg.build_model().unwrap();
        // exactly one step: a single sequence
        let x1 = Signal::new(x.samples()[..cfg.seq_len].to_vec(), FS).unwrap();
        let y1 = Signal::new(y.samples()[..cfg.seq_len].to_vec(), FS).unwrap();
        let out = train_model(before.clone(), &x1, &y1, &cfg).unwrap();
        assert_eq!(out.curve.steps.len(), 1);
        // the checkpoint is taken after the epoch, so it holds the stepped model
        let after = &out.checkpoint.model;
        for (a, b) in before.nets.iter().zip(&after.nets) {
            assert_ne!(a.b0, b.b0);
            for (la, lb) in a.layers.iter().zip(&b.layers) {
                let moved = la
                    .weights
                    .iter()
                    .zip(&lb.weights)
                    .filter(|(u, v)| u != v)
                    .count();
                assert!(
                    moved > la.weights.len() / 2,
                    "{model:?}: {moved} of {} weights moved",
                    la.weights.len()
                );
                assert!(la.biases.iter().zip(&lb.biases).any(|(u, v)| u != v));
            }
        }
    }
}

#[test]
fn physical_parameters_stay_in_bounds_under_aggressive_steps() {
    let x = sweep(1.0);
    let y = rc_process(&RcFilter::default(), &x);
    let out = train(&x, &y, &naive("2w,2w,1w", LossKind::Mse, 0.5, 5)).unwrap();
    let layout = out.checkpoint.model.layout.clone();
    assert!(layout.in_bounds(&out.checkpoint.model.physical()));
    out.bundle.validate().unwrap();
}

#[test]
fn same_seed_gives_identical_bundles() {
    let x = sweep(0.5);
    let y = rc_process(&RcFilter::default(), &x);
    let cfg = TrainConfig {
        hidden: vec![16, 8],
        max_epochs: 2,
        ..naive("2w,1w", LossKind::Mstft, 1e-4, 2)
    };
    let cfg = TrainConfig {
        model: ModelKind::Connected,
        ..cfg
    };
    let a = train(&x, &y, &cfg).unwrap();
    let b = train(&x, &y, &cfg).unwrap();
    assert_eq!(a.bundle.to_json().unwrap(), b.bundle.to_json().unwrap());
    assert_eq!(a.curve, b.curve);
    let c = train(&x, &y, &TrainConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.curve, c.curve);
}

#[test]
fn exported_bundle_and_checkpoint_round_trip() {
    let x = sweep(1.0);
    let y = rc_process(&RcFilter::default(), &x);
    let out = train(&x, &y, &naive("2w,1", LossKind::Mstft, 1e-2, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let path = dir.path().join("bundle.json");
    out.bundle.save(&path).unwrap();
    let loaded = CoefficientBundle::load(&path).unwrap();
    assert_eq!(loaded, out.bundle);
    let a = apply(&out.bundle, &x).unwrap();
    let b = apply(&loaded, &x).unwrap();
    assert!(a
        .samples()
        .iter()
        .zip(b.samples())
        .all(|(u, v)| u.to_bits() == v.to_bits()));
    assert_eq!(
        loaded.provenance.config_hash.as_deref(),
        Some(out.config_hash.as_str())
    );

    let path = dir.path().join("checkpoint.json");
    out.checkpoint.save(&path).unwrap();
    assert_eq!(ModelCheckpoint::load(&path).unwrap(), out.checkpoint);
}

#[test]
fn overflowing_loss_reports_divergence() {
    let x = Signal::new(vec![1e200; 4096], FS).unwrap();
    let err = train(&x, &x.clone(), &naive("1", LossKind::Mse, 1e-2, 2)).unwrap_err();
    match err {
        Error::Diverged {
            epoch,
            batch,
            last_good,
        } => {
            assert_eq!((epoch, batch), (1, 0));
            assert_eq!(last_good.epoch, 0);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn input_validation() {
    let x = sweep(0.5);
    let short = Signal::new(x.samples()[..1000].to_vec(), FS).unwrap();
    let cfg = naive("1", LossKind::Mse, 1e-2, 1);
    assert!(train(&x, &short, &cfg).is_err());
    let other_rate = Signal::new(x.samples().to_vec(), 44_100).unwrap();
    assert!(matches!(
        train(&other_rate, &other_rate, &cfg),
        Err(Error::RateMismatch { .. })
    ));
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..cfg
    };
    assert!(matches!(train(&x, &x, &bad), Err(Error::Config(_))));
}
