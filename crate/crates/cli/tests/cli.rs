use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phasealign::signal::{read_wav, read_wav_with_info, write_wav, BitDepth};
use phasealign::Signal;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phasealign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Parses the single JSON error line and returns (exit code, kind).
fn error_of(out: &Output) -> (i32, String) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "expected one line, got {stderr:?}");
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(
        v["code"].as_i64().unwrap() as i32,
        out.status.code().unwrap()
    );
    (
        out.status.code().unwrap(),
        v["error"].as_str().unwrap().to_string(),
    )
}

#[test]
fn sweep_has_expected_length() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.wav");
    ok(&[
        "sweep",
        "--f1",
        "20",
        "--f2",
        "20000",
        "--duration",
        "10",
        "--sample-rate",
        "192000",
        "-o",
        p(&path),
    ]);
    let (s, info) = read_wav_with_info(&path).unwrap();
    assert_eq!(s.len(), 1_920_000);
    assert_eq!(s.sample_rate(), 192_000);
    assert!(info.float);
}

#[test]
fn identity_apply_preserves_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (input, bundle, output) = (
        dir.path().join("in.wav"),
        dir.path().join("id.json"),
        dir.path().join("out.wav"),
    );
    let x = Signal::new(
        (0..4000)
            .map(|i| ((i * 37 % 200) as f64 - 100.0) / 128.0)
            .collect(),
        48_000,
    )
    .unwrap();
    write_wav(&input, &x, BitDepth::Pcm16).unwrap();
    phasealign::CoefficientBundle::identity(48_000)
        .save(&bundle)
        .unwrap();
    ok(&["apply", "-b", p(&bundle), "-i", p(&input), "-o", p(&output)]);
    let before = std::fs::read(&input).unwrap();
    let after = std::fs::read(&output).unwrap();
    assert_eq!(read_wav(&input).unwrap(), read_wav(&output).unwrap());
    assert_eq!(before, after);
}

#[test]
fn train_then_eval_improves_rc_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let (sweep, rc, run_dir) = (
        dir.path().join("sweep.wav"),
        dir.path().join("rc.wav"),
        dir.path().join("run"),
    );
    ok(&[
        "sweep",
        "--sample-rate",
        "48000",
        "--duration",
        "2",
        "-o",
        p(&sweep),
    ]);
    ok(&["rc-sim", "-i", p(&sweep), "-o", p(&rc)]);
    let cfg = configs().join("rc_desk.toml");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--input",
        p(&sweep),
        "--target",
        p(&rc),
        "--out-dir",
        p(&run_dir),
    ]);
    for f in [
        "bundle.json",
        "checkpoint.json",
        "loss.csv",
        "epochs.csv",
        "config.json",
    ] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("config.json")).unwrap())
            .unwrap();
    let hash = config["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let loss_csv = std::fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert!(loss_csv.starts_with(&format!("# config_hash={hash}\n")));
    let bundle = phasealign::CoefficientBundle::load(run_dir.join("bundle.json")).unwrap();
    assert_eq!(
        bundle.provenance.config_hash.as_deref(),
        Some(hash.as_str())
    );

    let report_path = dir.path().join("report.json");
    let out = ok(&[
        "eval",
        "-b",
        p(&run_dir.join("bundle.json")),
        "-i",
        p(&sweep),
        "-t",
        p(&rc),
        "--json",
        "--report",
        p(&report_path),
    ]);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    let (pred, reference) = (
        report["prediction"]["esr"].as_f64().unwrap(),
        report["reference"]["esr"].as_f64().unwrap(),
    );
    assert!(
        pred < reference,
        "prediction {pred} vs reference {reference}"
    );
    assert_eq!(report["config_hash"].as_str(), Some(hash.as_str()));
    assert!(report_path.exists());

    let table = ok(&[
        "eval",
        "-b",
        p(&run_dir.join("bundle.json")),
        "-i",
        p(&sweep),
        "-t",
        p(&rc),
    ]);
    assert!(table.contains("prediction") && table.contains(&hash));

    // re-running the same config reproduces the bundle exactly
    let again = dir.path().join("again");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--input",
        p(&sweep),
        "--target",
        p(&rc),
        "--out-dir",
        p(&again),
        "--threads",
        "1",
    ]);
    assert_eq!(
        std::fs::read(run_dir.join("bundle.json")).unwrap(),
        std::fs::read(again.join("bundle.json")).unwrap()
    );

    let resp = dir.path().join("resp");
    ok(&[
        "export-response",
        "-b",
        p(&run_dir.join("bundle.json")),
        "-o",
        p(&resp),
        "--taps",
        "1024",
    ]);
    for f in ["impulse.csv", "magnitude.csv", "phase.csv"] {
        let text = std::fs::read_to_string(resp.join(f)).unwrap();
        assert!(text.starts_with(&format!("# config_hash={hash}\n")));
    }
    let impulse = std::fs::read_to_string(resp.join("impulse.csv")).unwrap();
    assert_eq!(impulse.lines().count(), 2 + 1024);
    let magnitude = std::fs::read_to_string(resp.join("magnitude.csv")).unwrap();
    for line in magnitude.lines().skip(2) {
        let m: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((m - 1.0).abs() < 1e-6);
    }
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.wav");
    let out = run(&[
        "rc-sim",
        "-i",
        p(&missing),
        "-o",
        p(&dir.path().join("o.wav")),
    ]);
    assert_eq!(error_of(&out), (4, "io".into()));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "[train]\nlearnig_rate = 0.1\n").unwrap();
    let out = run(&["train", "--config", p(&bad_cfg)]);
    assert_eq!(error_of(&out), (2, "config".into()));

    let out = run(&["train", "--preset", "desk", "--learning-rate=-1"]);
    assert_eq!(error_of(&out), (2, "config".into()));

    let out = run(&["sweep", "--bogus"]);
    assert_eq!(error_of(&out), (2, "config".into()));

    let rate = dir.path().join("rate.wav");
    write_wav(
        &rate,
        &Signal::new(vec![0.1; 100], 44_100).unwrap(),
        BitDepth::Float32,
    )
    .unwrap();
    let id = dir.path().join("id.json");
    phasealign::CoefficientBundle::identity(48_000)
        .save(&id)
        .unwrap();
    let out = run(&[
        "apply",
        "-b",
        p(&id),
        "-i",
        p(&rate),
        "-o",
        p(&dir.path().join("x.wav")),
    ]);
    assert_eq!(error_of(&out), (2, "config".into()));
}
