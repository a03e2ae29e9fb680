mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasealign::filters::{impulse_response, magnitude_phase, rc_process, RcFilter};
use phasealign::metrics::evaluate;
use phasealign::signal::{generate_log_sweep, read_wav_with_info, write_wav, BitDepth, WavInfo};
use phasealign::train::train;
use phasealign::{apply, CoefficientBundle, Error, LossKind, MaeNorm, ModelKind, Signal};

use config::{ExperimentConfig, Preset};

#[derive(Parser)]
#[command(
    name = "phasealign",
    version,
    about = "Phase alignment with learned all-pass cascades"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an exponential sine sweep.
    Sweep(SweepArgs),
    /// Run the RC low-pass over a WAV file.
    RcSim(RcSimArgs),
    /// Train an all-pass cascade that maps input onto target.
    Train(TrainArgs),
    /// Filter a WAV file with a coefficient bundle.
    Apply(ApplyArgs),
    /// Score a bundle on an input/target pair.
    Eval(EvalArgs),
    /// Write impulse, magnitude and phase response CSVs of a bundle.
    ExportResponse(ExportArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 20.0)]
    f1: f64,
    #[arg(long, default_value_t = 20_000.0)]
    f2: f64,
    /// Seconds.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 192_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 0.5)]
    amp: f64,
    /// 16, 24 or 32 (float).
    #[arg(long, default_value = "32", value_parser = parse_depth)]
    bit_depth: BitDepth,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RcSimArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 120.0)]
    r_ohms: f64,
    #[arg(long, default_value_t = 68e-9)]
    c_farads: f64,
    /// Use rho = fs / (2RC) instead of 1 / (2 fs RC).
    #[arg(long)]
    paper_literal_rho: bool,
    /// Output format; defaults to the input's.
    #[arg(long, value_parser = parse_depth)]
    bit_depth: Option<BitDepth>,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment file (TOML).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Base settings when no config file is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = parse_loss)]
    loss: Option<LossKind>,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Section list such as "2w,2w,2w,1w".
    #[arg(long)]
    order: Option<String>,
    /// Spectrogram exponent for every resolution (1 or 2).
    #[arg(long)]
    spec_power: Option<u8>,
    /// 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(short, long)]
    bundle: PathBuf,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Output format; defaults to the input's.
    #[arg(long, value_parser = parse_depth)]
    bit_depth: Option<BitDepth>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(short, long)]
    bundle: PathBuf,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    target: PathBuf,
    /// Normalize MAE by n instead of n - 1.
    #[arg(long)]
    mae_over_n: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(short, long)]
    bundle: PathBuf,
    #[arg(short, long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8192)]
    taps: usize,
}

fn parse_depth(s: &str) -> Result<BitDepth, String> {
    BitDepth::parse(s).ok_or_else(|| format!("unknown bit depth {s:?} (16, 24 or 32)"))
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown loss {s:?} (mstft or mse)"))
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown model {s:?} (connected, sequential or naive)"))
}

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure {
            code: 4,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }
}

fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::Io(_) | Error::Wav { .. } | Error::Json(_) => (4, "io"),
        Error::Diverged { .. } | Error::DivisionByZero(_) => (3, "numeric"),
        Error::Section { source, .. } => classify(source),
        _ => (2, "config"),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = classify(&e);
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<(Signal, WavInfo)> {
    Ok(read_wav_with_info(path)?)
}

fn depth_of(info: &WavInfo) -> BitDepth {
    match (info.float, info.bits_per_sample) {
        (false, 16) => BitDepth::Pcm16,
        (false, 24) => BitDepth::Pcm24,
        _ => BitDepth::Float32,
    }
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn sweep(a: SweepArgs) -> CliResult {
    let s = generate_log_sweep(a.f1, a.f2, a.duration, a.sample_rate, a.amp)?;
    write_wav(&a.output, &s, a.bit_depth)?;
    println!(
        "wrote {} samples at {} Hz to {}",
        s.len(),
        s.sample_rate(),
        a.output.display()
    );
    Ok(())
}

fn rc_sim(a: RcSimArgs) -> CliResult {
    let (x, info) = read(&a.input)?;
    let mut rc = RcFilter::new(a.r_ohms, a.c_farads)?;
    rc.literal_rho = a.paper_literal_rho;
    let y = rc_process(&rc, &x);
    if !y.samples().iter().all(|v| v.is_finite()) {
        return Err(Failure {
            code: 3,
            kind: "numeric",
            message: format!(
                "RC output is not finite (rho = {})",
                rc.rho(x.sample_rate() as f64)
            ),
        });
    }
    write_wav(
        &a.output,
        &y,
        a.bit_depth.unwrap_or_else(|| depth_of(&info)),
    )?;
    println!(
        "cutoff {:.1} Hz, wrote {}",
        rc.cutoff_hz(),
        a.output.display()
    );
    Ok(())
}

fn resolve_train(a: &TrainArgs) -> CliResult<ExperimentConfig> {
    let mut exp = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            let dir = path.parent().unwrap_or(Path::new("."));
            ExperimentConfig::parse(&text, dir)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::from_preset(a.preset.unwrap_or_default()),
    };
    if a.config.is_some() && a.preset.is_some() {
        return Err(Failure::config(
            "--preset conflicts with --config; set `preset` in the file",
        ));
    }
    let t = &mut exp.train;
    macro_rules! over {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    over!(a.seed, t.seed);
    over!(a.learning_rate, t.learning_rate);
    over!(a.batch_size, t.batch_size);
    over!(a.epochs, t.max_epochs);
    over!(a.loss, t.loss);
    over!(a.model, t.model);
    over!(a.order, t.order);
    over!(a.threads, t.threads);
    if let Some(p) = a.spec_power {
        exp.set_spec_power(p);
    }
    over!(a.input.clone().map(Some), exp.paths.input);
    over!(a.target.clone().map(Some), exp.paths.target);
    over!(a.out_dir.clone().map(Some), exp.paths.output_dir);
    exp.train.validate()?;
    Ok(exp)
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let exp = resolve_train(&a)?;
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone().ok_or_else(|| {
            Failure::config(format!("no {what} path (set [paths] or pass --{what})"))
        })
    };
    let input = need(&exp.paths.input, "input")?;
    let target = need(&exp.paths.target, "target")?;
    let out_dir = need(&exp.paths.output_dir, "out-dir")?;
    let (x, _) = read(&input)?;
    let (y, _) = read(&target)?;
    fs::create_dir_all(&out_dir).map_err(|e| Failure::io(&out_dir, e))?;
    let cfg = &exp.train;
    let hash = cfg.hash();
    let resolved = serde_json::json!({ "config_hash": hash, "preset": exp.preset, "paths": exp.paths, "train": cfg });
    write_text(
        &out_dir.join("config.json"),
        &serde_json::to_string_pretty(&resolved).expect("config serializes"),
    )?;
    log::info!("training with config hash {hash}");

    let out = match train(&x, &y, cfg) {
        Ok(out) => out,
        Err(Error::Diverged {
            epoch,
            batch,
            last_good,
        }) => {
            let path = out_dir.join("checkpoint.last_good.json");
            last_good.save(&path)?;
            return Err(Failure {
                code: 3,
                kind: "numeric",
                message: format!(
                    "non-finite loss at epoch {epoch}, batch {batch}; last good checkpoint (epoch {}) saved to {}",
                    last_good.epoch,
                    path.display()
                ),
            });
        }
        Err(e) => return Err(e.into()),
    };
    out.checkpoint.save(out_dir.join("checkpoint.json"))?;
    out.bundle.save(out_dir.join("bundle.json"))?;
    write_text(&out_dir.join("loss.csv"), &out.curve.to_csv(&hash))?;
    write_text(&out_dir.join("epochs.csv"), &out.curve.to_epoch_csv(&hash))?;
    println!(
        "epochs {} (plateau: {}), best loss {:.6e} at epoch {}, artifacts in {}",
        out.epochs_run,
        out.stopped_on_plateau,
        out.checkpoint.loss,
        out.checkpoint.epoch,
        out_dir.display()
    );
    Ok(())
}

fn apply_cmd(a: ApplyArgs) -> CliResult {
    let bundle = CoefficientBundle::load(&a.bundle)?;
    let (x, info) = read(&a.input)?;
    let y = apply(&bundle, &x)?;
    write_wav(
        &a.output,
        &y,
        a.bit_depth.unwrap_or_else(|| depth_of(&info)),
    )?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let bundle = CoefficientBundle::load(&a.bundle)?;
    let (x, _) = read(&a.input)?;
    let (y, _) = read(&a.target)?;
    let norm = if a.mae_over_n {
        MaeNorm::N
    } else {
        MaeNorm::NMinusOne
    };
    let report = evaluate(&bundle, &x, &y, norm)?;
    let json = report.to_json()?;
    if let Some(path) = &a.report {
        write_text(path, &json)?;
    }
    if a.json {
        println!("{json}");
    } else {
        print!("{}", report.to_table());
        println!(
            "config_hash {}",
            report.config_hash.as_deref().unwrap_or("none")
        );
    }
    Ok(())
}

fn export_cmd(a: ExportArgs) -> CliResult {
    if a.taps < 2 {
        return Err(Failure::config("--taps must be at least 2"));
    }
    let bundle = CoefficientBundle::load(&a.bundle)?;
    let h = impulse_response(&bundle.coeffs()?, a.taps)?;
    let points = magnitude_phase(&h, bundle.sample_rate as f64);
    let header = format!(
        "# config_hash={}\n",
        bundle.provenance.config_hash.as_deref().unwrap_or("none")
    );
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::io(&a.out_dir, e))?;

    let mut impulse = header.clone() + "n,value\n";
    for (n, v) in h.iter().enumerate() {
        impulse += &format!("{n},{v}\n");
    }
    let mut magnitude = header.clone() + "freq_hz,magnitude,magnitude_db\n";
    let mut phase = header + "freq_hz,phase_rad\n";
    for p in &points {
        magnitude += &format!(
            "{},{},{}\n",
            p.freq_hz,
            p.magnitude,
            20.0 * p.magnitude.log10()
        );
        phase += &format!("{},{}\n", p.freq_hz, p.phase);
    }
    write_text(&a.out_dir.join("impulse.csv"), &impulse)?;
    write_text(&a.out_dir.join("magnitude.csv"), &magnitude)?;
    write_text(&a.out_dir.join("phase.csv"), &phase)?;
    println!(
        "wrote impulse, magnitude and phase CSVs to {}",
        a.out_dir.display()
    );
    Ok(())
}

fn fail(f: &Failure) -> ExitCode {
    let line = serde_json::json!({ "error": f.kind, "code": f.code, "message": f.message.replace('\n', " ") });
    eprintln!("{line}");
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return fail(&Failure::config(first));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::RcSim(a) => rc_sim(a),
        Command::Train(a) => train_cmd(a),
        Command::Apply(a) => apply_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::ExportResponse(a) => export_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(&f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let io = Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "x"));
        assert_eq!(classify(&io), (4, "io"));
        assert_eq!(classify(&Error::Config("x".into())), (2, "config"));
        assert_eq!(classify(&Error::DivisionByZero(0.0)), (3, "numeric"));
        let nested = Error::Section {
            index: 1,
            source: Box::new(Error::DivisionByZero(0.0)),
        };
        assert_eq!(classify(&nested), (3, "numeric"));
        let cfg = phasealign::TrainConfig {
            model: ModelKind::Naive,
            order: "1".into(),
            ..Default::default()
        };
        let diverged = Error::Diverged {
            epoch: 1,
            batch: 0,
            last_good: Box::new(phasealign::ModelCheckpoint {
                version: 1,
                epoch: 0,
                loss: f64::INFINITY,
                sample_rate: 48_000,
                config_hash: cfg.hash(),
                model: cfg.build_model().unwrap(),
            }),
        };
        assert_eq!(Failure::from(diverged).code, 3);
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::parse_from([
            "phasealign",
            "train",
            "--preset",
            "desk",
            "--epochs",
            "7",
            "--loss",
            "mse",
            "--model",
            "naive",
            "--order",
            "2w",
            "--spec-power",
            "2",
            "--seed",
            "9",
        ]);
        let Command::Train(a) = cli.command else {
            panic!("expected train")
        };
        let exp = resolve_train(&a).unwrap();
        assert_eq!(exp.train.max_epochs, 7);
        assert_eq!(exp.train.loss, LossKind::Mse);
        assert_eq!(exp.train.model, ModelKind::Naive);
        assert_eq!(exp.train.order, "2w");
        assert_eq!(exp.train.seed, 9);
        assert_eq!(exp.train.sample_rate, 48_000);
        assert!(exp.train.resolutions.iter().all(|r| r.power == 2));
    }
}
