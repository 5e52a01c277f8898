//! `arclin` command line: synthesize surrogate current waveforms, fit latent
//! linear models on healthy stretches, predict forward to raise arc-fault
//! alarms, inspect operator spectra, and sweep training-window endpoints.
//!
//! Exit codes are disjoint so shell pipelines can branch without parsing
//! JSON: 0 success or no alarm, 10 alarm, 2 usage or input problems, 3 fit
//! failures, 4 incompatible artifacts, 5 numeric failures.

use std::path::{Path, PathBuf};
use std::process::exit;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use arclin::config::{load_run_config, RunConfig};
use arclin::detection::{
    calibrate, detect, error_trace, sweep_training_window, DetectionReport, SweepReport,
};
use arclin::embedding::embed;
use arclin::latent::{fit, FitConfig, LatentModel, ModelMetadata};
use arclin::lifting::enumerate;
use arclin::spectral::{
    classify, confine, lifted_mode_report, SpectralReport, DEFAULT_NEUTRAL_TOL,
};
use arclin::waveform::{generate, load_csv, write_csv, CsvLayout, WaveformSeries};
use arclin::{Error, Result};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const EXIT_ALARM: i32 = 10;
const MAX_SWEEP_ENDPOINTS: usize = 10_000;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "arclin",
    version,
    about = "Latent linear models of AC current waveforms with early arc-fault alarms",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a surrogate waveform and write it as a time,current CSV
    Gen(GenArgs),
    /// Fit a latent model on a slice of a waveform and write fit diagnostics
    Train(TrainArgs),
    /// Predict forward from a trained model and decide whether to alarm
    Detect(DetectArgs),
    /// Report operator eigenvalues, optionally for the full lifted system
    Spectrum(SpectrumArgs),
    /// Rerun the pipeline across a range of training endpoints
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Run configuration JSON; omitted sections take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output waveform CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Input waveform CSV
    #[arg(long)]
    wave: PathBuf,
    /// Run configuration JSON; omitted sections take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training slice start in seconds
    #[arg(long, default_value_t = 0.10)]
    train_start: f64,
    /// Training slice end in seconds, exclusive
    #[arg(long, default_value_t = 0.18)]
    train_end: f64,
    /// Output model JSON path
    #[arg(long)]
    model_out: PathBuf,
    /// Diagnostics JSON path; defaults to the model path with a
    /// `diagnostics.json` extension
    #[arg(long)]
    diagnostics_out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Input waveform CSV
    #[arg(long)]
    wave: PathBuf,
    /// Trained model JSON
    #[arg(long)]
    model: PathBuf,
    /// Run configuration JSON; omitted sections take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Detection report JSON path
    #[arg(long)]
    report_out: PathBuf,
    /// Error trace CSV path; defaults to the report path with a
    /// `trace.csv` extension
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Trained model JSON to read the operator from
    #[arg(long, conflicts_with = "wave", required_unless_present = "wave")]
    model: Option<PathBuf>,
    /// Waveform CSV to fit an operator on
    #[arg(long)]
    wave: Option<PathBuf>,
    /// Run configuration JSON; omitted sections take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also report the lifted one-step system, one mode per monomial
    /// (waveform input only)
    #[arg(long)]
    lifted: bool,
    /// Number of lifted modes to report
    #[arg(long, default_value_t = 50)]
    modes: usize,
    /// Output JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Input waveform CSV
    #[arg(long)]
    wave: PathBuf,
    /// Run configuration JSON; omitted sections take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training window start in seconds
    #[arg(long, default_value_t = 0.10)]
    train_start: f64,
    /// Training endpoints as start:stop:step in seconds, stop inclusive
    #[arg(long)]
    ends: String,
    /// Output report JSON path
    #[arg(long)]
    out: PathBuf,
    /// Table CSV path; defaults to the JSON path with a `csv` extension
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Cap on worker threads for the sweep
    #[arg(long)]
    threads: Option<usize>,
}

// ---------------------------------------------------------------------------
// Report envelopes
// ---------------------------------------------------------------------------

/// Training diagnostics: fit quality plus the operator spectrum before and
/// after confinement, under the common version/config envelope.
#[derive(Serialize)]
struct TrainReport<'a> {
    version: &'static str,
    config: &'a RunConfig,
    train_start: f64,
    train_end: f64,
    loss_history: &'a [f64],
    final_loss: f64,
    reconstruction_rms: f64,
    nonresonance_ok: bool,
    rank_ok: bool,
    spectrum_raw: SpectralReport,
    spectrum_confined: SpectralReport,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct DetectOut<'a> {
    version: &'static str,
    config: &'a RunConfig,
    train_start: f64,
    train_end: f64,
    #[serde(flatten)]
    report: &'a DetectionReport,
}

#[derive(Serialize)]
struct SpectrumOut<'a> {
    version: &'static str,
    config: &'a RunConfig,
    source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum_raw: Option<SpectralReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum_confined: Option<SpectralReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum_lifted: Option<SpectralReport>,
}

#[derive(Serialize)]
struct SweepOut<'a> {
    version: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    report: &'a SweepReport,
}

// ---------------------------------------------------------------------------
// Entry point and error mapping
// ---------------------------------------------------------------------------

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    };
    exit(code);
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

/// Process exit code per error class: 2 usage or input, 3 fit, 4
/// compatibility, 5 numeric. Clap reports its own usage errors as 2.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::SingularFit(_) | Error::InsufficientData(_) => 3,
        Error::Incompatible(_) => 4,
        Error::Numeric(_) | Error::Confinement(_) => 5,
        _ => 2,
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_gen(args: GenArgs) -> Result<i32> {
    let config = resolve_config(args.config.as_deref())?;
    let series = generate(&config.scenario)?;
    write_csv(&series, &args.out)?;
    Ok(0)
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let config = resolve_config(args.config.as_deref())?;
    let series = load_wave(&args.wave)?;
    let train = series.slice(args.train_start, args.train_end)?;
    let matrix = embed(&train, &config.embedding)?;

    // Fit without confinement so the diagnostics can show the raw spectrum,
    // then confine separately; the two paths compose to the same model.
    let raw_fit = FitConfig {
        confine_spectrum: false,
        ..config.fit.clone()
    };
    let (raw_model, diagnostics) = fit(&matrix, &raw_fit)?;
    let spectrum_raw = classify(raw_model.operator(), DEFAULT_NEUTRAL_TOL)?;
    let confined_op = confine(raw_model.operator())?;
    let spectrum_confined = classify(&confined_op, DEFAULT_NEUTRAL_TOL)?;

    let metadata = ModelMetadata {
        fit: Some(config.fit.clone()),
        loss_history: diagnostics.loss_history.clone(),
        train_start: Some(train.t0()),
        train_end: Some(train.t_end()),
    };
    let model = if config.fit.confine_spectrum {
        LatentModel::from_parts(
            raw_model.mean().clone(),
            raw_model.projection().clone(),
            raw_model.correction().clone(),
            confined_op,
            raw_model.decoder_linear().clone(),
            raw_model.decoder_nonlinear().clone(),
            raw_model.correction_basis().clone(),
            raw_model.decoder_basis().clone(),
            raw_model.dt(),
            metadata,
        )?
    } else {
        let mut model = raw_model;
        *model.metadata_mut() = metadata;
        model
    };
    model.save(&args.model_out)?;

    let mut notes = Vec::new();
    if config.scenario_provided {
        let precursor_start = config.scenario.fault_start - config.scenario.precursor_lead;
        if train.t_end() > precursor_start {
            notes.push(format!(
                "training window ends at {} s, past the precursor onset at {} s; \
                 the fit may absorb early fault behavior",
                train.t_end(),
                precursor_start
            ));
        }
    }

    let report = TrainReport {
        version: VERSION,
        config: &config,
        train_start: train.t0(),
        train_end: train.t_end(),
        loss_history: &diagnostics.loss_history,
        final_loss: diagnostics.final_loss,
        reconstruction_rms: diagnostics.reconstruction_rms,
        nonresonance_ok: diagnostics.nonresonance_ok,
        rank_ok: diagnostics.rank_ok,
        spectrum_raw,
        spectrum_confined,
        notes,
    };
    let diagnostics_path = args
        .diagnostics_out
        .unwrap_or_else(|| args.model_out.with_extension("diagnostics.json"));
    write_json(&diagnostics_path, &report)?;
    Ok(0)
}

fn cmd_detect(args: DetectArgs) -> Result<i32> {
    let config = resolve_config(args.config.as_deref())?;
    let series = load_wave(&args.wave)?;
    let model = LatentModel::load(&args.model)?;

    let dt = series.dt();
    if (model.dt() - dt).abs() > 1e-9 * dt.max(model.dt()) {
        return Err(Error::Incompatible(format!(
            "model sample period {} does not match waveform sample period {}",
            model.dt(),
            dt
        )));
    }
    let metadata = model.metadata();
    let (Some(train_start), Some(train_end)) = (metadata.train_start, metadata.train_end) else {
        return Err(Error::InvalidFile(
            "model carries no training window; retrain with this tool to record one".into(),
        ));
    };

    let train = series.slice(train_start, train_end)?;
    let k_end = ((train.t_end() - series.t0()) / dt).round() as usize;
    let n_post = series.len().saturating_sub(k_end);
    let needed = config.policy.calibration_window + config.policy.persistence;
    if n_post < needed {
        return Err(Error::InsufficientData(format!(
            "only {n_post} samples remain after the training window; calibration \
             and persistence need at least {needed}"
        )));
    }

    let horizon = series.t_end() - train.t_end();
    let predicted = model.predict_observable(&train, horizon)?;
    let trace = error_trace(&series, &predicted, &config.policy)?;
    let (theta, delta) = calibrate(&trace, &config.policy)?;
    let report = detect(&trace, theta, delta, &config.policy);

    let out = DetectOut {
        version: VERSION,
        config: &config,
        train_start,
        train_end,
        report: &report,
    };
    write_json(&args.report_out, &out)?;
    let trace_path = args
        .trace_out
        .unwrap_or_else(|| args.report_out.with_extension("trace.csv"));
    trace.to_csv(&trace_path)?;
    Ok(if report.alarm { EXIT_ALARM } else { 0 })
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<i32> {
    if args.lifted && args.wave.is_none() {
        return Err(Error::Config(
            "the lifted report fits on a waveform; pass --wave instead of --model".into(),
        ));
    }
    let config = resolve_config(args.config.as_deref())?;
    let (source, spectrum_raw, spectrum_confined, spectrum_lifted) =
        if let Some(model_path) = &args.model {
            let model = LatentModel::load(model_path)?;
            let raw = classify(model.operator(), DEFAULT_NEUTRAL_TOL)?;
            let confined_op = confine(model.operator())?;
            let confined = classify(&confined_op, DEFAULT_NEUTRAL_TOL)?;
            ("model", raw, confined, None)
        } else {
            let wave_path = args.wave.as_deref().expect("clap requires an input");
            let series = load_wave(wave_path)?;
            let matrix = embed(&series, &config.embedding)?;
            let raw_fit = FitConfig {
                confine_spectrum: false,
                ..config.fit.clone()
            };
            let (raw_model, _) = fit(&matrix, &raw_fit)?;
            let raw = classify(raw_model.operator(), DEFAULT_NEUTRAL_TOL)?;
            let confined_op = confine(raw_model.operator())?;
            let confined = classify(&confined_op, DEFAULT_NEUTRAL_TOL)?;
            let lifted = if args.lifted {
                let basis = enumerate(matrix.n_n(), 1, config.fit.lift_degree);
                Some(lifted_mode_report(
                    &matrix,
                    &basis,
                    args.modes,
                    DEFAULT_NEUTRAL_TOL,
                )?)
            } else {
                None
            };
            ("waveform", raw, confined, lifted)
        };

    let report = SpectrumOut {
        version: VERSION,
        config: &config,
        source,
        spectrum_raw: Some(spectrum_raw),
        spectrum_confined: Some(spectrum_confined),
        spectrum_lifted,
    };
    let text = render_json(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let config = resolve_config(args.config.as_deref())?;
    let series = load_wave(&args.wave)?;
    let endpoints = parse_endpoint_range(&args.ends)?;
    let sweep = || {
        sweep_training_window(
            &series,
            args.train_start,
            &endpoints,
            &config.embedding,
            &config.fit,
            &config.policy,
        )
    };
    let report = match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("could not build a {n}-thread pool: {e}")))?;
            pool.install(sweep)?
        }
        None => sweep()?,
    };

    let out = SweepOut {
        version: VERSION,
        config: &config,
        report: &report,
    };
    write_json(&args.out, &out)?;
    let csv_path = args
        .csv_out
        .unwrap_or_else(|| args.out.with_extension("csv"));
    write_sweep_csv(&report, &csv_path)?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn resolve_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_run_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_wave(path: &Path) -> Result<WaveformSeries> {
    load_csv(path, &CsvLayout::default())
}

fn render_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("report serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, render_json(value)?)?;
    Ok(())
}

/// Expands `start:stop:step` into an inclusive endpoint list. A step wider
/// than the range yields just the start.
fn parse_endpoint_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let &[start_s, stop_s, step_s] = parts.as_slice() else {
        return Err(Error::Config(format!(
            "endpoint range must look like start:stop:step, got {text:?}"
        )));
    };
    let parse = |name: &str, s: &str| -> Result<f64> {
        match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Config(format!(
                "endpoint range {name} {s:?} is not a finite number"
            ))),
        }
    };
    let start = parse("start", start_s)?;
    let stop = parse("stop", stop_s)?;
    let step = parse("step", step_s)?;
    if step <= 0.0 {
        return Err(Error::Config(format!(
            "endpoint range step must be positive, got {step}"
        )));
    }
    if stop < start {
        return Err(Error::Config(format!(
            "endpoint range stop {stop} lies before start {start}"
        )));
    }
    // The slack absorbs accumulated rounding so 0.11:0.19:0.01 lands on all
    // nine endpoints.
    let n_steps = ((stop - start) / step + 1e-9).floor() as usize;
    if n_steps >= MAX_SWEEP_ENDPOINTS {
        return Err(Error::Config(format!(
            "endpoint range asks for {} points; the cap is {MAX_SWEEP_ENDPOINTS}",
            n_steps + 1
        )));
    }
    Ok((0..=n_steps).map(|k| start + k as f64 * step).collect())
}

fn write_sweep_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let mut text = String::from("training_end,healthy_duration,predicted_fault\n");
    for row in &report.rows {
        let predicted = row
            .predicted_fault
            .map(|t| t.to_string())
            .unwrap_or_default();
        text.push_str(&format!(
            "{},{},{}\n",
            row.training_end, row.healthy_duration, predicted
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
