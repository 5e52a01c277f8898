//! Prediction-error traces, threshold calibration, two-layer alarm logic,
//! and the end-to-end pipeline from a waveform to a detection report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::latent::{fit, FitConfig, LatentModel};
use crate::waveform::WaveformSeries;

/// Relative sample-period mismatch treated as a different grid.
const DT_RTOL: f64 = 1e-9;
/// Largest fractional sample offset treated as aligned grids.
const ALIGN_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

/// How the error-level and error-growth layers combine into an alarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// Error persistently above threshold and growth crossing within the
    /// same window; flags only sustained and growing deviations.
    ErrorAndGrowth,
    /// Either signal persistently above its own threshold.
    ErrorOrGrowth,
}

/// Calibration and alarm parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdPolicy {
    /// Number of leading post-training samples used to calibrate thresholds.
    pub calibration_window: usize,
    /// Threshold distance from the calibration mean, in standard deviations.
    pub sigma_multiplier: f64,
    /// Trailing moving-average span applied to the raw squared error.
    pub smoothing_span: usize,
    /// Consecutive samples a condition must hold before an alarm.
    pub persistence: usize,
    pub combine_mode: CombineMode,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            calibration_window: 30,
            sigma_multiplier: 3.0,
            smoothing_span: 10,
            persistence: 5,
            combine_mode: CombineMode::ErrorAndGrowth,
        }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.calibration_window < 2 {
            return Err(Error::Config(format!(
                "calibration_window must be at least 2, got {}",
                self.calibration_window
            )));
        }
        if !(self.sigma_multiplier.is_finite() && self.sigma_multiplier > 0.0) {
            return Err(Error::Config(format!(
                "sigma_multiplier must be positive and finite, got {}",
                self.sigma_multiplier
            )));
        }
        if self.smoothing_span == 0 {
            return Err(Error::Config("smoothing_span must be at least 1".into()));
        }
        if self.persistence == 0 {
            return Err(Error::Config("persistence must be at least 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Error trace
// ---------------------------------------------------------------------------

/// Squared prediction error over time, its smoothed version, and the growth
/// rate of the smoothed error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    times: Vec<f64>,
    raw_error: Vec<f64>,
    smoothed_error: Vec<f64>,
    growth_rate: Vec<f64>,
    dt: f64,
}

impl ErrorTrace {
    /// Builds a trace from raw squared errors on a uniform grid. The
    /// smoothed error is a trailing moving average over `smoothing_span`
    /// samples (shorter at the start); the growth rate is its one-sided
    /// difference quotient, zero at the first sample.
    pub fn from_raw(raw_error: Vec<f64>, dt: f64, t0: f64, smoothing_span: usize) -> Result<Self> {
        if raw_error.is_empty() {
            return Err(Error::EmptyInput("error trace has no samples".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Sampling(format!(
                "sample period must be positive and finite, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::Sampling(format!(
                "start time must be finite, got {t0}"
            )));
        }
        if smoothing_span == 0 {
            return Err(Error::Config("smoothing_span must be at least 1".into()));
        }
        if raw_error.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::NonFinite(
                "raw errors must be finite and non-negative".into(),
            ));
        }
        let n = raw_error.len();
        let mut smoothed_error = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 0..n {
            acc += raw_error[k];
            if k >= smoothing_span {
                acc -= raw_error[k - smoothing_span];
            }
            let span = smoothing_span.min(k + 1);
            smoothed_error.push(acc / span as f64);
        }
        let mut growth_rate = Vec::with_capacity(n);
        growth_rate.push(0.0);
        for k in 1..n {
            growth_rate.push((smoothed_error[k] - smoothed_error[k - 1]) / dt);
        }
        let times = (0..n).map(|k| t0 + k as f64 * dt).collect();
        Ok(Self {
            times,
            raw_error,
            smoothed_error,
            growth_rate,
            dt,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn raw_error(&self) -> &[f64] {
        &self.raw_error
    }

    pub fn smoothed_error(&self) -> &[f64] {
        &self.smoothed_error
    }

    pub fn growth_rate(&self) -> &[f64] {
        &self.growth_rate
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Writes `time,raw_error,smoothed_error,growth_rate` rows.
    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "raw_error", "smoothed_error", "growth_rate"])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for k in 0..self.len() {
            w.write_record([
                format!("{}", self.times[k]),
                format!("{}", self.raw_error[k]),
                format!("{}", self.smoothed_error[k]),
                format!("{}", self.growth_rate[k]),
            ])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(file)
    }
}

/// Compares a prediction against the measured truth over their overlap.
///
/// Both series must share the sample period and sit on the same grid; the
/// trace is indexed by the predicted series' own time stamps.
pub fn error_trace(
    truth: &WaveformSeries,
    predicted: &WaveformSeries,
    policy: &ThresholdPolicy,
) -> Result<ErrorTrace> {
    policy.validate()?;
    let dt = truth.dt();
    if (predicted.dt() - dt).abs() > DT_RTOL * dt {
        return Err(Error::Sampling(format!(
            "sample periods differ: truth {} vs predicted {}",
            dt,
            predicted.dt()
        )));
    }
    let offset = (predicted.t0() - truth.t0()) / dt;
    let k0 = offset.round();
    if (offset - k0).abs() > ALIGN_TOL {
        return Err(Error::Sampling(format!(
            "sample grids are misaligned by {} of a sample period",
            offset - k0
        )));
    }
    let k0 = k0 as i64;
    let j_start = (-k0).max(0) as usize;
    let j_end_truth = truth.len() as i64 - k0;
    let j_end = (predicted.len() as i64).min(j_end_truth).max(0) as usize;
    if j_end <= j_start {
        return Err(Error::Range(
            "the predicted and measured series do not overlap in time".into(),
        ));
    }
    let raw: Vec<f64> = (j_start..j_end)
        .map(|j| {
            let t_idx = (k0 + j as i64) as usize;
            let diff = truth.samples()[t_idx] - predicted.samples()[j];
            diff * diff
        })
        .collect();
    ErrorTrace::from_raw(raw, dt, predicted.time_at(j_start), policy.smoothing_span)
}

// ---------------------------------------------------------------------------
// Calibration and detection
// ---------------------------------------------------------------------------

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Thresholds from the first `calibration_window` samples of the trace:
/// mean plus `sigma_multiplier` population standard deviations, separately
/// for the smoothed error (theta) and its growth rate (delta).
pub fn calibrate(trace: &ErrorTrace, policy: &ThresholdPolicy) -> Result<(f64, f64)> {
    policy.validate()?;
    let w = policy.calibration_window;
    if trace.len() < w {
        return Err(Error::InsufficientData(format!(
            "calibration needs {w} samples, trace has {}",
            trace.len()
        )));
    }
    let (mu_e, sigma_e) = population_stats(&trace.smoothed_error()[..w]);
    let (mu_g, sigma_g) = population_stats(&trace.growth_rate()[..w]);
    Ok((
        mu_e + policy.sigma_multiplier * sigma_e,
        mu_g + policy.sigma_multiplier * sigma_g,
    ))
}

/// Alarm decision and threshold crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Error threshold (amperes squared).
    pub theta: f64,
    /// Growth threshold (amperes squared per second).
    pub delta: f64,
    pub alarm: bool,
    /// Last sample of the persistence run that met the evidence standard.
    pub alarm_time: Option<f64>,
    pub first_error_crossing: Option<f64>,
    pub first_growth_crossing: Option<f64>,
}

/// Applies the alarm logic to a trace with fixed thresholds.
///
/// Scanning starts after the calibration window. In `ErrorAndGrowth` mode
/// the alarm fires at the first sample `k` whose trailing `persistence`
/// samples all have smoothed error above `theta` while at least one of them
/// has growth above `delta`; in `ErrorOrGrowth` mode either signal alone
/// suffices, but must itself persist for the whole window. First crossings
/// of each threshold are reported regardless of the alarm outcome.
///
/// Both thresholds must be finite.
pub fn detect(
    trace: &ErrorTrace,
    theta: f64,
    delta: f64,
    policy: &ThresholdPolicy,
) -> DetectionReport {
    assert!(
        theta.is_finite() && delta.is_finite(),
        "detection thresholds must be finite"
    );
    let w = policy.calibration_window;
    let m = policy.persistence.max(1);
    let n = trace.len();
    let smoothed = trace.smoothed_error();
    let growth = trace.growth_rate();

    let first_error_crossing = (w.min(n)..n).find(|&k| smoothed[k] > theta);
    let first_growth_crossing = (w.min(n)..n).find(|&k| growth[k] > delta);

    let start = w.max(m - 1);
    let mut alarm_index = None;
    for k in start..n {
        let lo = k + 1 - m;
        let error_persists = smoothed[lo..=k].iter().all(|&e| e > theta);
        let hit = match policy.combine_mode {
            CombineMode::ErrorAndGrowth => {
                error_persists && growth[lo..=k].iter().any(|&g| g > delta)
            }
            CombineMode::ErrorOrGrowth => {
                error_persists || growth[lo..=k].iter().all(|&g| g > delta)
            }
        };
        if hit {
            alarm_index = Some(k);
            break;
        }
    }

    DetectionReport {
        theta,
        delta,
        alarm: alarm_index.is_some(),
        alarm_time: alarm_index.map(|k| trace.times()[k]),
        first_error_crossing: first_error_crossing.map(|k| trace.times()[k]),
        first_growth_crossing: first_growth_crossing.map(|k| trace.times()[k]),
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Runs the full chain on one waveform: slice the training region, embed,
/// fit, predict to the end of the record, build the error trace, calibrate
/// on its first `calibration_window` samples, and apply the alarm logic.
/// Fully deterministic for fixed inputs.
pub fn run_pipeline(
    series: &WaveformSeries,
    train_start: f64,
    train_end: f64,
    embedding: &EmbeddingConfig,
    fit_config: &FitConfig,
    policy: &ThresholdPolicy,
) -> Result<(LatentModel, ErrorTrace, DetectionReport)> {
    embedding.validate()?;
    fit_config.validate()?;
    policy.validate()?;

    let train = series.slice(train_start, train_end)?;
    let k_end = ((train.t_end() - series.t0()) / series.dt()).round() as usize;
    let n_post = series.len().saturating_sub(k_end);
    let needed = policy.calibration_window + policy.persistence;
    if n_post < needed {
        return Err(Error::InsufficientData(format!(
            "only {n_post} samples remain after training; calibration and \
             persistence need at least {needed}"
        )));
    }

    let matrix = embed(&train, embedding)?;
    let (mut model, _diagnostics) = fit(&matrix, fit_config)?;
    model.metadata_mut().train_start = Some(train.t0());
    model.metadata_mut().train_end = Some(train.t_end());

    let horizon = series.t_end() - train.t_end();
    let predicted = model.predict_observable(&train, horizon)?;
    let trace = error_trace(series, &predicted, policy)?;
    let (theta, delta) = calibrate(&trace, policy)?;
    let report = detect(&trace, theta, delta, policy);
    Ok((model, trace, report))
}

// ---------------------------------------------------------------------------
// Training-window sweep
// ---------------------------------------------------------------------------

/// One training endpoint's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub training_end: f64,
    pub healthy_duration: f64,
    /// Alarm time of this endpoint's pipeline run, when it alarmed.
    pub predicted_fault: Option<f64>,
    /// Failure message when the run could not complete.
    pub error: Option<String>,
}

/// Outcomes over all requested training endpoints, ordered by endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub train_start: f64,
    pub rows: Vec<SweepRow>,
}

/// Runs `run_pipeline` once per training endpoint. Rows run independently
/// (possibly in parallel) and are reported in endpoint order; a failing
/// endpoint records its error in the row without aborting the sweep.
pub fn sweep_training_window(
    series: &WaveformSeries,
    train_start: f64,
    endpoints: &[f64],
    embedding: &EmbeddingConfig,
    fit_config: &FitConfig,
    policy: &ThresholdPolicy,
) -> Result<SweepReport> {
    if endpoints.is_empty() {
        return Err(Error::EmptyInput(
            "sweep needs at least one endpoint".into(),
        ));
    }
    if endpoints.iter().any(|e| !e.is_finite()) {
        return Err(Error::Range("sweep endpoints must be finite".into()));
    }
    if endpoints.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Range(
            "sweep endpoints must be strictly increasing".into(),
        ));
    }
    let rows = endpoints
        .par_iter()
        .map(|&end| {
            let row = SweepRow {
                training_end: end,
                healthy_duration: end - train_start,
                predicted_fault: None,
                error: None,
            };
            match run_pipeline(series, train_start, end, embedding, fit_config, policy) {
                Ok((_, _, report)) => SweepRow {
                    predicted_fault: report.alarm_time,
                    ..row
                },
                Err(e) => SweepRow {
                    error: Some(e.to_string()),
                    ..row
                },
            }
        })
        .collect();
    Ok(SweepReport { train_start, rows })
}

// ---------------------------------------------------------------------------
