//! Uniformly sampled current waveforms: container type, CSV input and
//! output, time slicing, and the synthetic arc-fault surrogate generator.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for deciding that a time column is uniformly sampled.
const UNIFORMITY_RTOL: f64 = 1e-6;

/// Slack, in fractions of a sample period, used when converting continuous
/// times to sample indices so that values sitting exactly on a grid point do
/// not fall off it through rounding.
const GRID_SLACK: f64 = 1e-9;

/// Fraction of the measurement-noise variance carried by the interference
/// tone; the rest is the broadband quantization residue.
const TONE_POWER: f64 = 0.9;

/// Interference tone frequency as a multiple of the line frequency.
/// Non-integer, so no polynomial of the line oscillation can express it.
const TONE_FREQUENCY_RATIO: f64 = 4.2;

// ---------------------------------------------------------------------------
// WaveformSeries
// ---------------------------------------------------------------------------

/// A scalar signal sampled on the uniform grid `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSeries {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl WaveformSeries {
    /// Builds a series after checking the container invariants: at least one
    /// sample, every sample finite, `dt` positive and finite, `t0` finite.
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("waveform has no samples".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::Config(format!("t0 must be finite, got {t0}")));
        }
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("sample {k} is not finite")));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // new() rejects empty sample vectors
    }

    /// Time of sample `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Exclusive end of the covered interval, one grid step past the last
    /// sample, so `slice(t0, t_end)` returns the whole series.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.len() as f64 * self.dt
    }

    /// Root mean square of the samples.
    pub fn rms(&self) -> f64 {
        let ss: f64 = self.samples.iter().map(|x| x * x).sum();
        (ss / self.len() as f64).sqrt()
    }

    /// Converts a continuous time to the first grid index at or after it,
    /// with slack so times sitting on a grid point map to that point.
    fn grid_index(&self, t: f64) -> i64 {
        ((t - self.t0) / self.dt - GRID_SLACK).ceil() as i64
    }

    /// Returns the samples with times in `[t_start, t_end)`.
    ///
    /// Both endpoints must lie inside the covered interval (a hair of
    /// floating-point slack is allowed) and the result must be non-empty.
    /// Slicing at the same cut twice is exact: `slice(a, b)` followed by
    /// `slice(b, c)` concatenates to `slice(a, c)`.
    pub fn slice(&self, t_start: f64, t_end: f64) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) {
            return Err(Error::Range("slice bounds must be finite".into()));
        }
        if t_start >= t_end {
            return Err(Error::Range(format!(
                "slice start {t_start} is not before end {t_end}"
            )));
        }
        let tol = self.dt * 1e-6;
        if t_start < self.t0 - tol || t_end > self.t_end() + tol {
            return Err(Error::Range(format!(
                "slice [{t_start}, {t_end}) falls outside data [{}, {})",
                self.t0,
                self.t_end()
            )));
        }
        let k_start = self.grid_index(t_start).max(0) as usize;
        let k_end = (self.grid_index(t_end).max(0) as usize).min(self.len());
        if k_start >= k_end {
            return Err(Error::Range(format!(
                "slice [{t_start}, {t_end}) contains no samples"
            )));
        }
        Ok(Self {
            samples: self.samples[k_start..k_end].to_vec(),
            dt: self.dt,
            t0: self.time_at(k_start),
        })
    }
}

// ---------------------------------------------------------------------------
// CSV input and output
// ---------------------------------------------------------------------------

/// Where to find time and current in a CSV file.
///
/// With a time column present, `dt` is inferred as the median of successive
/// timestamp differences and the column is required to be uniform to a
/// relative tolerance of 1e-6; an explicit `dt` overrides the inferred value
/// but the uniformity check still runs. Without a time column, `dt` is
/// required and timestamps are synthesized from `t0` (default 0).
#[derive(Debug, Clone, PartialEq)]
pub struct CsvLayout {
    /// 0-based index of the time column, or `None` for current-only files.
    pub time_column: Option<usize>,
    /// 0-based index of the current column.
    pub current_column: usize,
    /// Explicit sample period. Required when `time_column` is `None`.
    pub dt: Option<f64>,
    /// Start time for current-only files. Ignored when a time column exists.
    pub t0: Option<f64>,
}

impl Default for CsvLayout {
    fn default() -> Self {
        Self {
            time_column: Some(0),
            current_column: 1,
            dt: None,
            t0: None,
        }
    }
}

impl CsvLayout {
    /// Layout for a single-column file of current samples.
    pub fn current_only(dt: f64) -> Self {
        Self {
            time_column: None,
            current_column: 0,
            dt: Some(dt),
            t0: None,
        }
    }
}

fn parse_field(record: &csv::StringRecord, col: usize, line: usize, what: &str) -> Result<f64> {
    let raw = record.get(col).ok_or_else(|| Error::Parse {
        line,
        message: format!(
            "missing {what} column {col} (row has {} fields)",
            record.len()
        ),
    })?;
    let value: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} value {raw:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what} value {raw:?} is not finite"),
        });
    }
    Ok(value)
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Reads a waveform from CSV text. A single leading header row is detected
/// by its fields not parsing as numbers and skipped; any later malformed row
/// is an error carrying its 1-based line number.
pub fn load_csv_reader<R: Read>(reader: R, layout: &CsvLayout) -> Result<WaveformSeries> {
    if layout.time_column.is_none() && layout.dt.is_none() {
        return Err(Error::Config(
            "a file without a time column needs an explicit dt".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut times: Vec<f64> = Vec::new();
    let mut currents: Vec<f64> = Vec::new();
    let mut first_data_row = true;

    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record_line(&record, idx + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue; // blank line
        }
        if first_data_row {
            let numeric = |f: &str| f.trim().parse::<f64>().is_ok();
            if !record.iter().any(numeric) {
                continue; // header row
            }
            first_data_row = false;
        }
        if let Some(tc) = layout.time_column {
            times.push(parse_field(&record, tc, line, "time")?);
        }
        currents.push(parse_field(
            &record,
            layout.current_column,
            line,
            "current",
        )?);
    }

    if currents.is_empty() {
        return Err(Error::EmptyInput("csv contains no data rows".into()));
    }

    let (dt, t0) = if layout.time_column.is_some() {
        let t0 = times[0];
        if times.len() == 1 {
            let dt = layout.dt.ok_or_else(|| {
                Error::Sampling("cannot infer dt from a single row; pass dt explicitly".into())
            })?;
            (dt, t0)
        } else {
            let mut diffs: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            if let Some(k) = diffs.iter().position(|d| *d <= 0.0) {
                return Err(Error::Sampling(format!(
                    "timestamps are not strictly increasing between rows {} and {}",
                    k + 1,
                    k + 2
                )));
            }
            diffs.sort_by(|a, b| a.partial_cmp(b).expect("diffs are finite"));
            let median = if diffs.len() % 2 == 1 {
                diffs[diffs.len() / 2]
            } else {
                0.5 * (diffs[diffs.len() / 2 - 1] + diffs[diffs.len() / 2])
            };
            let worst = diffs
                .iter()
                .map(|d| (d - median).abs())
                .fold(0.0_f64, f64::max);
            if worst > UNIFORMITY_RTOL * median {
                return Err(Error::Sampling(format!(
                    "time column is not uniform: spacing deviates by {:.3e} from the median {median:.6e}",
                    worst
                )));
            }
            (layout.dt.unwrap_or(median), t0)
        }
    } else {
        (layout.dt.expect("checked above"), layout.t0.unwrap_or(0.0))
    };

    WaveformSeries::new(currents, dt, t0)
}

/// Reads a waveform from a CSV file on disk.
pub fn load_csv(path: &Path, layout: &CsvLayout) -> Result<WaveformSeries> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(std::io::BufReader::new(file), layout)
}

/// Writes `time,current` rows. Values use the shortest representation that
/// parses back to the identical float, so a load of the written file
/// reproduces the samples bit for bit.
pub fn write_csv_writer<W: Write>(series: &WaveformSeries, out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "time,current")?;
    for (k, x) in series.samples().iter().enumerate() {
        writeln!(w, "{},{}", series.time_at(k), x)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a waveform to a CSV file on disk.
pub fn write_csv(series: &WaveformSeries, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv_writer(series, file)
}

// ---------------------------------------------------------------------------
// Surrogate generator
// ---------------------------------------------------------------------------

/// Recipe for a synthetic feeder current record with a slowly developing
/// series arc fault.
///
/// The healthy signal is `amplitude * sin(2 pi frequency t)` plus zero-mean
/// measurement noise of standard deviation `noise_std`, modeling a sigma-
/// delta current-sensor front end that is not perfectly isolated from its
/// own supply. The noise has two components with a fixed power split:
///
/// * an interference tone at 4.2x the line frequency (a switching-supply
///   residual, deliberately non-synchronous with the line) carrying
///   `TONE_POWER` of the variance, with a seed-dependent phase;
/// * the third difference of a unit Gaussian stream, rescaled, carrying the
///   rest: the shape of the quantization residue a noise-shaping converter
///   leaves after decimation, with nearly all of its power at the top of
///   the band so the line-frequency band stays clean.
///
/// Between `fault_start` and `fault_end` three arc signatures are active at
/// full strength, and they ramp in linearly over the `precursor_lead`
/// seconds before `fault_start`:
///
/// * current shoulders: samples with `|i| < shoulder_width` are flattened
///   toward zero, the zero-crossing distortion of an arcing contact;
/// * half-wave asymmetry: negative half-cycles are scaled by
///   `1 - asymmetry`, the rectification bias of dissimilar electrode wear;
/// * re-ignition bursts: band-limited noise of deviation
///   `0.5 * shoulder_width`, gated to the shoulder region.
///
/// A scenario with `fault_start >= fault_end` has no fault and produces the
/// healthy signal for its whole duration. Generation is a pure function of
/// the scenario: equal scenarios give bit-identical series, and scenarios
/// that differ only in distortion shape (for instance `shoulder_width = 0`
/// and `asymmetry = 0` versus the original) share the identical measurement
/// noise stream because the per-sample draw count never varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArcFaultScenario {
    /// Peak current of the healthy sinusoid, in amperes.
    pub amplitude: f64,
    /// Line frequency in hertz.
    pub frequency: f64,
    /// Record length in seconds; samples cover `[0, duration)`.
    pub duration: f64,
    /// Time the fault reaches full strength.
    pub fault_start: f64,
    /// Time the fault window closes.
    pub fault_end: f64,
    /// Length of the linear ramp-in before `fault_start`, in seconds.
    pub precursor_lead: f64,
    /// Current band around zero, in amperes, that the arc flattens.
    pub shoulder_width: f64,
    /// Fractional sag of negative half-cycles at full fault strength,
    /// in `[0, 1)`.
    pub asymmetry: f64,
    /// Standard deviation of the measurement noise, in amperes.
    pub noise_std: f64,
    /// Seed of the deterministic noise stream.
    pub seed: u64,
    /// Samples per second.
    pub sample_rate: f64,
}

impl Default for ArcFaultScenario {
    fn default() -> Self {
        Self {
            amplitude: 100.0,
            frequency: 400.0,
            duration: 0.5,
            fault_start: 0.2,
            fault_end: 0.3,
            precursor_lead: 0.015,
            shoulder_width: 15.0,
            asymmetry: 0.12,
            noise_std: 0.1,
            seed: 7,
            sample_rate: 20_000.0,
        }
    }
}

impl ArcFaultScenario {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return bad(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            ));
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad(format!(
                "frequency must be positive, got {}",
                self.frequency
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            ));
        }
        if !self.fault_start.is_finite() || self.fault_start < 0.0 {
            return bad(format!(
                "fault_start must be non-negative, got {}",
                self.fault_start
            ));
        }
        if !self.fault_end.is_finite() || self.fault_end > self.duration {
            return bad(format!(
                "fault_end must lie within the record duration {}, got {}",
                self.duration, self.fault_end
            ));
        }
        if !(self.precursor_lead.is_finite() && self.precursor_lead >= 0.0) {
            return bad(format!(
                "precursor_lead must be non-negative, got {}",
                self.precursor_lead
            ));
        }
        if self.precursor_lead > self.fault_start {
            return bad(format!(
                "precursor_lead {} reaches before time zero (fault_start {})",
                self.precursor_lead, self.fault_start
            ));
        }
        if !(self.shoulder_width.is_finite() && self.shoulder_width >= 0.0) {
            return bad(format!(
                "shoulder_width must be non-negative, got {}",
                self.shoulder_width
            ));
        }
        if !(self.asymmetry.is_finite() && (0.0..1.0).contains(&self.asymmetry)) {
            return bad(format!(
                "asymmetry must lie in [0, 1), got {}",
                self.asymmetry
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            ));
        }
        Ok(())
    }

    /// The same scenario with the fault signatures removed but the noise
    /// stream untouched: the control record for detection experiments.
    pub fn without_distortion(&self) -> Self {
        Self {
            shoulder_width: 0.0,
            asymmetry: 0.0,
            ..self.clone()
        }
    }

    /// Fault strength in `[0, 1]` at time `t`: zero outside
    /// `[fault_start - precursor_lead, fault_end]`, one inside the fault
    /// window, linear in between.
    fn strength(&self, t: f64) -> f64 {
        if self.fault_start >= self.fault_end {
            return 0.0;
        }
        let ramp_start = self.fault_start - self.precursor_lead;
        if t < ramp_start || t > self.fault_end {
            0.0
        } else if t >= self.fault_start {
            1.0
        } else {
            (t - ramp_start) / self.precursor_lead
        }
    }
}

/// Synthesizes the waveform described by `scenario`.
pub fn generate(scenario: &ArcFaultScenario) -> Result<WaveformSeries> {
    scenario.validate()?;
    let dt = 1.0 / scenario.sample_rate;
    let n = (scenario.duration * scenario.sample_rate).round() as usize;
    if n == 0 {
        return Err(Error::Config(
            "duration is shorter than one sample period".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let normal = StandardNormal;
    // History for the difference filters; drawing it up front keeps the
    // per-sample draw count constant from sample zero.
    let mut hist_meas: [f64; 3] = [
        normal.sample(&mut rng),
        normal.sample(&mut rng),
        normal.sample(&mut rng),
    ];
    let mut prev_burst: f64 = normal.sample(&mut rng);
    let tone_phase: f64 = rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU;
    // Third difference has variance 1 + 9 + 9 + 1 = 20.
    let d3_scale = 20.0_f64.sqrt();
    // A sine of amplitude sqrt(2 p) has mean power p; the difference stream
    // carries the complement, so the total noise variance stays at one.
    let tone_amp = (2.0 * TONE_POWER).sqrt();
    let d3_frac = (1.0 - TONE_POWER).sqrt();
    let tone_omega = std::f64::consts::TAU * TONE_FREQUENCY_RATIO * scenario.frequency;

    let omega = 2.0 * std::f64::consts::PI * scenario.frequency;
    let sw = scenario.shoulder_width;
    let mut samples = Vec::with_capacity(n);

    for k in 0..n {
        // Exactly two draws per sample, used or not, so scenarios that
        // differ only in distortion shape share the same noise stream.
        let g_meas: f64 = normal.sample(&mut rng);
        let g_burst: f64 = normal.sample(&mut rng);
        let t = k as f64 * dt;
        let meas = d3_frac * (g_meas - 3.0 * hist_meas[2] + 3.0 * hist_meas[1] - hist_meas[0])
            / d3_scale
            + tone_amp * (tone_omega * t + tone_phase).sin();
        let burst = (g_burst - prev_burst) / std::f64::consts::SQRT_2;
        hist_meas = [hist_meas[1], hist_meas[2], g_meas];
        prev_burst = g_burst;

        let base = scenario.amplitude * (omega * t).sin();
        let s = scenario.strength(t);
        let mut x = base;
        if s > 0.0 {
            if sw > 0.0 && base.abs() < sw {
                x = base * (1.0 - s * (1.0 - base.abs() / sw));
            }
            if base < 0.0 {
                x *= 1.0 - s * scenario.asymmetry;
            }
            if sw > 0.0 && base.abs() < sw {
                x += 0.5 * s * sw * burst;
            }
        }
        samples.push(x + scenario.noise_std * meas);
    }

    WaveformSeries::new(samples, dt, 0.0)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // 50 Hz puts a crest exactly on the sample grid (quarter cycle = 100
    // samples), so the max-sample-equals-amplitude check is exact.
    fn pure_sine() -> ArcFaultScenario {
        ArcFaultScenario {
            frequency: 50.0,
            fault_start: 0.3,
            fault_end: 0.3,
            noise_std: 0.0,
            ..ArcFaultScenario::default()
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let sc = ArcFaultScenario::default();
        let a = generate(&sc).unwrap();
        let b = generate(&sc).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_eq!(a.dt(), b.dt());
    }

    #[test]
    fn default_scenario_has_ten_thousand_samples() {
        let w = generate(&ArcFaultScenario::default()).unwrap();
        assert_eq!(w.len(), 10_000);
        assert_eq!(w.t0(), 0.0);
        assert_relative_eq!(w.dt(), 5e-5);
    }

    #[test]
    fn no_fault_no_noise_is_a_pure_sinusoid() {
        let w = generate(&pure_sine()).unwrap();
        let max = w.samples().iter().cloned().fold(f64::MIN, f64::max);
        assert_relative_eq!(max, 100.0, max_relative = 1e-9);
        assert_relative_eq!(w.rms(), 100.0 / 2f64.sqrt(), max_relative = 1e-3);
    }

    #[test]
    fn zero_length_fault_window_means_no_distortion() {
        let faulted = ArcFaultScenario {
            fault_start: 0.3,
            fault_end: 0.3,
            ..ArcFaultScenario::default()
        };
        let clean = faulted.without_distortion();
        let a = generate(&faulted).unwrap();
        let b = generate(&clean).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn control_scenario_shares_the_noise_stream() {
        let sc = ArcFaultScenario::default();
        let fault = generate(&sc).unwrap();
        let control = generate(&sc.without_distortion()).unwrap();
        let ramp_start = sc.fault_start - sc.precursor_lead;
        for k in 0..fault.len() {
            let t = fault.time_at(k);
            if t < ramp_start || t > sc.fault_end {
                assert_eq!(
                    fault.samples()[k],
                    control.samples()[k],
                    "sample {k} at t={t} differs outside the fault window"
                );
            }
        }
        // And the fault window itself must actually differ.
        let mid = fault.slice(0.2, 0.3).unwrap();
        let mid_control = control.slice(0.2, 0.3).unwrap();
        assert_ne!(mid.samples(), mid_control.samples());
    }

    #[test]
    fn noise_has_the_requested_deviation() {
        let sc = ArcFaultScenario {
            amplitude: 1e-12, // bury the carrier so only noise remains
            noise_std: 2.0,
            fault_start: 0.3,
            fault_end: 0.3,
            ..ArcFaultScenario::default()
        };
        let w = generate(&sc).unwrap();
        let std = w.rms();
        assert_relative_eq!(std, 2.0, max_relative = 0.05);
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let sc = ArcFaultScenario {
            asymmetry: 1.0,
            ..ArcFaultScenario::default()
        };
        assert!(matches!(sc.validate(), Err(Error::Config(_))));
        let sc = ArcFaultScenario {
            precursor_lead: 0.5,
            ..ArcFaultScenario::default()
        };
        assert!(matches!(sc.validate(), Err(Error::Config(_))));
        let sc = ArcFaultScenario {
            fault_end: 0.9,
            ..ArcFaultScenario::default()
        };
        assert!(matches!(sc.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn slice_selects_the_half_open_interval() {
        let w = generate(&ArcFaultScenario::default()).unwrap();
        let s = w.slice(0.1, 0.18).unwrap();
        assert_eq!(s.len(), 1600);
        assert_relative_eq!(s.t0(), 0.1, max_relative = 1e-12);
        assert_eq!(s.samples()[0], w.samples()[2000]);
        assert_eq!(*s.samples().last().unwrap(), w.samples()[3599]);
    }

    #[test]
    fn adjacent_slices_concatenate_exactly() {
        let w = generate(&ArcFaultScenario::default()).unwrap();
        let ab = w.slice(0.05, 0.31).unwrap();
        let a = w.slice(0.05, 0.17).unwrap();
        let b = w.slice(0.17, 0.31).unwrap();
        let mut joined = a.samples().to_vec();
        joined.extend_from_slice(b.samples());
        assert_eq!(joined, ab.samples());
    }

    #[test]
    fn slice_rejects_out_of_range_and_empty_requests() {
        let w = WaveformSeries::new(vec![1.0; 100], 0.01, 0.0).unwrap();
        assert!(matches!(w.slice(-0.5, 0.5), Err(Error::Range(_))));
        assert!(matches!(w.slice(0.5, 2.0), Err(Error::Range(_))));
        assert!(matches!(w.slice(0.7, 0.7), Err(Error::Range(_))));
        // Full-range slice is the identity.
        let full = w.slice(0.0, 1.0).unwrap();
        assert_eq!(full.samples(), w.samples());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let w = generate(&ArcFaultScenario::default()).unwrap();
        let mut buf = Vec::new();
        write_csv_writer(&w, &mut buf).unwrap();
        let r = load_csv_reader(buf.as_slice(), &CsvLayout::default()).unwrap();
        assert_eq!(r.samples(), w.samples());
        assert_relative_eq!(r.dt(), w.dt(), max_relative = 1e-12);
        assert_relative_eq!(r.t0(), w.t0(), epsilon = 1e-12);
    }

    #[test]
    fn csv_header_is_optional() {
        let with = "time,current\n0.0,1.5\n0.001,2.5\n";
        let without = "0.0,1.5\n0.001,2.5\n";
        let a = load_csv_reader(with.as_bytes(), &CsvLayout::default()).unwrap();
        let b = load_csv_reader(without.as_bytes(), &CsvLayout::default()).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_eq!(a.samples(), &[1.5, 2.5]);
        assert_relative_eq!(a.dt(), 1e-3);
    }

    #[test]
    fn csv_current_only_needs_dt() {
        let text = "1.0\n2.0\n3.0\n";
        let layout = CsvLayout::current_only(0.5);
        let w = load_csv_reader(text.as_bytes(), &layout).unwrap();
        assert_eq!(w.samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(w.dt(), 0.5);
        assert_eq!(w.t0(), 0.0);

        let missing = CsvLayout {
            time_column: None,
            current_column: 0,
            dt: None,
            t0: None,
        };
        assert!(matches!(
            load_csv_reader(text.as_bytes(), &missing),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_parse_errors_carry_line_numbers() {
        let text = "time,current\n0.0,1.0\n0.001,oops\n";
        match load_csv_reader(text.as_bytes(), &CsvLayout::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let short = "time,current\n0.0\n";
        match load_csv_reader(short.as_bytes(), &CsvLayout::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_non_uniform_time() {
        let text = "0.0,1.0\n0.001,2.0\n0.0025,3.0\n";
        assert!(matches!(
            load_csv_reader(text.as_bytes(), &CsvLayout::default()),
            Err(Error::Sampling(_))
        ));
        let backwards = "0.0,1.0\n0.002,2.0\n0.001,3.0\n";
        assert!(matches!(
            load_csv_reader(backwards.as_bytes(), &CsvLayout::default()),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn csv_rejects_empty_input() {
        assert!(matches!(
            load_csv_reader("".as_bytes(), &CsvLayout::default()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            load_csv_reader("time,current\n".as_bytes(), &CsvLayout::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn single_row_with_time_column_needs_explicit_dt() {
        let text = "0.25,9.0\n";
        assert!(matches!(
            load_csv_reader(text.as_bytes(), &CsvLayout::default()),
            Err(Error::Sampling(_))
        ));
        let layout = CsvLayout {
            dt: Some(0.1),
            ..CsvLayout::default()
        };
        let w = load_csv_reader(text.as_bytes(), &layout).unwrap();
        assert_eq!(w.t0(), 0.25);
        assert_eq!(w.dt(), 0.1);
    }
}
