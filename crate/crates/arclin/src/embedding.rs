//! Time-delay embedding: turning a scalar waveform into a matrix of
//! overlapping delay windows.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::WaveformSeries;

/// Sizing of the delay embedding.
///
/// `imdim` is the assumed dimension of the invariant manifold carrying the
/// healthy dynamics, `n_observables` the number of independent channels per
/// sample (one for a scalar current), and `over_embedding` extra delays kept
/// beyond the reconstruction minimum as noise-averaging headroom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub imdim: usize,
    pub over_embedding: usize,
    pub n_observables: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            imdim: 2,
            over_embedding: 3,
            n_observables: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.imdim == 0 {
            return Err(Error::Config("imdim must be at least 1".into()));
        }
        if self.n_observables == 0 {
            return Err(Error::Config("n_observables must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of consecutive samples per delay window:
    /// `ceil((2 * imdim + 1) / n_observables) + over_embedding`.
    ///
    /// The first term is the reconstruction minimum, so the total embedding
    /// dimension `delay_dimension * n_observables` always reaches
    /// `2 * imdim + 1`.
    pub fn delay_dimension(&self) -> usize {
        (2 * self.imdim + 1).div_ceil(self.n_observables) + self.over_embedding
    }
}

/// A waveform unrolled into delay coordinates: column `k` holds the forward
/// window `[x_k, x_{k+1}, ..., x_{k+n_n-1}]`, so successive columns overlap
/// in all but one entry and column `k + 1` is column `k` advanced one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    data: DMatrix<f64>,
    source_dt: f64,
}

impl DelayMatrix {
    /// Wraps a state-snapshot matrix directly, one column per snapshot, for
    /// callers whose data did not come from the scalar delay embedding.
    pub fn from_parts(data: DMatrix<f64>, source_dt: f64) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(Error::InsufficientData(
                "a delay matrix needs at least two columns".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(
                "delay matrix entries must be finite".into(),
            ));
        }
        if !(source_dt.is_finite() && source_dt > 0.0) {
            return Err(Error::Sampling(format!(
                "sample period must be positive, got {source_dt}"
            )));
        }
        Ok(Self { data, source_dt })
    }

    /// Window length `n_n` (rows).
    pub fn n_n(&self) -> usize {
        self.data.nrows()
    }

    /// Number of delay windows (columns).
    pub fn n_columns(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Sample period of the source waveform.
    pub fn source_dt(&self) -> f64 {
        self.source_dt
    }

    /// First row: the undelayed observable, one value per window.
    pub fn head_observable(&self) -> Vec<f64> {
        self.data.row(0).iter().cloned().collect()
    }

    /// Writes one delay window per CSV row, for inspection.
    pub fn to_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(out);
        for col in self.data.column_iter() {
            let fields: Vec<String> = col.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        std::io::Write::flush(&mut w)?;
        Ok(())
    }
}

/// Embeds a waveform of length `L` into `L - n_n + 1` delay windows.
///
/// Needs at least `n_n + 1` samples so that the result has two columns and
/// one forward step can be formed from it.
pub fn embed(series: &WaveformSeries, config: &EmbeddingConfig) -> Result<DelayMatrix> {
    config.validate()?;
    let n_n = config.delay_dimension();
    let l = series.len();
    if l < n_n + 1 {
        return Err(Error::InsufficientData(format!(
            "embedding needs at least {} samples for a window of {n_n}, got {l}",
            n_n + 1
        )));
    }
    let m = l - n_n + 1;
    let x = series.samples();
    let data = DMatrix::from_fn(n_n, m, |i, k| x[k + i]);
    DelayMatrix::from_parts(data, series.dt())
}

// ---------------------------------------------------------------------------
