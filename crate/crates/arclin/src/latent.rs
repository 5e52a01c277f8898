//! The reduced latent model: a near-identity polynomial coordinate change
//! on top of a linear projection, fitted so that the latent state evolves
//! linearly, plus a polynomial decoder back to delay coordinates.

use std::io::Write;
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::DelayMatrix;
use crate::error::{Error, Result};
use crate::lifting::{enumerate, MonomialBasis};
use crate::spectral;
use crate::waveform::WaveformSeries;

/// Default distance below which a product of eigenvalues counts as colliding
/// with a target eigenvalue. Deliberately tight: neutral conjugate pairs sit
/// exactly on their own odd-order products, so a loose tolerance would flag
/// every healthy oscillatory fit.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-6;

/// Singular-value ratio below which the coordinate-change Jacobian counts as
/// rank deficient.
const RANK_RTOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Knobs of the latent fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Latent dimension `d`.
    pub latent_dim: usize,
    /// Highest monomial degree `r` in the coordinate change and decoder.
    pub lift_degree: u32,
    /// Tikhonov weight, relative to the largest diagonal of each solve's
    /// normal matrix.
    pub ridge: f64,
    /// Alternating least-squares rounds.
    pub n_alternations: usize,
    /// Project the operator spectrum onto the unit circle after fitting.
    pub confine_spectrum: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            lift_degree: 3,
            ridge: 1e-8,
            n_alternations: 5,
            confine_spectrum: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        if !(2..=12).contains(&self.lift_degree) {
            return Err(Error::Config(format!(
                "lift_degree must lie in [2, 12], got {}",
                self.lift_degree
            )));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::Config(format!(
                "ridge must be non-negative and finite, got {}",
                self.ridge
            )));
        }
        if self.n_alternations == 0 || self.n_alternations > 10_000 {
            return Err(Error::Config(format!(
                "n_alternations must lie in [1, 10000], got {}",
                self.n_alternations
            )));
        }
        Ok(())
    }
}

/// Fit provenance carried inside the model file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelMetadata {
    pub fit: Option<FitConfig>,
    pub loss_history: Vec<f64>,
    /// Start of the training slice, when the model came from a timed record.
    pub train_start: Option<f64>,
    /// End of the training slice; prediction for detection starts here.
    pub train_end: Option<f64>,
}

/// Quality measures of a fit, all referring to the operator before any
/// spectrum confinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Mean squared invariance residual after each alternation round.
    pub loss_history: Vec<f64>,
    /// Residual of the stored coordinate change after the trailing operator
    /// refresh; agrees with the last history entry up to regularization-level
    /// slack.
    pub final_loss: f64,
    /// Root mean square decoder error over the training windows.
    pub reconstruction_rms: f64,
    /// No eigenvalue product collides with a spectrum member (see
    /// `check_nonresonance`).
    pub nonresonance_ok: bool,
    /// The coordinate-change Jacobian at the origin has full rank.
    pub rank_ok: bool,
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A fitted reduced-order model of delay windows `y`:
///
/// * encode: `gamma = P (y - mean)`, then `phi = gamma + W K(gamma)`;
/// * evolve: `phi_{k+1} = B phi_k`;
/// * decode: `y_hat = mean + D1 phi + D2 K(phi)`.
///
/// `K` is the graded monomial lift of degrees `2..=r`, so the coordinate
/// change is the identity plus higher-order terms and stays invertible near
/// the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    mean: DVector<f64>,
    projection: DMatrix<f64>,
    correction: DMatrix<f64>,
    operator: DMatrix<f64>,
    decoder_linear: DMatrix<f64>,
    decoder_nonlinear: DMatrix<f64>,
    correction_basis: MonomialBasis,
    decoder_basis: MonomialBasis,
    dt: f64,
    metadata: ModelMetadata,
}

impl LatentModel {
    /// Assembles a model from explicit parts, validating every shape and
    /// invariant. This is also the gate through which deserialized files
    /// pass.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        mean: DVector<f64>,
        projection: DMatrix<f64>,
        correction: DMatrix<f64>,
        operator: DMatrix<f64>,
        decoder_linear: DMatrix<f64>,
        decoder_nonlinear: DMatrix<f64>,
        correction_basis: MonomialBasis,
        decoder_basis: MonomialBasis,
        dt: f64,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        let n_n = mean.len();
        let d = projection.nrows();
        if n_n == 0 || d == 0 {
            return Err(Error::Shape("model dimensions must be positive".into()));
        }
        if d > n_n {
            return Err(Error::Shape(format!(
                "latent dimension {d} exceeds window length {n_n}"
            )));
        }
        correction_basis.validate()?;
        decoder_basis.validate()?;
        if correction_basis.n_vars() != d || decoder_basis.n_vars() != d {
            return Err(Error::Shape(format!(
                "bases must act on {d} latent variables"
            )));
        }
        if correction_basis.min_degree() < 2 || decoder_basis.min_degree() < 2 {
            return Err(Error::Shape(
                "correction and decoder bases must start at degree 2".into(),
            ));
        }
        let checks: [(&str, usize, usize, &DMatrix<f64>); 5] = [
            ("projection", d, n_n, &projection),
            ("correction", d, correction_basis.len(), &correction),
            ("operator", d, d, &operator),
            ("decoder_linear", n_n, d, &decoder_linear),
            (
                "decoder_nonlinear",
                n_n,
                decoder_basis.len(),
                &decoder_nonlinear,
            ),
        ];
        for (name, rows, cols, m) in checks {
            if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Shape(format!(
                    "{name} must be {rows}x{cols}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        let all_finite = mean.iter().all(|x| x.is_finite())
            && [
                &projection,
                &correction,
                &operator,
                &decoder_linear,
                &decoder_nonlinear,
            ]
            .iter()
            .all(|m| m.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite("model contains NaN or infinity".into()));
        }
        // Rows of the projection must be orthonormal.
        let gram = &projection * projection.transpose();
        let identity = DMatrix::<f64>::identity(d, d);
        if (gram - identity).amax() > 1e-6 {
            return Err(Error::Shape("projection rows are not orthonormal".into()));
        }
        Ok(Self {
            mean,
            projection,
            correction,
            operator,
            decoder_linear,
            decoder_nonlinear,
            correction_basis,
            decoder_basis,
            dt,
            metadata,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn correction(&self) -> &DMatrix<f64> {
        &self.correction
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn decoder_linear(&self) -> &DMatrix<f64> {
        &self.decoder_linear
    }

    pub fn decoder_nonlinear(&self) -> &DMatrix<f64> {
        &self.decoder_nonlinear
    }

    pub fn correction_basis(&self) -> &MonomialBasis {
        &self.correction_basis
    }

    pub fn decoder_basis(&self) -> &MonomialBasis {
        &self.decoder_basis
    }

    /// Delay-window length the model operates on.
    pub fn window_len(&self) -> usize {
        self.mean.len()
    }

    /// Latent dimension `d`.
    pub fn latent_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut ModelMetadata {
        &mut self.metadata
    }

    /// Maps one delay window to its latent state.
    pub fn encode(&self, window: &[f64]) -> Result<DVector<f64>> {
        if window.len() != self.window_len() {
            return Err(Error::Shape(format!(
                "encode expects a window of {}, got {}",
                self.window_len(),
                window.len()
            )));
        }
        if window.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(
                "encode input contains NaN or infinity".into(),
            ));
        }
        let centered = DVector::from_row_slice(window) - &self.mean;
        let gamma = &self.projection * centered;
        let lifted = self.correction_basis.lift(gamma.as_slice())?;
        Ok(&gamma + &self.correction * DVector::from_vec(lifted))
    }

    /// Maps a latent state back to a full delay window.
    pub fn decode(&self, phi: &[f64]) -> Result<DVector<f64>> {
        if phi.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "decode expects a latent state of {}, got {}",
                self.latent_dim(),
                phi.len()
            )));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(
                "decode input contains NaN or infinity".into(),
            ));
        }
        let phi_v = DVector::from_row_slice(phi);
        let lifted = DVector::from_vec(self.decoder_basis.lift(phi)?);
        Ok(&self.mean + &self.decoder_linear * phi_v + &self.decoder_nonlinear * lifted)
    }

    /// Rolls the latent state forward, returning `n_steps + 1` columns
    /// starting with `phi0` itself.
    pub fn predict_latent(&self, phi0: &[f64], n_steps: usize) -> Result<DMatrix<f64>> {
        if phi0.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "predict_latent expects a latent state of {}, got {}",
                self.latent_dim(),
                phi0.len()
            )));
        }
        if phi0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(
                "initial state contains NaN or infinity".into(),
            ));
        }
        let d = self.latent_dim();
        let mut out = DMatrix::zeros(d, n_steps + 1);
        let mut phi = DVector::from_row_slice(phi0);
        out.column_mut(0).copy_from(&phi);
        for k in 1..=n_steps {
            phi = &self.operator * phi;
            out.column_mut(k).copy_from(&phi);
        }
        if out.column(n_steps).iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(
                "latent rollout diverged to non-finite values".into(),
            ));
        }
        Ok(out)
    }

    /// Predicts the observable forward from the end of `seed_window`.
    ///
    /// The last `window_len` samples of the seed form the initial latent
    /// state. Output sample `i` is the trailing entry of the decoded window
    /// after `i + 1` steps, which is the model's estimate of the sample at
    /// `seed.t_end() + i * dt`; the returned series therefore starts at
    /// `seed.t_end()` and contains only times the seed does not cover.
    pub fn predict_observable(
        &self,
        seed_window: &WaveformSeries,
        horizon: f64,
    ) -> Result<WaveformSeries> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Range(format!(
                "prediction horizon must be positive, got {horizon}"
            )));
        }
        let rel_dt = (seed_window.dt() - self.dt).abs() / self.dt;
        if rel_dt > 1e-9 {
            return Err(Error::Incompatible(format!(
                "seed sample period {} does not match the model's {}",
                seed_window.dt(),
                self.dt
            )));
        }
        let n_n = self.window_len();
        if seed_window.len() < n_n {
            return Err(Error::InsufficientData(format!(
                "seed needs at least {n_n} samples, got {}",
                seed_window.len()
            )));
        }
        let n_steps = (horizon / self.dt + 1e-9).floor() as usize;
        if n_steps == 0 {
            return Err(Error::Range(format!(
                "horizon {horizon} is shorter than one sample period {}",
                self.dt
            )));
        }

        let tail = &seed_window.samples()[seed_window.len() - n_n..];
        let mut phi = self.encode(tail)?;
        // Only the trailing decoder row is needed per step.
        let d1_tail = self.decoder_linear.row(n_n - 1).into_owned();
        let d2_tail = self.decoder_nonlinear.row(n_n - 1).into_owned();
        let mean_tail = self.mean[n_n - 1];

        let mut samples = Vec::with_capacity(n_steps);
        let mut lift_buf: Vec<f64>;
        for _ in 0..n_steps {
            phi = &self.operator * phi;
            lift_buf = self
                .decoder_basis
                .lift(phi.as_slice())
                .map_err(|_| Error::Numeric("prediction diverged to non-finite values".into()))?;
            let mut value = mean_tail;
            for (j, p) in phi.iter().enumerate() {
                value += d1_tail[j] * p;
            }
            for (j, l) in lift_buf.iter().enumerate() {
                value += d2_tail[j] * l;
            }
            samples.push(value);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(
                "prediction diverged to non-finite values".into(),
            ));
        }
        WaveformSeries::new(samples, self.dt, seed_window.t_end())
    }

    /// Latent and corrected trajectories of every column of `matrix`.
    fn latent_path(&self, matrix: &DelayMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if matrix.n_n() != self.window_len() {
            return Err(Error::Shape(format!(
                "matrix windows of {} do not fit a model over {}",
                matrix.n_n(),
                self.window_len()
            )));
        }
        let mut centered = matrix.data().clone_owned();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        let gamma = &self.projection * centered;
        let lifted = self.correction_basis.lift_matrix(&gamma)?;
        let phi = &gamma + &self.correction * lifted;
        Ok((gamma, phi))
    }

    /// Mean squared one-step invariance residual of the stored coordinate
    /// change and operator over the columns of `matrix`.
    pub fn invariance_loss(&self, matrix: &DelayMatrix) -> Result<f64> {
        let m = matrix.n_columns();
        if m < 2 {
            return Err(Error::InsufficientData(
                "invariance loss needs at least two delay windows".into(),
            ));
        }
        let (_, phi) = self.latent_path(matrix)?;
        Ok(transition_loss(&phi, &self.operator))
    }
}

/// Mean squared `phi_{k+1} - B phi_k` over all transitions.
fn transition_loss(phi: &DMatrix<f64>, operator: &DMatrix<f64>) -> f64 {
    let m = phi.ncols();
    let phi0 = phi.columns(0, m - 1);
    let phi1 = phi.columns(1, m - 1);
    let residual = phi1 - operator * phi0;
    residual.norm_squared() / (m - 1) as f64
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Solves `X (G + ridge I) = RhsT^T`, i.e. returns `RhsT^T (G + l I)^{-1}`,
/// with the ridge taken relative to the largest diagonal of `G`.
fn ridge_normal_solve(
    mut gram: DMatrix<f64>,
    rhs_t: &DMatrix<f64>,
    rel_ridge: f64,
    what: &str,
) -> Result<DMatrix<f64>> {
    let max_diag = (0..gram.nrows())
        .map(|i| gram[(i, i)])
        .fold(0.0_f64, f64::max);
    if !(max_diag.is_finite() && max_diag > 0.0) {
        return Err(Error::SingularFit(format!(
            "{what}: normal matrix is degenerate; the signal may be constant"
        )));
    }
    let ridge = rel_ridge * max_diag;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::SingularFit(format!(
            "{what}: normal equations are rank deficient beyond ridge rescue"
        ))
    })?;
    Ok(chol.solve(rhs_t).transpose())
}

/// Least-squares operator for fixed correction: `B` minimizing
/// `|phi_1 - B phi_0|^2` plus ridge.
fn solve_operator(phi: &DMatrix<f64>, rel_ridge: f64) -> Result<DMatrix<f64>> {
    // Equilibrate the coordinates so the ridge weighs each one relative to
    // its own scale; a delay window much shorter than the signal period makes
    // the latent ellipse eccentric enough that a shared ridge would otherwise
    // flatten the minor axis. The solve runs in scaled coordinates and the
    // result is mapped back, which leaves the spectrum untouched.
    let mut scaled = phi.clone_owned();
    let scales = equilibrate_rows(&mut scaled);
    let m = scaled.ncols();
    let phi0 = scaled.columns(0, m - 1);
    let phi1 = scaled.columns(1, m - 1);
    let gram = phi0 * phi0.transpose();
    let rhs_t = phi0 * phi1.transpose();
    let mut b = ridge_normal_solve(gram, &rhs_t, rel_ridge, "operator step")?;
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            b[(i, j)] *= scales[i] / scales[j];
        }
    }
    Ok(b)
}

/// Least-squares correction for fixed operator: `W` minimizing
/// `|gamma_1 + W k_1 - B (gamma_0 + W k_0)|^2` plus ridge, solved through
/// the stacked `d * m` normal equations.
fn solve_correction(
    gamma: &DMatrix<f64>,
    k: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rel_ridge: f64,
) -> Result<DMatrix<f64>> {
    let d = gamma.nrows();
    let m_feat = k.nrows();
    let m = gamma.ncols();
    let g0 = gamma.columns(0, m - 1);
    let g1 = gamma.columns(1, m - 1);
    let k0 = k.columns(0, m - 1);
    let k1 = k.columns(1, m - 1);

    let s11 = k1 * k1.transpose();
    let s10 = k1 * k0.transpose();
    let s00 = k0 * k0.transpose();
    let btb = b.transpose() * b;

    // Normal matrix over vec(W), one d x d block per feature pair.
    let dim = d * m_feat;
    let mut normal = DMatrix::zeros(dim, dim);
    for j in 0..m_feat {
        for l in 0..m_feat {
            for r in 0..d {
                for c in 0..d {
                    let mut v = s00[(j, l)] * btb[(r, c)];
                    if r == c {
                        v += s11[(j, l)];
                    }
                    v -= s10[(j, l)] * b[(r, c)];
                    v -= s10[(l, j)] * b[(c, r)];
                    normal[(j * d + r, l * d + c)] = v;
                }
            }
        }
    }

    let e = g1 - b * g0;
    let rhs_mat = &e * k1.transpose() - b.transpose() * (&e * k0.transpose());
    let mut rhs = DVector::zeros(dim);
    for j in 0..m_feat {
        for r in 0..d {
            rhs[j * d + r] = -rhs_mat[(r, j)];
        }
    }

    let solved = ridge_normal_solve(
        normal,
        &DMatrix::from_column_slice(dim, 1, rhs.as_slice()),
        rel_ridge,
        "correction step",
    )?;
    let mut w = DMatrix::zeros(d, m_feat);
    for j in 0..m_feat {
        for r in 0..d {
            w[(r, j)] = solved[(0, j * d + r)];
        }
    }
    Ok(w)
}

/// Scales each row to unit root mean square in place, returning the scales.
/// Degenerate rows keep scale 1.
fn equilibrate_rows(m: &mut DMatrix<f64>) -> DVector<f64> {
    let cols = m.ncols() as f64;
    let mut scales = DVector::from_element(m.nrows(), 1.0);
    for (i, mut row) in m.row_iter_mut().enumerate() {
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / cols).sqrt();
        if rms.is_finite() && rms > 0.0 {
            scales[i] = rms;
            for v in row.iter_mut() {
                *v /= rms;
            }
        }
    }
    scales
}

/// Fits a latent model to the delay windows.
///
/// Steps: (1) center the columns and take the top `latent_dim` left singular
/// directions as the projection, each row sign-fixed so its largest-moduli
/// entry is positive; (2) lift the latent trajectory through the graded
/// basis of degrees `2..=lift_degree`; (3) alternate ridge least squares,
/// operator step then correction step, for `n_alternations` rounds starting
/// from zero correction, recording the invariance loss after each round,
/// then refresh the operator once more so the stored operator is optimal
/// for the stored correction; (4) fit the decoder on `[phi; K(phi)]` by
/// ridge least squares, before any confinement so reconstruction reflects
/// the fitted dynamics; (5) fill diagnostics; (6) confine the spectrum if
/// configured.
///
/// Inside the solvers every lifted feature row is equilibrated to unit root
/// mean square, so the relative ridge weighs coefficients evenly no matter
/// the signal amplitude; the stored matrices are expressed in the plain
/// monomial basis again.
pub fn fit(matrix: &DelayMatrix, config: &FitConfig) -> Result<(LatentModel, FitDiagnostics)> {
    config.validate()?;
    let n_n = matrix.n_n();
    let m = matrix.n_columns();
    let d = config.latent_dim;
    if d > n_n {
        return Err(Error::Config(format!(
            "latent_dim {d} exceeds the delay window length {n_n}"
        )));
    }
    let basis = enumerate(d, 2, config.lift_degree);
    let m_feat = basis.len();
    let min_cols = (10 * d).max(m_feat + d);
    if m < min_cols {
        return Err(Error::InsufficientData(format!(
            "fit needs at least {min_cols} delay windows for latent_dim {d} \
             and lift_degree {}, got {m}",
            config.lift_degree
        )));
    }

    // (1) Mean, centration, projection.
    let mean = matrix.data().column_mean();
    let mut centered = matrix.data().clone_owned();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let svd = centered.clone().svd(true, false);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Numeric("SVD did not produce singular vectors".into()))?;
    let sv = &svd.singular_values;
    if sv[0] <= 0.0 || sv[d - 1] <= 1e-12 * sv[0] {
        return Err(Error::SingularFit(format!(
            "data has numerical rank below latent_dim {d}; the signal may be constant"
        )));
    }
    let mut projection = u.columns(0, d).transpose().into_owned();
    for mut row in projection.row_iter_mut() {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < 0.0 {
            row.neg_mut();
        }
    }

    // (2) Latent trajectory and its lift, feature rows equilibrated.
    let gamma = &projection * &centered;
    let mut lifted = basis.lift_matrix(&gamma)?;
    let feature_scales = equilibrate_rows(&mut lifted);

    // (3) Alternating ridge least squares, starting from zero correction.
    let mut w = DMatrix::zeros(d, m_feat);
    let mut phi = gamma.clone();
    let mut loss_history = Vec::with_capacity(config.n_alternations);
    for _ in 0..config.n_alternations {
        let b_round = solve_operator(&phi, config.ridge)?;
        w = solve_correction(&gamma, &lifted, &b_round, config.ridge)?;
        phi = &gamma + &w * &lifted;
        loss_history.push(transition_loss(&phi, &b_round));
    }
    // Trailing refresh: the stored operator is the least-squares optimum
    // for the stored correction.
    let mut b = solve_operator(&phi, config.ridge)?;
    let final_loss = transition_loss(&phi, &b);
    // Back to the plain monomial basis.
    for j in 0..m_feat {
        for r in 0..d {
            w[(r, j)] /= feature_scales[j];
        }
    }

    // (4) Decoder on the corrected coordinates, before confinement.
    let decoder_basis = enumerate(d, 2, config.lift_degree);
    let kphi = decoder_basis.lift_matrix(&phi)?;
    let mut z = DMatrix::zeros(d + m_feat, m);
    z.rows_mut(0, d).copy_from(&phi);
    z.rows_mut(d, m_feat).copy_from(&kphi);
    let z_scales = equilibrate_rows(&mut z);
    let gram = &z * z.transpose();
    let rhs_t = &z * centered.transpose();
    let mut decoder = ridge_normal_solve(gram, &rhs_t, config.ridge, "decoder step")?;
    let residual = &centered - &decoder * &z;
    let reconstruction_rms = (residual.norm_squared() / (m * n_n) as f64).sqrt();
    for j in 0..d + m_feat {
        for r in 0..n_n {
            decoder[(r, j)] /= z_scales[j];
        }
    }
    let decoder_linear = decoder.columns(0, d).into_owned();
    let decoder_nonlinear = decoder.columns(d, m_feat).into_owned();

    // (5) Diagnostics on the unconfined operator.
    let eigenvalues = spectral::eigenvalues_of(&b)?;
    let nonresonance = check_nonresonance(&eigenvalues, config.lift_degree, DEFAULT_RESONANCE_TOL);
    let diagnostics = FitDiagnostics {
        loss_history: loss_history.clone(),
        final_loss,
        reconstruction_rms,
        nonresonance_ok: nonresonance.ok,
        rank_ok: jacobian_rank_ok(&w, &basis),
    };

    // (6) Optional spectrum confinement.
    if config.confine_spectrum {
        b = spectral::confine(&b)?;
    }

    let model = LatentModel::from_parts(
        mean,
        projection,
        w,
        b,
        decoder_linear,
        decoder_nonlinear,
        basis,
        decoder_basis,
        matrix.source_dt(),
        ModelMetadata {
            fit: Some(config.clone()),
            loss_history,
            train_start: None,
            train_end: None,
        },
    )?;
    Ok((model, diagnostics))
}

// ---------------------------------------------------------------------------
// Diagnostics helpers
// ---------------------------------------------------------------------------

/// One near-collision between an eigenvalue and a product of eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceHit {
    /// Index of the eigenvalue that the product collides with.
    pub target: usize,
    /// Multi-index of the colliding product over the spectrum.
    pub exponents: Vec<u32>,
    /// Modulus of the difference.
    pub distance: f64,
}

/// Result of the internal non-resonance check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonresonanceReport {
    pub ok: bool,
    pub violations: Vec<ResonanceHit>,
}

/// Scans all eigenvalue products `lambda^m` with `2 <= |m| <= q_max` and
/// reports any that come within `tol` of a spectrum member. Collisions make
/// the polynomial coordinate change ill-posed at the matching order, which
/// is why they are worth surfacing; neutral conjugate pairs always sit on
/// their own odd-order products, so `tol` should stay tight.
pub fn check_nonresonance(
    eigenvalues: &[Complex<f64>],
    q_max: u32,
    tol: f64,
) -> NonresonanceReport {
    let d = eigenvalues.len();
    if d == 0 || q_max < 2 {
        return NonresonanceReport {
            ok: true,
            violations: Vec::new(),
        };
    }
    let indices = enumerate(d, 2, q_max);
    let mut violations = Vec::new();
    for expo in indices.exponents() {
        let mut product = Complex::new(1.0, 0.0);
        for (j, &e) in expo.iter().enumerate() {
            if e > 0 {
                product *= eigenvalues[j].powu(e);
            }
        }
        for (t, lambda) in eigenvalues.iter().enumerate() {
            let distance = (lambda - product).norm();
            if distance < tol {
                violations.push(ResonanceHit {
                    target: t,
                    exponents: expo.clone(),
                    distance,
                });
            }
        }
    }
    NonresonanceReport {
        ok: violations.is_empty(),
        violations,
    }
}

/// Rank check of the coordinate-change Jacobian at the origin,
/// `I + W dK(0)`. Bases starting at degree 2 have `dK(0) = 0`, so this can
/// only fail for hand-built models with degree-1 terms.
fn jacobian_rank_ok(w: &DMatrix<f64>, basis: &MonomialBasis) -> bool {
    let d = w.nrows();
    let mut jac = DMatrix::<f64>::identity(d, d);
    for (row, expo) in basis.exponents().iter().enumerate() {
        let degree: u32 = expo.iter().sum();
        if degree != 1 {
            continue;
        }
        let var = expo
            .iter()
            .position(|&e| e == 1)
            .expect("degree-1 monomial");
        for r in 0..d {
            jac[(r, var)] += w[(r, row)];
        }
    }
    let svd = jac.svd(false, false);
    let sv = &svd.singular_values;
    sv[0] > 0.0 && sv[sv.len() - 1] > RANK_RTOL * sv[0]
}

/// Rank check on a model's stored correction (see `jacobian_rank_ok`).
pub fn check_rank(model: &LatentModel) -> bool {
    jacobian_rank_ok(model.correction(), model.correction_basis())
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const MODEL_FORMAT: &str = "arclin-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixData {
    rows: usize,
    cols: usize,
    /// Entries in row-major order.
    data: Vec<f64>,
}

impl MatrixData {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let expected = self
            .rows
            .checked_mul(self.cols)
            .ok_or_else(|| Error::InvalidFile(format!("{name}: matrix dimensions overflow")))?;
        if self.data.len() != expected {
            return Err(Error::InvalidFile(format!(
                "{name}: expected {expected} entries for {}x{}, got {}",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    dt: f64,
    dims: ModelDims,
    mean: Vec<f64>,
    projection: MatrixData,
    correction: MatrixData,
    operator: MatrixData,
    decoder_linear: MatrixData,
    decoder_nonlinear: MatrixData,
    correction_basis: MonomialBasis,
    decoder_basis: MonomialBasis,
    metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDims {
    window: usize,
    latent: usize,
    correction_terms: usize,
    decoder_terms: usize,
}

impl LatentModel {
    fn to_file_struct(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            dt: self.dt,
            dims: ModelDims {
                window: self.window_len(),
                latent: self.latent_dim(),
                correction_terms: self.correction_basis.len(),
                decoder_terms: self.decoder_basis.len(),
            },
            mean: self.mean.iter().cloned().collect(),
            projection: MatrixData::from_matrix(&self.projection),
            correction: MatrixData::from_matrix(&self.correction),
            operator: MatrixData::from_matrix(&self.operator),
            decoder_linear: MatrixData::from_matrix(&self.decoder_linear),
            decoder_nonlinear: MatrixData::from_matrix(&self.decoder_nonlinear),
            correction_basis: self.correction_basis.clone(),
            decoder_basis: self.decoder_basis.clone(),
            metadata: self.metadata.clone(),
        }
    }

    /// Serializes to JSON. Floats are written in their shortest round-trip
    /// form, so a later load returns a bit-identical model.
    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string(&self.to_file_struct())
            .map_err(|e| Error::InvalidFile(format!("model serialization failed: {e}")))
    }

    /// Parses a model from JSON bytes, validating structure, shapes,
    /// finiteness, and basis tables.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes)
            .map_err(|e| Error::InvalidFile(format!("model file does not parse: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::InvalidFile(format!(
                "unexpected format tag {:?}",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::InvalidFile(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        let model = Self::from_parts(
            DVector::from_vec(file.mean),
            file.projection.to_matrix("projection")?,
            file.correction.to_matrix("correction")?,
            file.operator.to_matrix("operator")?,
            file.decoder_linear.to_matrix("decoder_linear")?,
            file.decoder_nonlinear.to_matrix("decoder_nonlinear")?,
            file.correction_basis,
            file.decoder_basis,
            file.dt,
            file.metadata,
        )
        .map_err(|e| Error::InvalidFile(format!("model file is inconsistent: {e}")))?;
        let dims = file.dims;
        if dims.window != model.window_len()
            || dims.latent != model.latent_dim()
            || dims.correction_terms != model.correction_basis.len()
            || dims.decoder_terms != model.decoder_basis.len()
        {
            return Err(Error::InvalidFile(
                "dims block disagrees with the matrix shapes".into(),
            ));
        }
        Ok(model)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json_bytes(text.as_bytes())
    }

    /// Writes the model JSON to a file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json_string()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Reads a model JSON file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_json_bytes(&bytes)
    }
}

// ---------------------------------------------------------------------------
