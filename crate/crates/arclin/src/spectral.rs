//! Eigenvalue analysis of fitted operators: classification against the unit
//! circle, confinement of a spectrum onto it, and a brute-force mode report
//! for the lifted one-step map.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::DelayMatrix;
use crate::error::{Error, Result};
use crate::lifting::MonomialBasis;

type CMatrix = DMatrix<Complex<f64>>;
type CVector = DVector<Complex<f64>>;

/// Default half-width of the band around `|lambda| = 1` that counts as
/// neutral.
pub const DEFAULT_NEUTRAL_TOL: f64 = 1e-3;

/// Eigenvector bases with a 1-norm condition number above this are treated
/// as numerically defective and refused by `confine`.
const MAX_EIGENBASIS_CONDITION: f64 = 1e12;

/// Position of an eigenvalue relative to the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeClass {
    Unstable,
    Neutral,
    Decaying,
}

/// Eigenvalues of an operator, sorted by modulus (descending, ties broken by
/// real then imaginary part), with their unit-circle classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    #[serde(with = "complex_vec")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub classes: Vec<ModeClass>,
    pub n_unstable: usize,
    pub n_neutral: usize,
    pub n_decaying: usize,
    pub tol_neutral: f64,
}

/// Serializes complex numbers as `[re, im]` pairs.
mod complex_vec {
    use nalgebra::Complex;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex<f64>], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex<f64>>, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(pairs
            .into_iter()
            .map(|[re, im]| Complex::new(re, im))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Eigenvalue and eigenvector extraction
// ---------------------------------------------------------------------------

fn check_operator(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "operator must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Shape("operator is empty".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("operator contains NaN or infinity".into()));
    }
    Ok(())
}

fn schur_of(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    // At exactly machine epsilon the iteration can cycle without deflating
    // on some valid inputs; retrying a few epsilons looser costs at most a
    // couple of ulps in the eigenvalues and converges in practice.
    for relax in [1.0, 4.0, 32.0] {
        if let Some(schur) = Schur::try_new(m.clone(), relax * f64::EPSILON, 100_000) {
            return Ok(schur.unpack());
        }
    }
    Err(Error::Numeric(
        "Schur decomposition did not converge".into(),
    ))
}

/// Splits the quasi-triangular factor into 1x1 and 2x2 diagonal blocks.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let scale = t.amax().max(f64::MIN_POSITIVE);
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > f64::EPSILON * scale {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Eigenvalues of one diagonal block.
fn block_eigenvalues(t: &DMatrix<f64>, p: usize, size: usize) -> Vec<Complex<f64>> {
    if size == 1 {
        return vec![Complex::new(t[(p, p)], 0.0)];
    }
    let (a, b) = (t[(p, p)], t[(p, p + 1)]);
    let (c, d) = (t[(p + 1, p)], t[(p + 1, p + 1)]);
    let mid = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc < 0.0 {
        let mu = (-disc).sqrt();
        vec![Complex::new(mid, mu), Complex::new(mid, -mu)]
    } else {
        let s = disc.sqrt();
        vec![Complex::new(mid + s, 0.0), Complex::new(mid - s, 0.0)]
    }
}

/// Eigenvalues only, in no particular order.
fn raw_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex<f64>> {
    diagonal_blocks(t)
        .into_iter()
        .flat_map(|(p, size)| block_eigenvalues(t, p, size))
        .collect()
}

fn sort_key(z: &Complex<f64>) -> (f64, f64, f64) {
    (z.norm(), z.re, z.im)
}

fn compare_desc(a: &Complex<f64>, b: &Complex<f64>) -> std::cmp::Ordering {
    let (an, ar, ai) = sort_key(a);
    let (bn, br, bi) = sort_key(b);
    bn.total_cmp(&an)
        .then_with(|| br.total_cmp(&ar))
        .then_with(|| bi.total_cmp(&ai))
}

/// Eigenvalues of a real square matrix, sorted by modulus descending.
pub fn eigenvalues_of(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    check_operator(m)?;
    let (_, t) = schur_of(m)?;
    let mut vals = raw_eigenvalues(&t);
    vals.sort_by(compare_desc);
    Ok(vals)
}

/// Back-substitutes an eigenvector of the quasi-triangular factor for the
/// eigenvalue `lambda` of the block at `p`, following the classic
/// one-block-at-a-time scheme. Near-zero pivots from repeated eigenvalues
/// are perturbed to `smin`, which reproduces the natural invariant-subspace
/// vectors instead of failing.
fn quasi_triangular_vector(
    t: &DMatrix<f64>,
    blocks: &[(usize, usize)],
    block_idx: usize,
    lambda: Complex<f64>,
    smin: f64,
) -> CVector {
    let n = t.nrows();
    let (p, size) = blocks[block_idx];
    let mut y = CVector::zeros(n);

    if size == 1 {
        y[p] = Complex::new(1.0, 0.0);
    } else {
        let (a, b) = (t[(p, p)], t[(p, p + 1)]);
        let (c, d) = (t[(p + 1, p)], t[(p + 1, p + 1)]);
        // Two analytic null-vector candidates of the 2x2 block; take the
        // better scaled one.
        let cand1 = (Complex::new(b, 0.0), lambda - a);
        let cand2 = (lambda - d, Complex::new(c, 0.0));
        let n1 = cand1.0.norm_sqr() + cand1.1.norm_sqr();
        let n2 = cand2.0.norm_sqr() + cand2.1.norm_sqr();
        let (u, v) = if n1 >= n2 { cand1 } else { cand2 };
        if n1.max(n2) > 0.0 {
            y[p] = u;
            y[p + 1] = v;
        } else {
            y[p] = Complex::new(1.0, 0.0);
        }
    }

    // Rows above the block, solved per diagonal block from bottom to top.
    for &(q, qsize) in blocks[..block_idx].iter().rev() {
        let residual = |row: usize| -> Complex<f64> {
            let mut r = Complex::new(0.0, 0.0);
            for j in q + qsize..n {
                if y[j] != Complex::new(0.0, 0.0) {
                    r += y[j] * t[(row, j)];
                }
            }
            r
        };
        if qsize == 1 {
            let r = residual(q);
            let mut denom = Complex::new(t[(q, q)], 0.0) - lambda;
            if denom.norm() < smin {
                denom = Complex::new(smin, 0.0);
            }
            y[q] = -r / denom;
        } else {
            let r1 = residual(q);
            let r2 = residual(q + 1);
            let m11 = Complex::new(t[(q, q)], 0.0) - lambda;
            let m12 = Complex::new(t[(q, q + 1)], 0.0);
            let m21 = Complex::new(t[(q + 1, q)], 0.0);
            let m22 = Complex::new(t[(q + 1, q + 1)], 0.0) - lambda;
            let mut det = m11 * m22 - m12 * m21;
            if det.norm() < smin * smin {
                det = Complex::new(smin * smin, 0.0);
            }
            y[q] = (-r1 * m22 + r2 * m12) / det;
            y[q + 1] = (-r2 * m11 + r1 * m21) / det;
        }
    }
    y
}

/// Normalizes to unit length and rotates the phase so the largest-modulus
/// entry (first such index on ties) is real and positive. Keeps the output
/// deterministic across runs.
fn fix_phase(v: &mut CVector) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm_sqr() > v[best].norm_sqr() {
            best = i;
        }
    }
    let pivot = v[best];
    let scale = if pivot.norm() > 0.0 {
        pivot.conj() / pivot.norm()
    } else {
        Complex::new(1.0, 0.0)
    };
    let norm = v.norm();
    if norm > 0.0 {
        let factor = scale / Complex::new(norm, 0.0);
        for x in v.iter_mut() {
            *x *= factor;
        }
    }
}

/// Full eigen decomposition of a real matrix: eigenvalues sorted by modulus
/// descending and unit eigenvectors as matching columns. Conjugate pairs get
/// exactly conjugate vectors.
pub(crate) fn eigen_pairs(m: &DMatrix<f64>) -> Result<(Vec<Complex<f64>>, CMatrix)> {
    check_operator(m)?;
    let n = m.nrows();
    let (q, t) = schur_of(m)?;
    let qc = q.map(|x| Complex::new(x, 0.0));
    let blocks = diagonal_blocks(&t);
    let smin = f64::EPSILON * t.amax().max(f64::MIN_POSITIVE);

    let mut entries: Vec<(Complex<f64>, CVector)> = Vec::with_capacity(n);
    for (idx, &(p, size)) in blocks.iter().enumerate() {
        let lambdas = block_eigenvalues(&t, p, size);
        if size == 2 && lambdas[0].im != 0.0 {
            // Complex pair: compute one vector, conjugate for the other.
            let y = quasi_triangular_vector(&t, &blocks, idx, lambdas[0], smin);
            let mut v = &qc * &y;
            fix_phase(&mut v);
            let vbar = v.map(|z| z.conj());
            entries.push((lambdas[0], v));
            entries.push((lambdas[1], vbar));
        } else {
            for &lambda in &lambdas {
                let y = quasi_triangular_vector(&t, &blocks, idx, lambda, smin);
                let mut v = &qc * &y;
                fix_phase(&mut v);
                entries.push((lambda, v));
            }
        }
    }

    entries.sort_by(|a, b| compare_desc(&a.0, &b.0));
    let values: Vec<Complex<f64>> = entries.iter().map(|(l, _)| *l).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (j, (_, v)) in entries.iter().enumerate() {
        vectors.column_mut(j).copy_from(v);
    }
    Ok((values, vectors))
}

/// 1-norm condition number of a complex matrix, or `None` if singular.
fn condition_1(v: &CMatrix) -> Option<f64> {
    let inv = v.clone().lu().try_inverse()?;
    let norm1 = |m: &CMatrix| -> f64 {
        m.column_iter()
            .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    Some(norm1(v) * norm1(&inv))
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

fn class_of(lambda: &Complex<f64>, tol: f64) -> ModeClass {
    let r = lambda.norm();
    if r > 1.0 + tol {
        ModeClass::Unstable
    } else if r < 1.0 - tol {
        ModeClass::Decaying
    } else {
        ModeClass::Neutral
    }
}

fn report_from(eigenvalues: Vec<Complex<f64>>, tol: f64) -> SpectralReport {
    let classes: Vec<ModeClass> = eigenvalues.iter().map(|l| class_of(l, tol)).collect();
    let count = |c: ModeClass| classes.iter().filter(|x| **x == c).count();
    SpectralReport {
        n_unstable: count(ModeClass::Unstable),
        n_neutral: count(ModeClass::Neutral),
        n_decaying: count(ModeClass::Decaying),
        eigenvalues,
        classes,
        tol_neutral: tol,
    }
}

/// Classifies every eigenvalue of `op` against the unit circle with a
/// neutral band of half-width `tol_neutral`.
pub fn classify(op: &DMatrix<f64>, tol_neutral: f64) -> Result<SpectralReport> {
    if !(tol_neutral.is_finite() && tol_neutral >= 0.0) {
        return Err(Error::Config(format!(
            "tol_neutral must be a non-negative number, got {tol_neutral}"
        )));
    }
    Ok(report_from(eigenvalues_of(op)?, tol_neutral))
}

// ---------------------------------------------------------------------------
// Confinement
// ---------------------------------------------------------------------------

/// Projects every eigenvalue of `op` radially onto the unit circle while
/// keeping the eigenvectors, returning the rebuilt real operator. Rotation
/// angles are untouched, so oscillation frequencies survive; only the
/// spurious growth or decay rates are removed. Exact zero eigenvalues stay
/// at zero. The input must be diagonalizable with an eigenvector basis of
/// condition number below 1e12; a defective or nearly defective operator is
/// refused.
pub fn confine(op: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (lambdas, v) = eigen_pairs(op)?;
    let cond = condition_1(&v).ok_or_else(|| {
        Error::Confinement("eigenvector basis is singular; operator is defective".into())
    })?;
    if cond > MAX_EIGENBASIS_CONDITION {
        return Err(Error::Confinement(format!(
            "eigenvector basis condition {cond:.3e} exceeds {MAX_EIGENBASIS_CONDITION:.0e}; \
             operator is too close to defective"
        )));
    }

    let n = op.nrows();
    let confined: Vec<Complex<f64>> = lambdas
        .iter()
        .map(|l| {
            let r = l.norm();
            if r < f64::MIN_POSITIVE {
                Complex::new(0.0, 0.0)
            } else {
                l / r
            }
        })
        .collect();

    // B = V L V^{-1}, computed as the solve V^T B^T = (V L)^T.
    let mut vl = v.clone();
    for (j, l) in confined.iter().enumerate() {
        let mut col = vl.column_mut(j);
        for x in col.iter_mut() {
            *x *= l;
        }
    }
    let vt = v.transpose();
    let bt = vt.lu().solve(&vl.transpose()).ok_or_else(|| {
        Error::Confinement("eigenvector basis is singular; operator is defective".into())
    })?;
    let b = bt.transpose();

    let max_re = b.iter().map(|z| z.re.abs()).fold(0.0_f64, f64::max);
    let max_im = b.iter().map(|z| z.im.abs()).fold(0.0_f64, f64::max);
    if max_im > 1e-10 * max_re.max(1.0) {
        return Err(Error::Confinement(format!(
            "rebuilt operator has imaginary residue {max_im:.3e}; \
             eigen decomposition is not trustworthy"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| b[(i, j)].re))
}

// ---------------------------------------------------------------------------
// Lifted one-step mode report
// ---------------------------------------------------------------------------

/// Fits a one-step linear map on the lifted delay windows by ridge least
/// squares and reports its `n_modes` largest-modulus eigenvalues. This is
/// the brute-force companion of the reduced latent model: no projection, one
/// eigenvalue per monomial feature.
pub fn lifted_mode_report(
    matrix: &DelayMatrix,
    basis: &MonomialBasis,
    n_modes: usize,
    tol_neutral: f64,
) -> Result<SpectralReport> {
    if basis.n_vars() != matrix.n_n() {
        return Err(Error::Shape(format!(
            "basis over {} variables cannot lift windows of length {}",
            basis.n_vars(),
            matrix.n_n()
        )));
    }
    if n_modes == 0 || n_modes > basis.len() {
        return Err(Error::Config(format!(
            "n_modes must lie in [1, {}], got {n_modes}",
            basis.len()
        )));
    }
    if !(tol_neutral.is_finite() && tol_neutral >= 0.0) {
        return Err(Error::Config(format!(
            "tol_neutral must be a non-negative number, got {tol_neutral}"
        )));
    }
    let m = matrix.n_columns();
    if m < 2 {
        return Err(Error::InsufficientData(
            "lifted mode fit needs at least two delay windows".into(),
        ));
    }

    let features = basis.lift_matrix(matrix.data())?;
    let constant = (0..features.nrows()).all(|i| {
        let row = features.row(i);
        let first = row[0];
        row.iter().all(|x| *x == first)
    });
    if constant {
        return Err(Error::Numeric(
            "lifted features carry no variation; the signal looks constant".into(),
        ));
    }

    let f0 = features.columns(0, m - 1).into_owned();
    let f1 = features.columns(1, m - 1).into_owned();
    let mut gram = &f0 * f0.transpose();
    let max_diag = (0..gram.nrows())
        .map(|i| gram[(i, i)])
        .fold(0.0_f64, f64::max);
    if !(max_diag.is_finite() && max_diag > 0.0) {
        return Err(Error::Numeric(
            "lifted feature Gram matrix is degenerate".into(),
        ));
    }
    let ridge = 1e-8 * max_diag;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::SingularFit("lifted normal equations are singular beyond ridge rescue".into())
    })?;
    let a_t = chol.solve(&(&f0 * f1.transpose()));
    let a = a_t.transpose();

    let all = eigenvalues_of(&a)?;
    Ok(report_from(
        all.into_iter().take(n_modes).collect(),
        tol_neutral,
    ))
}

// ---------------------------------------------------------------------------
