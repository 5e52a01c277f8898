//! Graded monomial bases used to lift states into polynomial feature space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact binomial coefficient, `None` on overflow.
fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

/// Number of monomials in `n_vars` variables with total degree in
/// `[min_degree, max_degree]`, or `None` if it does not fit in a `u128`.
pub fn basis_size(n_vars: usize, min_degree: u32, max_degree: u32) -> Option<u128> {
    let n = n_vars as u64;
    let upto = |d: u32| binomial(n + d as u64, d as u64);
    Some(upto(max_degree)? - upto(min_degree - 1)?)
}

/// All monomials in `n_vars` variables with total degree between
/// `min_degree` and `max_degree`, in graded order: degree ascending, and
/// within one degree the exponent tuples in descending lexicographic order,
/// so for two variables and degree two the sequence is
/// `x1^2, x1 x2, x2^2`.
///
/// `min_degree >= 1` always, so a basis never contains the constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialBasis {
    n_vars: usize,
    min_degree: u32,
    max_degree: u32,
    exponents: Vec<Vec<u32>>,
}

/// Enumerates the graded basis.
///
/// Preconditions (panics otherwise, these are programmer errors):
/// `n_vars >= 1`, `1 <= min_degree <= max_degree`, and the basis fits in
/// memory (size below 2^24 entries). Callers taking degrees from user input
/// validate ranges before reaching here.
pub fn enumerate(n_vars: usize, min_degree: u32, max_degree: u32) -> MonomialBasis {
    assert!(n_vars >= 1, "a monomial basis needs at least one variable");
    assert!(
        min_degree >= 1 && min_degree <= max_degree,
        "degree range must satisfy 1 <= min <= max, got [{min_degree}, {max_degree}]"
    );
    let size = basis_size(n_vars, min_degree, max_degree)
        .filter(|s| *s < (1 << 24))
        .unwrap_or_else(|| {
            panic!("basis of {n_vars} variables, degrees {min_degree}..={max_degree}, is too large")
        }) as usize;

    let mut exponents = Vec::with_capacity(size);
    let mut current = vec![0u32; n_vars];
    for degree in min_degree..=max_degree {
        fill_degree(&mut exponents, &mut current, 0, degree);
    }
    debug_assert_eq!(exponents.len(), size);
    MonomialBasis {
        n_vars,
        min_degree,
        max_degree,
        exponents,
    }
}

/// Appends, in descending lexicographic order, every way of spending
/// `remaining` total degree on variables `var..`.
fn fill_degree(out: &mut Vec<Vec<u32>>, current: &mut [u32], var: usize, remaining: u32) {
    if var + 1 == current.len() {
        current[var] = remaining;
        out.push(current.to_vec());
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e;
        fill_degree(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

impl MonomialBasis {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn min_degree(&self) -> u32 {
        self.min_degree
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Number of monomials.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Exponent tuples in basis order.
    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Confirms that the stored table is exactly what `enumerate` produces
    /// for the stored parameters. Used when loading serialized models, where
    /// the table may have been edited.
    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 || self.min_degree == 0 || self.min_degree > self.max_degree {
            return Err(Error::InvalidFile(format!(
                "monomial basis parameters out of range: {} variables, degrees [{}, {}]",
                self.n_vars, self.min_degree, self.max_degree
            )));
        }
        if basis_size(self.n_vars, self.min_degree, self.max_degree)
            .map(|s| s >= (1 << 24))
            .unwrap_or(true)
        {
            return Err(Error::InvalidFile("monomial basis too large".into()));
        }
        let expected = enumerate(self.n_vars, self.min_degree, self.max_degree);
        if self.exponents != expected.exponents {
            return Err(Error::InvalidFile(
                "monomial exponent table does not match its declared parameters".into(),
            ));
        }
        Ok(())
    }

    /// Evaluates every monomial at `point`.
    pub fn lift(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.n_vars {
            return Err(Error::Shape(format!(
                "lift expects {} coordinates, got {}",
                self.n_vars,
                point.len()
            )));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(
                "lift input contains NaN or infinity".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.len());
        for expo in &self.exponents {
            let mut v = 1.0;
            for (x, &e) in point.iter().zip(expo) {
                if e > 0 {
                    v *= x.powi(e as i32);
                }
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Lifts every column of `states` (one state per column). An input with
    /// zero columns produces an empty matrix with one row per monomial.
    pub fn lift_matrix(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if states.nrows() != self.n_vars {
            return Err(Error::Shape(format!(
                "lift_matrix expects {} rows, got {}",
                self.n_vars,
                states.nrows()
            )));
        }
        let mut out = DMatrix::zeros(self.len(), states.ncols());
        let mut point = vec![0.0; self.n_vars];
        for k in 0..states.ncols() {
            point.copy_from_slice(states.column(k).as_slice());
            let lifted = self.lift(&point)?;
            out.column_mut(k).copy_from_slice(&lifted);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_match_the_closed_form() {
        assert_eq!(enumerate(8, 1, 3).len(), 164);
        assert_eq!(enumerate(2, 1, 3).len(), 9);
        assert_eq!(enumerate(2, 1, 2).len(), 5);
        assert_eq!(enumerate(8, 2, 2).len(), 36);
        assert_eq!(basis_size(8, 1, 3), Some(164));
    }

    #[test]
    fn order_is_graded_then_lexicographic_descending() {
        let b = enumerate(2, 1, 2);
        let expected: Vec<Vec<u32>> =
            vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(b.exponents(), expected.as_slice());
    }

    /// Independent construction: filter the full Cartesian product of
    /// per-variable exponents, then sort by (degree, tuple descending).
    fn brute_force(n_vars: usize, min: u32, max: u32) -> Vec<Vec<u32>> {
        let mut all: Vec<Vec<u32>> = vec![vec![]];
        for _ in 0..n_vars {
            let mut next = Vec::new();
            for prefix in &all {
                for e in 0..=max {
                    let mut v = prefix.clone();
                    v.push(e);
                    next.push(v);
                }
            }
            all = next;
        }
        let mut picked: Vec<Vec<u32>> = all
            .into_iter()
            .filter(|v| {
                let d: u32 = v.iter().sum();
                d >= min && d <= max
            })
            .collect();
        picked.sort_by(|a, b| {
            let da: u32 = a.iter().sum();
            let db: u32 = b.iter().sum();
            da.cmp(&db).then_with(|| b.cmp(a))
        });
        picked
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for n in 1..=4 {
            for min in 1..=3u32 {
                for max in min..=4u32 {
                    let got = enumerate(n, min, max);
                    assert_eq!(
                        got.exponents(),
                        brute_force(n, min, max).as_slice(),
                        "mismatch for n={n} degrees [{min}, {max}]"
                    );
                }
            }
        }
    }

    #[test]
    fn lift_evaluates_monomials() {
        let b = enumerate(2, 1, 2);
        let v = b.lift(&[2.0, 3.0]).unwrap();
        assert_eq!(v, vec![2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn lift_rejects_bad_points() {
        let b = enumerate(2, 1, 2);
        assert!(matches!(b.lift(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(b.lift(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn lift_matrix_handles_zero_columns() {
        let b = enumerate(3, 1, 2);
        let m = DMatrix::<f64>::zeros(3, 0);
        let lifted = b.lift_matrix(&m).unwrap();
        assert_eq!(lifted.nrows(), b.len());
        assert_eq!(lifted.ncols(), 0);
    }

    #[test]
    fn validate_rejects_a_tampered_table() {
        let good = enumerate(2, 1, 2);
        good.validate().unwrap();
        let mut bad = good.clone();
        bad.exponents.swap(0, 1);
        assert!(matches!(bad.validate(), Err(Error::InvalidFile(_))));
        let mut bad = good;
        bad.exponents.pop();
        assert!(matches!(bad.validate(), Err(Error::InvalidFile(_))));
    }

    proptest! {
        /// The enumerated length always equals the closed-form count.
        #[test]
        fn length_matches_count(n in 1_usize..6, min in 1_u32..4, extra in 0_u32..3) {
            let max = min + extra;
            let b = enumerate(n, min, max);
            prop_assert_eq!(b.len() as u128, basis_size(n, min, max).unwrap());
        }

        /// Lifting is multiplicative across concatenated degree ranges:
        /// every monomial value of the wide basis appears in one of the
        /// narrow bases.
        #[test]
        fn degree_ranges_partition(n in 1_usize..4, x in proptest::collection::vec(-3.0_f64..3.0, 1..4)) {
            prop_assume!(x.len() == n);
            let wide = enumerate(n, 1, 3);
            let lo = enumerate(n, 1, 1);
            let hi = enumerate(n, 2, 3);
            let mut joined = lo.lift(&x).unwrap();
            joined.extend(hi.lift(&x).unwrap());
            prop_assert_eq!(wide.lift(&x).unwrap(), joined);
        }
    }
}
