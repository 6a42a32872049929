//! Dense matrix storage and the small l×l solves used by the estimators.
//!
//! `SymMatrix` wraps a column-major `faer::Mat`. Because the matrix is
//! symmetric, column `j` doubles as row `j`, which the O(N²) assembly loops
//! rely on.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef};

use crate::error::{DyadError, Result};

/// Reciprocal condition numbers below this are rejected rather than regularized.
pub const MIN_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: Mat<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            inner: Mat::zeros(n, n),
        }
    }

    /// Builds the matrix from its strict lower triangle (`f(i, j)` for `i > j`)
    /// and its diagonal (`f(i, i)`), mirroring into the upper triangle.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut inner = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        SymMatrix { inner }
    }

    /// Wraps a dense matrix after checking symmetry to `rel_tol` relative to
    /// the largest entry.
    pub fn from_dense(m: Mat<f64>, rel_tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(DyadError::contract(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut scale = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(DyadError::contract(format!("non-finite entry at ({i}, {j})")));
                }
                scale = scale.max(v.abs());
            }
        }
        for j in 0..n {
            for i in (j + 1)..n {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > rel_tol * scale.max(f64::MIN_POSITIVE) && gap > 0.0 {
                    return Err(DyadError::contract(format!(
                        "matrix is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {gap:.3e}"
                    )));
                }
            }
        }
        Ok(SymMatrix { inner: m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(DyadError::contract("rows must form a square matrix"));
        }
        SymMatrix::from_dense(Mat::from_fn(n, n, |i, j| rows[i][j]), 0.0)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Row `i` (equivalently column `i`).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.inner.col_as_slice(i)
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        self.inner.as_ref()
    }

    pub fn diagonal_is_zero(&self) -> bool {
        (0..self.n()).all(|i| self.get(i, i) == 0.0)
    }

    /// Sum of squares of all entries, i.e. `trace(M²)` for symmetric `M`.
    pub fn frobenius_sq(&self) -> f64 {
        (0..self.n())
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.n())
            .flat_map(|i| self.row(i).iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> SymMatrix {
        SymMatrix::from_lower_fn(self.n(), |i, j| f(i, j, self.get(i, j)))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i).to_vec()).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn identity(l: usize) -> Mat<f64> {
    Mat::from_fn(l, l, |i, j| if i == j { 1.0 } else { 0.0 })
}

pub fn mat_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum())
        .collect()
}

/// Condition number `σ_max / σ_min` of a small dense matrix (infinite when singular).
pub fn condition_number(a: MatRef<'_, f64>) -> f64 {
    match a.singular_values() {
        Ok(s) if !s.is_empty() => {
            let max = s[0];
            let min = s[s.len() - 1];
            if min <= 0.0 || !min.is_finite() {
                f64::INFINITY
            } else {
                max / min
            }
        }
        _ => f64::INFINITY,
    }
}

fn check_conditioning(a: MatRef<'_, f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(DyadError::contract(format!("{what} must be square")));
    }
    let cond = condition_number(a);
    if !(cond.is_finite() && 1.0 / cond >= MIN_RCOND) {
        return Err(DyadError::Singular {
            what: what.to_string(),
            condition: cond,
        });
    }
    Ok(())
}

/// Solves `a x = b`, refusing when the reciprocal condition of `a` is below [`MIN_RCOND`].
pub fn solve_checked(a: MatRef<'_, f64>, b: &[f64], what: &str) -> Result<Vec<f64>> {
    check_conditioning(a, what)?;
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    Ok((0..b.len()).map(|i| x[(i, 0)]).collect())
}

pub fn inverse_checked(a: MatRef<'_, f64>, what: &str) -> Result<Mat<f64>> {
    check_conditioning(a, what)?;
    Ok(a.partial_piv_lu().inverse())
}

/// Largest eigenvalue modulus of a general (not necessarily symmetric) square matrix.
pub fn spectral_radius(a: MatRef<'_, f64>) -> Result<f64> {
    let ev = a
        .eigenvalues()
        .map_err(|e| DyadError::Estimation(format!("eigenvalues of small matrix failed: {e:?}")))?;
    Ok(ev.iter().fold(0.0f64, |acc, z| acc.max(z.norm())))
}

/// Outer product `a b'`.
pub fn outer(a: &[f64], b: &[f64]) -> Mat<f64> {
    Mat::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

pub fn to_rows(a: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Mat<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_lower_fn_mirrors() {
        let m = SymMatrix::from_lower_fn(3, |i, j| (10 * i + j) as f64);
        assert_eq!(m.get(0, 2), 20.0);
        assert_eq!(m.get(2, 0), 20.0);
        assert_eq!(m.row(1), &[10.0, 11.0, 21.0]);
    }

    #[test]
    fn rejects_asymmetric_dense() {
        let m = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        assert!(matches!(SymMatrix::from_dense(m, 1e-10), Err(DyadError::Contract(_))));
    }

    #[test]
    fn singular_solve_reports_condition() {
        let a = Mat::from_fn(2, 2, |_, _| 1.0);
        match solve_checked(a.as_ref(), &[1.0, 1.0], "gram") {
            Err(DyadError::Singular { condition, .. }) => assert!(condition > 1e12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn solve_and_inverse_agree() {
        let a = from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]);
        let x = solve_checked(a.as_ref(), &[1.0, 2.0], "a").unwrap();
        let inv = inverse_checked(a.as_ref(), "a").unwrap();
        let y = mat_vec(inv.as_ref(), &[1.0, 2.0]);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-14);
        }
        assert!((x[0] - 0.1).abs() < 1e-14 && (x[1] - 0.6).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_of_rotation_like() {
        // eigenvalues ±2i
        let a = from_rows(&[vec![0.0, -2.0], vec![2.0, 0.0]]);
        assert!((spectral_radius(a.as_ref()).unwrap() - 2.0).abs() < 1e-12);
    }
}
