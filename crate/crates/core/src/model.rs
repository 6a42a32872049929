//! Dyadic data model: regressor tensor, outcome matrix, the residual matrix
//! `M(μ) = Y − Σ_l μ_l X_l`, and the two least-squares objectives.
//!
//! All sums over dyads count both orderings `(i, j)` and `(j, i)`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{DyadError, Result};
use crate::linalg::SymMatrix;
use crate::spectral::SpectralSummary;

pub const MIN_NODES: usize = 4;

/// Coefficient vector (μ or β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DyadError::Estimation(format!(
                "parameter component {pos} is not finite ({})",
                values[pos]
            )));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(l: usize) -> Self {
        ParamVector(vec![0.0; l])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

/// The `l` symmetric, zero-diagonal regressor matrices `X_1, …, X_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicDesign {
    x: Vec<SymMatrix>,
    intercept: Option<usize>,
}

impl DyadicDesign {
    /// `intercept` names the regressor that is identically 1 off the diagonal, if any.
    pub fn new(x: Vec<SymMatrix>, intercept: Option<usize>) -> Result<Self> {
        let Some(first) = x.first() else {
            return Err(DyadError::contract("design needs at least one regressor"));
        };
        let n = first.n();
        if n < MIN_NODES {
            return Err(DyadError::contract(format!(
                "design needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        for (l, xl) in x.iter().enumerate() {
            if xl.n() != n {
                return Err(DyadError::contract(format!(
                    "regressor {l} is {}x{}, expected {n}x{n}",
                    xl.n(),
                    xl.n()
                )));
            }
            if !xl.diagonal_is_zero() {
                return Err(DyadError::contract(format!("regressor {l} has a nonzero diagonal")));
            }
        }
        if let Some(c) = intercept {
            if c >= x.len() || !is_intercept(&x[c]) {
                return Err(DyadError::contract(format!(
                    "regressor {c} is not a constant-one intercept column"
                )));
            }
        }
        Ok(DyadicDesign { x, intercept })
    }

    /// Like [`DyadicDesign::new`], marking the first constant-one regressor as the intercept.
    pub fn with_detected_intercept(x: Vec<SymMatrix>) -> Result<Self> {
        let intercept = x.iter().position(is_intercept);
        DyadicDesign::new(x, intercept)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x[0].n()
    }

    #[inline]
    pub fn l(&self) -> usize {
        self.x.len()
    }

    pub fn regressors(&self) -> &[SymMatrix] {
        &self.x
    }

    pub fn regressor(&self, l: usize) -> &SymMatrix {
        &self.x[l]
    }

    pub fn intercept_column(&self) -> Option<usize> {
        self.intercept
    }

    pub fn has_intercept_column(&self) -> bool {
        self.intercept.is_some()
    }

    /// Regressor vector `X_ij` (length `l`).
    pub fn dyad(&self, i: usize, j: usize) -> Vec<f64> {
        self.x.iter().map(|m| m.get(i, j)).collect()
    }

    /// Design with every regressor negated.
    pub fn negated(&self) -> DyadicDesign {
        DyadicDesign {
            x: self.x.iter().map(|m| m.map(|_, _, v| -v)).collect(),
            // a negated intercept is no longer a constant-one column
            intercept: None,
        }
    }
}

fn is_intercept(m: &SymMatrix) -> bool {
    let n = m.n();
    (0..n).all(|i| (0..n).all(|j| if i == j { m.get(i, j) == 0.0 } else { m.get(i, j) == 1.0 }))
}

/// Symmetric outcome matrix `Y` with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMatrix {
    y: SymMatrix,
}

impl OutcomeMatrix {
    pub fn new(y: SymMatrix) -> Result<Self> {
        if !y.diagonal_is_zero() {
            return Err(DyadError::contract("outcome matrix must have a zero diagonal"));
        }
        Ok(OutcomeMatrix { y })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.y.get(i, j)
    }

    pub fn negated(&self) -> OutcomeMatrix {
        OutcomeMatrix {
            y: self.y.map(|_, _, v| -v),
        }
    }
}

/// `M(μ)` together with the `μ` it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    m: SymMatrix,
    mu: ParamVector,
}

impl ResidualMatrix {
    pub fn matrix(&self) -> &SymMatrix {
        &self.m
    }

    pub fn mu(&self) -> &ParamVector {
        &self.mu
    }

    pub fn n(&self) -> usize {
        self.m.n()
    }

    /// Wraps an arbitrary symmetric zero-diagonal matrix, e.g. for testing the objectives.
    pub fn from_matrix(m: SymMatrix) -> Result<Self> {
        if !m.diagonal_is_zero() {
            return Err(DyadError::contract("residual matrix must have a zero diagonal"));
        }
        Ok(ResidualMatrix {
            m,
            mu: ParamVector::zeros(0),
        })
    }
}

fn check_dims(design: &DyadicDesign, y: &OutcomeMatrix) -> Result<()> {
    if design.n() != y.n() {
        return Err(DyadError::contract(format!(
            "design has {} nodes but outcome has {}",
            design.n(),
            y.n()
        )));
    }
    Ok(())
}

pub(crate) fn check_mu(design: &DyadicDesign, mu: &[f64]) -> Result<()> {
    if mu.len() != design.l() {
        return Err(DyadError::contract(format!(
            "coefficient vector has length {} but design has {} regressors",
            mu.len(),
            design.l()
        )));
    }
    Ok(())
}

pub fn build_residual_matrix(
    design: &DyadicDesign,
    y: &OutcomeMatrix,
    mu: &ParamVector,
) -> Result<ResidualMatrix> {
    check_dims(design, y)?;
    check_mu(design, mu)?;
    let n = design.n();
    let m = SymMatrix::from_lower_fn(n, |i, j| {
        if i == j {
            return 0.0;
        }
        let mut v = y.get(i, j);
        for (xl, mul) in design.regressors().iter().zip(mu.iter()) {
            v -= mul * xl.get(i, j);
        }
        v
    });
    Ok(ResidualMatrix { m, mu: mu.clone() })
}

/// `Σ_{i≠j} M_ij² = trace(M²) = Σ_i λ_i(M)²`: the OLS sum of squared residuals.
pub fn objective_full(m: &ResidualMatrix) -> f64 {
    m.matrix().frobenius_sq()
}

/// `trace(M²)` with the largest squared eigenvalue removed.
pub fn objective_corrected(m: &ResidualMatrix, spec: &SpectralSummary) -> Result<f64> {
    if spec.eigenvalues.len() != m.n() {
        return Err(DyadError::contract(format!(
            "spectral summary has {} eigenvalues but residual matrix is {}x{}",
            spec.eigenvalues.len(),
            m.n(),
            m.n()
        )));
    }
    let lead = spec.lambda_lead();
    Ok((objective_full(m) - lead * lead).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::eig_sym;

    fn ones_design(n: usize) -> DyadicDesign {
        let x = SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { 1.0 });
        DyadicDesign::with_detected_intercept(vec![x]).unwrap()
    }

    #[test]
    fn zero_outcome_zero_mu_gives_zero_residual() {
        let design = ones_design(5);
        let y = OutcomeMatrix::new(SymMatrix::zeros(5)).unwrap();
        let m = build_residual_matrix(&design, &y, &ParamVector::zeros(1)).unwrap();
        assert_eq!(m.matrix().max_abs(), 0.0);
        assert_eq!(objective_full(&m), 0.0);
        let spec = eig_sym(m.matrix()).unwrap();
        assert_eq!(objective_corrected(&m, &spec).unwrap(), 0.0);
    }

    #[test]
    fn unit_intercept_arithmetic() {
        let design = ones_design(4);
        let y = OutcomeMatrix::new(SymMatrix::from_lower_fn(4, |i, j| if i == j { 0.0 } else { 2.0 }))
            .unwrap();
        let m = build_residual_matrix(&design, &y, &ParamVector::new(vec![1.0]).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.matrix().get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn two_by_two_objectives() {
        let m = ResidualMatrix::from_matrix(SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap())
            .unwrap();
        assert_eq!(objective_full(&m), 2.0);
        let spec = eig_sym(m.matrix()).unwrap();
        assert!((objective_corrected(&m, &spec).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_mu_is_contract_violation() {
        let design = ones_design(4);
        let y = OutcomeMatrix::new(SymMatrix::zeros(4)).unwrap();
        let err = build_residual_matrix(&design, &y, &ParamVector::zeros(2)).unwrap_err();
        assert!(matches!(err, DyadError::Contract(_)));
    }

    #[test]
    fn stale_spectrum_is_rejected() {
        let m = ResidualMatrix::from_matrix(SymMatrix::zeros(4)).unwrap();
        let spec = eig_sym(&SymMatrix::zeros(3)).unwrap();
        assert!(matches!(objective_corrected(&m, &spec), Err(DyadError::Contract(_))));
    }

    #[test]
    fn design_rejects_small_or_bad_inputs() {
        let x = SymMatrix::from_lower_fn(3, |i, j| if i == j { 0.0 } else { 1.0 });
        assert!(DyadicDesign::new(vec![x], None).is_err());
        let x = SymMatrix::from_lower_fn(4, |_, _| 1.0);
        assert!(DyadicDesign::new(vec![x], None).is_err());
        let x = SymMatrix::from_lower_fn(4, |i, j| if i == j { 0.0 } else { 2.0 });
        assert!(DyadicDesign::new(vec![x], Some(0)).is_err());
    }

    #[test]
    fn objective_full_is_ols_ssr() {
        let n = 6;
        let x = SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { (i + 2 * j) as f64 * 0.1 });
        let design = DyadicDesign::new(vec![x], None).unwrap();
        let y = OutcomeMatrix::new(SymMatrix::from_lower_fn(n, |i, j| {
            if i == j {
                0.0
            } else {
                ((i * 7 + j * 3) % 5) as f64 - 2.0
            }
        }))
        .unwrap();
        let mu = ParamVector::new(vec![0.37]).unwrap();
        let m = build_residual_matrix(&design, &y, &mu).unwrap();
        let mut ssr = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let r = y.get(i, j) - 0.37 * design.regressor(0).get(i, j);
                    ssr += r * r;
                }
            }
        }
        assert!((objective_full(&m) - ssr).abs() < 1e-12 * ssr);
    }

    fn residual_from(vals: &[f64], n: usize) -> ResidualMatrix {
        let mut k = 0;
        let mut lower = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..i {
                lower[i][j] = vals[k];
                lower[j][i] = vals[k];
                k += 1;
            }
        }
        ResidualMatrix::from_matrix(SymMatrix::from_rows(&lower).unwrap()).unwrap()
    }

    #[test]
    fn full_objective_is_sum_of_squared_eigenvalues() {
        let vals: Vec<f64> = (0..10).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.31).collect();
        let m = residual_from(&vals, 5);
        let eig = crate::test_oracles::jacobi_eigenvalues(&m.matrix().to_rows());
        let s: f64 = eig.iter().map(|l| l * l).sum();
        assert!((objective_full(&m) - s).abs() < 1e-10 * s);
    }

    #[test]
    fn corrected_objective_drops_the_largest_square() {
        let vals: Vec<f64> = (0..15).map(|k| ((k * 13 % 7) as f64 - 1.5) * 0.7).collect();
        let m = residual_from(&vals, 6);
        let mut sq: Vec<f64> = crate::test_oracles::jacobi_eigenvalues(&m.matrix().to_rows())
            .iter()
            .map(|l| l * l)
            .collect();
        sq.sort_by(f64::total_cmp);
        let rest: f64 = sq[..5].iter().sum();
        let spec = eig_sym(m.matrix()).unwrap();
        assert!((objective_corrected(&m, &spec).unwrap() - rest).abs() < 1e-10 * (1.0 + rest));
    }

    proptest::proptest! {
        #[test]
        fn trace_identity_holds(vals in proptest::collection::vec(-10.0f64..10.0, 21)) {
            let m = residual_from(&vals, 7);
            let spec = eig_sym(m.matrix()).unwrap();
            let s: f64 = spec.eigenvalues.iter().map(|l| l * l).sum();
            proptest::prop_assert!((objective_full(&m) - s).abs() <= 1e-9 * (1.0 + s));
            let c = objective_corrected(&m, &spec).unwrap();
            proptest::prop_assert!(c >= 0.0 && c <= objective_full(&m));
        }
    }
}
