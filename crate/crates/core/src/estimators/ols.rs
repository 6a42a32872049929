use faer::Mat;

use super::{EstimateReport, Method};
use crate::error::{DyadError, Result};
use crate::linalg::solve_checked;
use crate::model::{build_residual_matrix, DyadicDesign, OutcomeMatrix, ParamVector};
use crate::spectral::eig_sym;

/// `Σ_{i≠j} X_ij X_ij'` and `Σ_{i≠j} X_ij Y_ij` over both orderings.
pub(crate) fn normal_equations(design: &DyadicDesign, y: &OutcomeMatrix) -> Result<(Mat<f64>, Vec<f64>)> {
    if design.n() != y.n() {
        return Err(DyadError::contract(format!(
            "design has {} nodes but outcome has {}",
            design.n(),
            y.n()
        )));
    }
    let n = design.n();
    let l = design.l();
    let xs = design.regressors();
    let mut gram = Mat::<f64>::zeros(l, l);
    let mut rhs = vec![0.0; l];
    let mut x = vec![0.0; l];
    for i in 0..n {
        let yrow = y.matrix().row(i);
        for j in 0..i {
            for (xl, slot) in xs.iter().zip(x.iter_mut()) {
                *slot = xl.row(i)[j];
            }
            let yij = yrow[j];
            for p in 0..l {
                rhs[p] += x[p] * yij;
                for q in 0..=p {
                    gram[(p, q)] += x[p] * x[q];
                }
            }
        }
    }
    for p in 0..l {
        rhs[p] *= 2.0;
        for q in 0..=p {
            let v = 2.0 * gram[(p, q)];
            gram[(p, q)] = v;
            gram[(q, p)] = v;
        }
    }
    Ok((gram, rhs))
}

pub fn ols_dyadic(design: &DyadicDesign, y: &OutcomeMatrix) -> Result<EstimateReport> {
    let (gram, rhs) = normal_equations(design, y)?;
    let beta = ParamVector::new(solve_checked(gram.as_ref(), &rhs, "dyadic OLS Gram matrix")?)?;
    let lambda_lead = eig_sym(build_residual_matrix(design, y, &beta)?.matrix())?.lambda_lead();
    Ok(EstimateReport {
        trajectory: vec![beta.clone()],
        mu_hat: beta,
        method: Method::Ols,
        iterations: 0,
        converged: true,
        final_step_norm: 0.0,
        lambda_lead,
        k_estimate: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::test_oracles::gauss_solve;

    fn tiny() -> (DyadicDesign, OutcomeMatrix) {
        let n = 5;
        let ones = SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { 1.0 });
        let x = SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { (i as f64).sin() + (j as f64).cos() });
        let y = SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { ((3 * i + j) % 7) as f64 * 0.3 });
        (
            DyadicDesign::with_detected_intercept(vec![ones, x]).unwrap(),
            OutcomeMatrix::new(y).unwrap(),
        )
    }

    #[test]
    fn exact_fit_recovers_beta() {
        let (design, _) = tiny();
        let beta = [0.7, -1.3];
        let y = SymMatrix::from_lower_fn(5, |i, j| {
            if i == j {
                0.0
            } else {
                beta[0] * design.regressor(0).get(i, j) + beta[1] * design.regressor(1).get(i, j)
            }
        });
        let r = ols_dyadic(&design, &OutcomeMatrix::new(y).unwrap()).unwrap();
        for (a, b) in r.mu_hat.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_hand_rolled_normal_equations() {
        let (design, y) = tiny();
        let mut g = vec![vec![0.0; 2]; 2];
        let mut b = vec![0.0; 2];
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let x = design.dyad(i, j);
                for p in 0..2 {
                    b[p] += x[p] * y.get(i, j);
                    for q in 0..2 {
                        g[p][q] += x[p] * x[q];
                    }
                }
            }
        }
        let oracle = gauss_solve(&g, &b);
        let r = ols_dyadic(&design, &y).unwrap();
        for (a, o) in r.mu_hat.iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-12, "{a} vs {o}");
        }
    }

    #[test]
    fn collinear_design_is_rejected() {
        let n = 5;
        let ones = SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { 1.0 });
        let twos = ones.map(|_, _, v| 2.0 * v);
        let design = DyadicDesign::new(vec![ones, twos], Some(0)).unwrap();
        let y = OutcomeMatrix::new(SymMatrix::zeros(n)).unwrap();
        assert!(matches!(ols_dyadic(&design, &y), Err(DyadError::Singular { .. })));
    }
}
