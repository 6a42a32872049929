//! The map `f_N(μ) = (A − C(ν))⁻¹ (b − d(ν))`, with `ν` the leading-|λ|
//! eigenvector of `M(μ)`, `A = Σ_{i≠j} X_ij X_ij'`, `b = Σ_{i≠j} X_ij Y_ij`,
//! `C = Σ_{i≠j, k≠i,j} ν_iν_j X_ik X_jk'` and `d = Σ_{i≠j, k≠i,j} ν_iν_j X_ik Y_jk`.
//!
//! The triple sums are assembled in O(N²L²) from the weighted column sums
//! `w_k = Σ_i ν_i X_ik` and `z_k = Σ_i ν_i Y_ik`: summing over all `(i, j, k)`
//! gives `Σ_k w_k w_k'`, the zero diagonals already drop `k = i` and `k = j`,
//! and the `i = j` terms are subtracted explicitly.

use faer::Mat;

use super::ols::normal_equations;
use super::{EstimateReport, Method};
use crate::error::{DyadError, Result};
use crate::linalg::{inf_norm, solve_checked};
use crate::model::{build_residual_matrix, check_mu, DyadicDesign, OutcomeMatrix, ParamVector};
use crate::spectral::{eig_sym, SpectralSummary};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;
const DIVERGENCE_FACTOR: f64 = 1e3;

/// `f_N` bound to one data set, with the ν-free parts precomputed.
pub struct FnMap<'a> {
    design: &'a DyadicDesign,
    y: &'a OutcomeMatrix,
    gram: Mat<f64>,
    rhs: Vec<f64>,
}

/// One evaluation of `f_N` and the spectrum it was built from.
#[derive(Debug, Clone)]
pub struct FnEval {
    pub next: ParamVector,
    pub spectrum: SpectralSummary,
}

impl<'a> FnMap<'a> {
    pub fn new(design: &'a DyadicDesign, y: &'a OutcomeMatrix) -> Result<Self> {
        let (gram, rhs) = normal_equations(design, y)?;
        Ok(FnMap { design, y, gram, rhs })
    }

    pub fn design(&self) -> &DyadicDesign {
        self.design
    }

    pub fn outcome(&self) -> &OutcomeMatrix {
        self.y
    }

    pub fn spectrum_at(&self, mu: &ParamVector) -> Result<SpectralSummary> {
        eig_sym(build_residual_matrix(self.design, self.y, mu)?.matrix())
    }

    pub fn eval(&self, mu: &ParamVector) -> Result<FnEval> {
        check_mu(self.design, mu)?;
        let spectrum = self.spectrum_at(mu)?;
        let next = self.apply_with_nu(&spectrum.nu)?;
        Ok(FnEval { next, spectrum })
    }

    /// The closed-form weighted least squares for a given unit vector `ν`.
    pub fn apply_with_nu(&self, nu: &[f64]) -> Result<ParamVector> {
        let n = self.design.n();
        if nu.len() != n {
            return Err(DyadError::contract(format!(
                "eigenvector has length {} but design has {n} nodes",
                nu.len()
            )));
        }
        let l = self.design.l();
        let xs = self.design.regressors();
        let ym = self.y.matrix();

        // w[k][l] = Σ_i ν_i X_ik,l ; z[k] = Σ_i ν_i Y_ik (columns = rows by symmetry)
        let w: Vec<Vec<f64>> = xs.iter().map(|x| x.mul_vec(nu)).collect();
        let z = ym.mul_vec(nu);

        let mut c = Mat::<f64>::zeros(l, l);
        let mut d = vec![0.0; l];
        for k in 0..n {
            for p in 0..l {
                d[p] += w[p][k] * z[k];
                for q in 0..=p {
                    c[(p, q)] += w[p][k] * w[q][k];
                }
            }
        }
        // remove i = j: Σ_i ν_i² Σ_k X_ik X_ik' and Σ_i ν_i² Σ_k X_ik Y_ik
        let mut xrow = vec![0.0; l];
        for i in 0..n {
            let nu2 = nu[i] * nu[i];
            if nu2 == 0.0 {
                continue;
            }
            let yrow = ym.row(i);
            let mut cc = vec![0.0; l * l];
            let mut dd = vec![0.0; l];
            for k in 0..n {
                if k == i {
                    continue;
                }
                for (slot, x) in xrow.iter_mut().zip(xs) {
                    *slot = x.row(i)[k];
                }
                for p in 0..l {
                    dd[p] += xrow[p] * yrow[k];
                    for q in 0..=p {
                        cc[p * l + q] += xrow[p] * xrow[q];
                    }
                }
            }
            for p in 0..l {
                d[p] -= nu2 * dd[p];
                for q in 0..=p {
                    c[(p, q)] -= nu2 * cc[p * l + q];
                }
            }
        }

        let lhs = Mat::<f64>::from_fn(l, l, |p, q| {
            let (hi, lo) = if p >= q { (p, q) } else { (q, p) };
            self.gram[(p, q)] - c[(hi, lo)]
        });
        let rhs: Vec<f64> = self.rhs.iter().zip(&d).map(|(b, dv)| b - dv).collect();
        ParamVector::new(solve_checked(lhs.as_ref(), &rhs, "eigenvalue-corrected Gram matrix")?)
    }
}

pub fn f_n_iterate(design: &DyadicDesign, y: &OutcomeMatrix, mu: &ParamVector) -> Result<ParamVector> {
    Ok(FnMap::new(design, y)?.eval(mu)?.next)
}

/// One `f_N` step from `mu`.
pub fn single_iteration(design: &DyadicDesign, y: &OutcomeMatrix, mu: &ParamVector) -> Result<EstimateReport> {
    let map = FnMap::new(design, y)?;
    let next = map.eval(mu)?.next;
    let lambda_lead = map.spectrum_at(&next)?.lambda_lead();
    let step: Vec<f64> = next.iter().zip(mu.iter()).map(|(a, b)| a - b).collect();
    Ok(EstimateReport {
        trajectory: vec![mu.clone(), next.clone()],
        mu_hat: next,
        method: Method::SingleIteration,
        iterations: 1,
        converged: true,
        final_step_norm: inf_norm(&step),
        lambda_lead,
        k_estimate: None,
    })
}

/// Iterates `μ_{m+1} = f_N(μ_m)` until `‖μ_{m+1} − μ_m‖∞ ≤ tol·(1 + ‖μ_m‖∞)`.
pub fn fixed_point(
    design: &DyadicDesign,
    y: &OutcomeMatrix,
    mu_start: &ParamVector,
    tol: f64,
    max_iter: usize,
) -> Result<EstimateReport> {
    iterate(design, y, mu_start, tol, max_iter, DIVERGENCE_FACTOR)
}

fn iterate(
    design: &DyadicDesign,
    y: &OutcomeMatrix,
    mu_start: &ParamVector,
    tol: f64,
    max_iter: usize,
    divergence_factor: f64,
) -> Result<EstimateReport> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(DyadError::contract(format!("tolerance must be positive, got {tol}")));
    }
    let map = FnMap::new(design, y)?;
    check_mu(design, mu_start)?;
    let start_norm = inf_norm(mu_start);
    let limit = divergence_factor * (1.0 + start_norm);

    let mut trajectory = vec![mu_start.clone()];
    let mut current = mu_start.clone();
    let mut converged = false;
    let mut step_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = map.eval(&current)?.next;
        iterations += 1;
        let step: Vec<f64> = next.iter().zip(current.iter()).map(|(a, b)| a - b).collect();
        step_norm = inf_norm(&step);
        let drift: Vec<f64> = next.iter().zip(mu_start.iter()).map(|(a, b)| a - b).collect();
        let distance = inf_norm(&drift);
        if distance > limit {
            return Err(DyadError::Divergence {
                iteration: iterations,
                distance,
                limit,
            });
        }
        let threshold = tol * (1.0 + inf_norm(&current));
        trajectory.push(next.clone());
        current = next;
        if step_norm <= threshold {
            converged = true;
            break;
        }
    }
    let lambda_lead = map.spectrum_at(&current)?.lambda_lead();
    Ok(EstimateReport {
        mu_hat: current,
        method: Method::FixedPoint,
        iterations,
        trajectory,
        converged,
        final_step_norm: step_norm,
        lambda_lead,
        k_estimate: None,
    })
}
