//! Consistent intercept for the reparameterized model: OLS estimates β₁,
//! whereas the model in `U` has intercept `β₁ − δγ²`. `γ²` and `δ` are
//! recovered from the second and third residual moments along paths and
//! triangles.

use serde::{Deserialize, Serialize};

use super::{ols_dyadic, EstimateReport, Method};
use crate::error::{DyadError, Result};
use crate::model::{build_residual_matrix, DyadicDesign, OutcomeMatrix, ParamVector};
use crate::spectral::eig_sym;

const MIN_SIGMA_U2: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptAdjustment {
    /// Raw path moment; may be negative before clamping.
    pub a_hat: f64,
    pub b_hat: f64,
    pub a_clamped: bool,
    pub sigma_u2_hat: f64,
    pub gamma2_hat: f64,
    pub delta_tilde: i8,
    pub mu1_tilde: f64,
    /// `beta_tilde` with its intercept replaced by `mu1_tilde`.
    pub mu_tilde: ParamVector,
}

/// Unique real root of `x³ + 3a·x − |b|` for `a ≥ 0`, by bisection.
pub fn solve_depressed_cubic(a: f64, abs_b: f64) -> f64 {
    let a = a.max(0.0);
    let b = abs_b.abs();
    let p = |x: f64| x * x * x + 3.0 * a * x - b;
    let mut lo = 0.0f64;
    let mut hi = (b.cbrt() + (3.0 * a).sqrt()).max(1.0);
    for _ in 0..400 {
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn adjust_intercept(
    design: &DyadicDesign,
    y: &OutcomeMatrix,
    beta_tilde: &ParamVector,
) -> Result<InterceptAdjustment> {
    let Some(c) = design.intercept_column() else {
        return Err(DyadError::contract("intercept adjustment needs an intercept column"));
    };
    let eps = build_residual_matrix(design, y, beta_tilde)?;
    let e = eps.matrix();
    let n = e.n();
    let n3 = (n as f64).powi(3);

    // Σ_{i, j≠k} ε_ij ε_ik = Σ_i (row sum)² − Σ_i (row sum of squares)
    let a_hat = (0..n)
        .map(|i| {
            let row = e.row(i);
            let s: f64 = row.iter().sum();
            let sq: f64 = row.iter().map(|v| v * v).sum();
            s * s - sq
        })
        .sum::<f64>()
        / n3;

    // Σ_{i≠j≠k} ε_ij ε_jk ε_ki = trace(E³), the zero diagonal removing coincident indices
    let e2 = e.as_faer() * e.as_faer();
    let mut tr = 0.0;
    for j in 0..n {
        let col = e.row(j);
        for i in 0..n {
            tr += e2[(i, j)] * col[i];
        }
    }
    let b_hat = tr / n3;

    let a_clamped = a_hat < 0.0;
    let a_pos = a_hat.max(0.0);
    let delta_tilde: i8 = if b_hat < 0.0 { -1 } else { 1 };
    let sigma_u2_hat = solve_depressed_cubic(a_pos, b_hat.abs());
    if sigma_u2_hat < MIN_SIGMA_U2 {
        return Err(DyadError::DegenerateEffects(sigma_u2_hat));
    }
    let gamma2_hat = (a_pos / sigma_u2_hat).max(0.0);
    let mu1_tilde = beta_tilde[c] - f64::from(delta_tilde) * gamma2_hat;
    let mut mu = beta_tilde.to_vec();
    mu[c] = mu1_tilde;
    Ok(InterceptAdjustment {
        a_hat,
        b_hat,
        a_clamped,
        sigma_u2_hat,
        gamma2_hat,
        delta_tilde,
        mu1_tilde,
        mu_tilde: ParamVector::new(mu)?,
    })
}

/// OLS plus, when the design has an intercept, the intercept adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub ols: EstimateReport,
    pub adjustment: Option<InterceptAdjustment>,
    pub adjusted: EstimateReport,
}

impl FirstStage {
    pub fn mu_tilde(&self) -> &ParamVector {
        &self.adjusted.mu_hat
    }
}

/// Default starting value for the iterative estimators. Designs without an
/// intercept column start from plain OLS.
pub fn first_stage(design: &DyadicDesign, y: &OutcomeMatrix) -> Result<FirstStage> {
    let ols = ols_dyadic(design, y)?;
    if !design.has_intercept_column() {
        let mut adjusted = ols.clone();
        adjusted.method = Method::OlsAdjusted;
        return Ok(FirstStage {
            ols,
            adjustment: None,
            adjusted,
        });
    }
    let adj = adjust_intercept(design, y, &ols.mu_hat)?;
    let lambda_lead = eig_sym(build_residual_matrix(design, y, &adj.mu_tilde)?.matrix())?.lambda_lead();
    let adjusted = EstimateReport {
        mu_hat: adj.mu_tilde.clone(),
        method: Method::OlsAdjusted,
        iterations: 0,
        trajectory: vec![ols.mu_hat.clone(), adj.mu_tilde.clone()],
        converged: true,
        final_step_norm: 0.0,
        lambda_lead,
        k_estimate: None,
    };
    Ok(FirstStage {
        ols,
        adjustment: Some(adj),
        adjusted,
    })
}
