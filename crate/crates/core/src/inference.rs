//! Spectral recovery of `δ` and the effects `U`, the bias and covariance of
//! `N(μ̂ − μ0)`, the noise variance, and normal confidence intervals.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{DyadError, Result};
use crate::estimators::{
    first_stage, fixed_point, k_hat, two_step, EstimateReport, FirstStage, KEstimate, Method, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use crate::linalg::{inverse_checked, mat_vec, solve_checked, to_rows};
use crate::model::{build_residual_matrix, DyadicDesign, OutcomeMatrix, ParamVector};
use crate::spectral::{eig_sym, SpectralSummary};

/// Floor applied to `σ̂_V²` inside the covariance only.
const SIGMA_V2_FLOOR: f64 = 1e-8;
const MIN_M2: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRecovery {
    pub delta_hat: i8,
    pub u_hat: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub lambda_lead: f64,
}

impl EffectRecovery {
    /// `m1²/m2`, the plug-in for `E(U)²/E(U²)`.
    pub fn q_hat(&self) -> f64 {
        if self.m2 > 0.0 {
            self.m1 * self.m1 / self.m2
        } else {
            0.0
        }
    }
}

/// `δ̂ = sign(λ_lead)`, `Û = δ̂·√|λ_lead|·ν`.
pub fn recover_effects(spec: &SpectralSummary) -> EffectRecovery {
    let lambda = spec.lambda_lead();
    let delta_hat: i8 = if lambda < 0.0 { -1 } else { 1 };
    let scale = f64::from(delta_hat) * lambda.abs().sqrt();
    let u_hat: Vec<f64> = spec.nu.iter().map(|v| scale * v).collect();
    let n = u_hat.len() as f64;
    let (s1, s2, s3) = u_hat
        .iter()
        .fold((0.0, 0.0, 0.0), |(a, b, c), u| (a + u, b + u * u, c + u * u * u));
    EffectRecovery {
        delta_hat,
        m1: s1 / n,
        m2: s2 / n,
        m3: s3 / n,
        u_hat,
        lambda_lead: lambda,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMoments {
    /// Mean of `X_ij X_ij'` over ordered `i ≠ j`.
    pub xx: Vec<Vec<f64>>,
    /// Mean of `X_ij X_jk'` over ordered distinct triples.
    pub x_path: Vec<Vec<f64>>,
    pub x_mean: Vec<f64>,
}

/// Path sums use the node totals `r_j = Σ_i X_ij`:
/// `Σ_{i,j,k distinct} X_ij X_jk' = Σ_j r_j r_j' − Σ_{i≠j} X_ij X_ij'`.
pub fn cross_moments(design: &DyadicDesign) -> CrossMoments {
    let n = design.n();
    let l = design.l();
    let xs = design.regressors();
    let mut xx = vec![vec![0.0; l]; l];
    let mut rr = vec![vec![0.0; l]; l];
    let mut total = vec![0.0; l];
    let mut x = vec![0.0; l];
    for j in 0..n {
        let r: Vec<f64> = xs.iter().map(|m| m.row(j).iter().sum()).collect();
        for k in 0..n {
            if k == j {
                continue;
            }
            for (slot, m) in x.iter_mut().zip(xs) {
                *slot = m.row(j)[k];
            }
            for p in 0..l {
                for q in 0..l {
                    xx[p][q] += x[p] * x[q];
                }
            }
        }
        for p in 0..l {
            total[p] += r[p];
            for q in 0..l {
                rr[p][q] += r[p] * r[q];
            }
        }
    }
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    let triples = pairs * (nf - 2.0);
    let x_path = (0..l)
        .map(|p| (0..l).map(|q| (rr[p][q] - xx[p][q]) / triples).collect())
        .collect();
    let xx = xx.iter().map(|row| row.iter().map(|v| v / pairs).collect()).collect();
    let x_mean = total.iter().map(|v| v / pairs).collect();
    CrossMoments { xx, x_path, x_mean }
}

/// `B = xx − q·x_path`.
fn b_matrix(cm: &CrossMoments, q: f64) -> Mat<f64> {
    let l = cm.x_mean.len();
    Mat::from_fn(l, l, |p, r| cm.xx[p][r] - q * cm.x_path[p][r])
}

fn check_l(k: &KEstimate, cm: &CrossMoments) -> Result<()> {
    if k.k.len() != cm.x_mean.len() {
        return Err(DyadError::contract(format!(
            "K estimate is {0}x{0} but cross moments have {1} regressors",
            k.k.len(),
            cm.x_mean.len()
        )));
    }
    Ok(())
}

fn bias_with_third_moment(effects: &EffectRecovery, k: &KEstimate, cm: &CrossMoments, m3: f64) -> Result<Vec<f64>> {
    check_l(k, cm)?;
    if effects.m2 <= MIN_M2 {
        return Err(DyadError::DegenerateEffects(effects.m2));
    }
    let factor = 2.0 * f64::from(effects.delta_hat) * effects.m1 * m3 / effects.m2;
    let b = b_matrix(cm, effects.q_hat());
    let binv_x = solve_checked(b.as_ref(), &cm.x_mean, "bias inner matrix")?;
    let g = k.g_mat();
    Ok(mat_vec(g.as_ref(), &binv_x).into_iter().map(|v| factor * v).collect())
}

/// Plug-in asymptotic bias of `N(μ̂ − μ0)`:
/// `2δ̂·(m1·m3/m2)·Ĝ·(xx − q̂·x_path)⁻¹·x_mean`.
pub fn bias_estimate(effects: &EffectRecovery, k: &KEstimate, cm: &CrossMoments) -> Result<Vec<f64>> {
    bias_with_third_moment(effects, k, cm, effects.m3)
}

/// Diagnostic variant in which `E(U³)` is replaced by `E(U³) + σ_V²·E(U)/E(U²)`.
pub fn bias_estimate_noise_adjusted(
    effects: &EffectRecovery,
    k: &KEstimate,
    cm: &CrossMoments,
    sigma_v2: f64,
) -> Result<Vec<f64>> {
    if effects.m2 <= MIN_M2 {
        return Err(DyadError::DegenerateEffects(effects.m2));
    }
    let m3 = effects.m3 + sigma_v2 * effects.m1 / effects.m2;
    bias_with_third_moment(effects, k, cm, m3)
}

/// Mean squared OLS residual on the independent subsample of disjoint dyads
/// `(2k, 2k+1)`; an intercept is appended when the design has none.
pub fn sigma_eps2(design: &DyadicDesign, y: &OutcomeMatrix) -> Result<f64> {
    let n = design.n();
    let add_const = !design.has_intercept_column();
    let l = design.l() + usize::from(add_const);
    if n < 2 * (design.l() + 2) {
        return Err(DyadError::contract(format!(
            "noise variance needs at least {} nodes, got {n}",
            2 * (design.l() + 2)
        )));
    }
    if y.n() != n {
        return Err(DyadError::contract("outcome and design sizes differ"));
    }
    let pairs = n / 2;
    let rows: Vec<(Vec<f64>, f64)> = (0..pairs)
        .map(|k| {
            let (i, j) = (2 * k, 2 * k + 1);
            let mut x = design.dyad(i, j);
            if add_const {
                x.push(1.0);
            }
            (x, y.get(i, j))
        })
        .collect();
    let mut gram = Mat::<f64>::zeros(l, l);
    let mut rhs = vec![0.0; l];
    for (x, yv) in &rows {
        for p in 0..l {
            rhs[p] += x[p] * yv;
            for q in 0..l {
                gram[(p, q)] += x[p] * x[q];
            }
        }
    }
    let beta = solve_checked(gram.as_ref(), &rhs, "subsample Gram matrix")?;
    let ssr: f64 = rows
        .iter()
        .map(|(x, yv)| {
            let fit: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yv - fit).powi(2)
        })
        .sum();
    Ok(ssr / pairs as f64)
}

/// `σ̂_V² = σ̂_ε² − m2² + m1⁴`; may be negative in finite samples.
pub fn sigma_v2(sigma_eps2: f64, effects: &EffectRecovery) -> f64 {
    sigma_eps2 - effects.m2 * effects.m2 + effects.m1.powi(4)
}

/// Covariance of `N(μ̂ − μ0)`:
/// `σ̂_V²·Ĝ·B̂⁻¹·Σ̂·B̂⁻¹'·Ĝ'` with `Σ̂ = 2xx + 10q̂²·x̄x̄' − 4q̂·x_path`.
pub fn asymptotic_covariance(
    effects: &EffectRecovery,
    k: &KEstimate,
    cm: &CrossMoments,
    sigma_v2: f64,
) -> Result<Vec<Vec<f64>>> {
    check_l(k, cm)?;
    let l = cm.x_mean.len();
    let q = effects.q_hat();
    let b = b_matrix(cm, q);
    let binv = inverse_checked(b.as_ref(), "covariance inner matrix")?;
    let sigma = Mat::<f64>::from_fn(l, l, |p, r| {
        2.0 * cm.xx[p][r] + 10.0 * q * q * cm.x_mean[p] * cm.x_mean[r] - 4.0 * q * cm.x_path[p][r]
    });
    let left = &k.g_mat() * &binv;
    let cov = (&left * &sigma * left.transpose()) * faer::Scale(sigma_v2);
    let sym = Mat::<f64>::from_fn(l, l, |p, r| 0.5 * (cov[(p, r)] + cov[(r, p)]));
    let scale = (0..l).fold(0.0f64, |acc, p| acc.max(cov[(p, p)].abs())).max(1.0);
    let asym = (0..l)
        .flat_map(|p| (0..l).map(move |r| (p, r)))
        .fold(0.0f64, |acc, (p, r)| acc.max((sym[(p, r)] - cov[(p, r)]).abs()));
    if asym > 1e-8 * scale {
        return Err(DyadError::Estimation(format!("covariance asymmetry {asym:.3e} too large")));
    }
    Ok(to_rows(sym.as_ref()))
}

/// Inverse standard normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

/// Everything `debias_and_ci` needs besides the point estimate.
#[derive(Debug, Clone)]
pub struct InferenceInputs {
    pub effects: EffectRecovery,
    pub k: KEstimate,
    pub cross_moments: CrossMoments,
    pub sigma_eps2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub estimate: ParamVector,
    pub debiased: Vec<f64>,
    pub delta_hat: i8,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub q_hat: f64,
    pub bias: Vec<f64>,
    pub sigma_eps2: f64,
    pub sigma_v2: f64,
    /// Set when `σ̂_V²` came out negative; the covariance then used a small floor.
    pub sigma_v2_negative: bool,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub level: f64,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub k_spectral_radius: f64,
    pub k_radius_flag: bool,
}

pub fn debias_and_ci(estimate: &EstimateReport, inputs: &InferenceInputs, level: f64) -> Result<InferenceReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(DyadError::contract(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n = inputs.effects.u_hat.len() as f64;
    let mu = &estimate.mu_hat;
    if mu.len() != inputs.cross_moments.x_mean.len() {
        return Err(DyadError::contract("estimate and cross moments disagree on the regressor count"));
    }
    let bias = bias_estimate(&inputs.effects, &inputs.k, &inputs.cross_moments)?;
    let sv2 = sigma_v2(inputs.sigma_eps2, &inputs.effects);
    let covariance = asymptotic_covariance(
        &inputs.effects,
        &inputs.k,
        &inputs.cross_moments,
        sv2.max(SIGMA_V2_FLOOR),
    )?;
    let std_errors: Vec<f64> = (0..mu.len()).map(|p| covariance[p][p].max(0.0).sqrt() / n).collect();
    let debiased: Vec<f64> = mu.iter().zip(&bias).map(|(m, b)| m - b / n).collect();
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(InferenceReport {
        estimate: mu.clone(),
        ci_lower: debiased.iter().zip(&std_errors).map(|(p, s)| p - z * s).collect(),
        ci_upper: debiased.iter().zip(&std_errors).map(|(p, s)| p + z * s).collect(),
        debiased,
        delta_hat: inputs.effects.delta_hat,
        m1: inputs.effects.m1,
        m2: inputs.effects.m2,
        m3: inputs.effects.m3,
        q_hat: inputs.effects.q_hat(),
        bias,
        sigma_eps2: inputs.sigma_eps2,
        sigma_v2: sv2,
        sigma_v2_negative: sv2 < 0.0,
        covariance,
        std_errors,
        level,
        k_spectral_radius: inputs.k.spectral_radius,
        k_radius_flag: inputs.k.radius_flag,
    })
}

/// Result of the full estimation-and-inference pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub first_stage: FirstStage,
    pub estimate: EstimateReport,
    /// Effects recovered at the first stage (used for bias and covariance).
    pub effects_first_stage: EffectRecovery,
    /// Effects recovered at the final estimate (reporting only).
    pub effects_final: EffectRecovery,
    pub cross_moments: CrossMoments,
    pub inference: InferenceReport,
}

/// First stage, the requested N-rate estimator (two-step or fixed point), and inference.
pub fn estimate_with_inference(
    design: &DyadicDesign,
    y: &OutcomeMatrix,
    method: Method,
    level: f64,
) -> Result<PipelineResult> {
    let fs = first_stage(design, y)?;
    let mu_tilde = fs.mu_tilde().clone();
    let spec_tilde = eig_sym(build_residual_matrix(design, y, &mu_tilde)?.matrix())?;
    let effects = recover_effects(&spec_tilde);
    let estimate = match method {
        Method::TwoStep => two_step(design, y, &mu_tilde)?,
        Method::FixedPoint => fixed_point(design, y, &mu_tilde, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
        other => {
            return Err(DyadError::contract(format!(
                "inference is defined for two_step and fixed_point, not {other:?}"
            )))
        }
    };
    let k = match &estimate.k_estimate {
        Some(k) => k.clone(),
        None => k_hat(design, &spec_tilde.nu)?,
    };
    let cm = cross_moments(design);
    let inputs = InferenceInputs {
        effects: effects.clone(),
        k,
        cross_moments: cm.clone(),
        sigma_eps2: sigma_eps2(design, y)?,
    };
    let inference = debias_and_ci(&estimate, &inputs, level)?;
    let spec_final = eig_sym(build_residual_matrix(design, y, &estimate.mu_hat)?.matrix())?;
    Ok(PipelineResult {
        first_stage: fs,
        estimate,
        effects_first_stage: effects,
        effects_final: recover_effects(&spec_final),
        cross_moments: cm,
        inference,
    })
}
