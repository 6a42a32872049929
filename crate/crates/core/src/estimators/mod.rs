//! Point estimators: dyadic OLS and its intercept adjustment, the
//! eigenvalue-corrected fixed-point map `f_N`, its iteration, the `K̂`
//! plug-in and the two-iteration estimator.

mod fn_map;
mod intercept;
mod k_hat;
mod ols;
mod two_step;

use serde::{Deserialize, Serialize};

use crate::model::ParamVector;

pub use fn_map::{f_n_iterate, fixed_point, single_iteration, FnMap, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use intercept::{adjust_intercept, first_stage, solve_depressed_cubic, FirstStage, InterceptAdjustment};
pub use k_hat::{k_hat, KEstimate};
pub use ols::ols_dyadic;
pub use two_step::{two_step, two_step_with_k};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    OlsAdjusted,
    SingleIteration,
    FixedPoint,
    TwoStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mu_hat: ParamVector,
    pub method: Method,
    /// Number of `f_N` evaluations.
    pub iterations: usize,
    /// Starting value first, `mu_hat` last.
    pub trajectory: Vec<ParamVector>,
    pub converged: bool,
    pub final_step_norm: f64,
    /// Maximal-|λ| eigenvalue of `M(mu_hat)`.
    pub lambda_lead: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_estimate: Option<KEstimate>,
}
