//! Plug-in estimate of the linearization matrix `K` of one `f_N` step, from
//! `q̂ = (Σν_i)²/N` and moments over disjoint node pairs `(2k, 2k+1)` and
//! disjoint paths `(3k, 3k+1, 3k+2)`, which keep the summands independent.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{DyadError, Result};
use crate::linalg::{from_rows, identity, inverse_checked, spectral_radius, to_rows};
use crate::model::DyadicDesign;

const MIN_NODES_K: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    /// Set when the spectral radius is not below 1 (the estimate is kept as is).
    pub radius_flag: bool,
    pub q_hat: f64,
}

impl KEstimate {
    /// Builds `G = (I − K)⁻¹` and the diagnostics for a given `K`.
    pub fn from_k(k: Mat<f64>, q_hat: f64) -> Result<Self> {
        let l = k.nrows();
        let i_minus_k = identity(l) - &k;
        let g = inverse_checked(i_minus_k.as_ref(), "I - K")?;
        let radius = spectral_radius(k.as_ref())?;
        Ok(KEstimate {
            k: to_rows(k.as_ref()),
            g: to_rows(g.as_ref()),
            spectral_radius: radius,
            radius_flag: radius >= 1.0,
            q_hat,
        })
    }

    pub fn zero(l: usize) -> Self {
        KEstimate::from_k(Mat::zeros(l, l), 0.0).expect("identity is invertible")
    }

    pub fn k_mat(&self) -> Mat<f64> {
        from_rows(&self.k)
    }

    pub fn g_mat(&self) -> Mat<f64> {
        from_rows(&self.g)
    }
}

pub fn k_hat(design: &DyadicDesign, nu: &[f64]) -> Result<KEstimate> {
    let n = design.n();
    if n < MIN_NODES_K {
        return Err(DyadError::contract(format!("K estimate needs at least {MIN_NODES_K} nodes, got {n}")));
    }
    if nu.len() != n {
        return Err(DyadError::contract(format!(
            "eigenvector has length {} but design has {n} nodes",
            nu.len()
        )));
    }
    let l = design.l();
    let s: f64 = nu.iter().sum();
    let q = s * s / n as f64;

    let pairs = n / 2;
    let mut p_hat = Mat::<f64>::zeros(l, l);
    let mut m_hat = vec![0.0; l];
    for k in 0..pairs {
        let x = design.dyad(2 * k, 2 * k + 1);
        for a in 0..l {
            m_hat[a] += x[a];
            for b in 0..l {
                p_hat[(a, b)] += x[a] * x[b];
            }
        }
    }
    let triples = n / 3;
    let mut q_hat_m = Mat::<f64>::zeros(l, l);
    for k in 0..triples {
        let x1 = design.dyad(3 * k, 3 * k + 1);
        let x2 = design.dyad(3 * k + 1, 3 * k + 2);
        for a in 0..l {
            for b in 0..l {
                q_hat_m[(a, b)] += x1[a] * x2[b];
            }
        }
    }
    let inv_p = 1.0 / pairs as f64;
    let inv_t = 1.0 / triples as f64;
    let m_hat: Vec<f64> = m_hat.iter().map(|v| v * inv_p).collect();
    let inner = Mat::<f64>::from_fn(l, l, |a, b| p_hat[(a, b)] * inv_p - q * q_hat_m[(a, b)] * inv_t);
    let right = Mat::<f64>::from_fn(l, l, |a, b| q_hat_m[(a, b)] * inv_t - q * m_hat[a] * m_hat[b]);
    let inner_inv = inverse_checked(inner.as_ref(), "K estimate inner matrix")?;
    let k = (&inner_inv * &right) * faer::Scale(q);
    KEstimate::from_k(k, q)
}
