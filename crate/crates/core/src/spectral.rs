//! Symmetric eigendecomposition, the leading-|λ| eigenpair with a fixed sign
//! convention, and random-matrix diagnostics (semicircle law, rank-one
//! interlacing, spike-location expansion).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::{DyadError, Result};
use crate::format::fmt_sig17;
use crate::linalg::{dot, SymMatrix};

/// Sums (and components) of a unit eigenvector below this are treated as zero
/// when fixing its sign.
const SIGN_TOL: f64 = 1e-12;
/// Relative tolerance for declaring `|λ₁| == |λ_N|`.
const TIE_TOL: f64 = 1e-12;

/// Sorted spectrum plus the sign-normalized eigenvector of the maximal-|λ| eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Position in `eigenvalues` of the eigenvalue with maximal modulus (0 or n−1).
    pub leading_index: usize,
    /// Unit eigenvector for `eigenvalues[leading_index]`.
    pub nu: Vec<f64>,
    pub sign_fixed: bool,
    /// Set when `|λ₁|` and `|λ_N|` coincide; the positive one is reported.
    pub tie: bool,
}

impl SpectralSummary {
    pub fn lambda_lead(&self) -> f64 {
        self.eigenvalues[self.leading_index]
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Full set of eigenpairs, eigenvalues descending; `vectors[k]` pairs with `values[k]`.
#[derive(Debug, Clone)]
pub struct FullEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

fn non_convergence(m: &SymMatrix) -> DyadError {
    DyadError::EigenNonConvergence {
        n: m.n(),
        max_abs: m.max_abs(),
        frobenius: m.frobenius_sq().sqrt(),
    }
}

/// Full decomposition returning every eigenpair.
pub fn eig_sym_full(m: &SymMatrix) -> Result<FullEigen> {
    if m.n() == 0 {
        return Err(DyadError::contract("cannot decompose an empty matrix"));
    }
    let evd = m
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| non_convergence(m))?;
    let n = m.n();
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer sorts ascending
    let values = (0..n).rev().map(|k| s[k]).collect();
    let vectors = (0..n)
        .rev()
        .map(|k| (0..n).map(|i| u[(i, k)]).collect())
        .collect();
    Ok(FullEigen { values, vectors })
}

/// Eigenvalues only, descending. Cheaper than [`eig_sym`] when no vector is needed.
pub fn eigenvalues_sym(m: &SymMatrix) -> Result<Vec<f64>> {
    if m.n() == 0 {
        return Err(DyadError::contract("cannot decompose an empty matrix"));
    }
    let mut vals = m
        .as_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| non_convergence(m))?;
    vals.reverse();
    Ok(vals)
}

/// Decomposes `m` and returns its spectrum with the sign-fixed leading eigenvector.
pub fn eig_sym(m: &SymMatrix) -> Result<SpectralSummary> {
    let full = eig_sym_full(m)?;
    let n = full.values.len();
    let first = full.values[0];
    let last = full.values[n - 1];
    let scale = first.abs().max(last.abs()).max(1.0);
    let tie = (first.abs() - last.abs()).abs() <= TIE_TOL * scale;
    let leading_index = if tie || first.abs() >= last.abs() { 0 } else { n - 1 };
    let mut nu = full.vectors.into_iter().nth(leading_index).expect("index in range");
    apply_sign_convention(&mut nu);
    Ok(SpectralSummary {
        eigenvalues: full.values,
        leading_index,
        nu,
        sign_fixed: true,
        tie,
    })
}

/// Maximal-|λ| eigenvalue and its sign-fixed unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadingPair {
    pub lambda: f64,
    pub nu: Vec<f64>,
    pub tie: bool,
}

pub fn leading_abs_eigenpair(m: &SymMatrix) -> Result<LeadingPair> {
    let spec = eig_sym(m)?;
    Ok(LeadingPair {
        lambda: spec.lambda_lead(),
        tie: spec.tie,
        nu: spec.nu,
    })
}

/// Orients `nu` so that `Σ ν_i ≥ 0`; when the sum vanishes, the first
/// nonzero component is made positive. Idempotent.
pub fn apply_sign_convention(nu: &mut [f64]) {
    let sum: f64 = nu.iter().sum();
    let flip = if sum < -SIGN_TOL {
        true
    } else if sum.abs() <= SIGN_TOL {
        nu.iter().find(|v| v.abs() > SIGN_TOL).is_some_and(|v| *v < 0.0)
    } else {
        false
    };
    if flip {
        nu.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Scale of the off-diagonal entries for the Wigner semicircle law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemicircleSpec {
    sigma: f64,
}

impl SemicircleSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DyadError::contract(format!("semicircle scale must be positive, got {sigma}")));
        }
        Ok(SemicircleSpec { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Semicircle density `√(4σ² − x²) / (2πσ²)` on `[−2σ, 2σ]`, zero outside.
pub fn semicircle_pdf(x: f64, spec: SemicircleSpec) -> f64 {
    let s2 = spec.sigma * spec.sigma;
    let r = 4.0 * s2 - x * x;
    if r <= 0.0 {
        0.0
    } else {
        r.sqrt() / (2.0 * PI * s2)
    }
}

pub fn semicircle_cdf(x: f64, spec: SemicircleSpec) -> f64 {
    let two_s = 2.0 * spec.sigma;
    if x <= -two_s {
        return 0.0;
    }
    if x >= two_s {
        return 1.0;
    }
    let s2 = spec.sigma * spec.sigma;
    let v = 0.5 + x * (4.0 * s2 - x * x).sqrt() / (4.0 * PI * s2) + (x / two_s).asin() / PI;
    v.clamp(0.0, 1.0)
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `eigenvalues` (already rescaled by `1/√N`) and the semicircle law.
pub fn semicircle_distance(eigenvalues: &[f64], spec: SemicircleSpec) -> Result<f64> {
    if eigenvalues.is_empty() {
        return Err(DyadError::contract("semicircle distance needs at least one eigenvalue"));
    }
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted.iter().enumerate().fold(0.0f64, |acc, (k, &x)| {
        let f = semicircle_cdf(x, spec);
        let above = (k + 1) as f64 / n - f;
        let below = f - k as f64 / n;
        acc.max(above).max(below)
    });
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterlacingReport {
    pub holds: bool,
    /// Largest signed violation; non-positive when every inequality holds strictly.
    pub max_violation: f64,
    pub tolerance: f64,
}

/// Checks `λ_i(V) ≤ λ_i(V+UU') ≤ λ_{i−1}(V)` (i ≥ 2) and `λ₁(V) ≤ λ₁(V+UU')`.
/// Both inputs must be sorted descending.
pub fn check_interlacing(eigs_base: &[f64], eigs_spiked: &[f64]) -> Result<InterlacingReport> {
    if eigs_base.len() != eigs_spiked.len() {
        return Err(DyadError::contract(format!(
            "interlacing needs equal lengths, got {} and {}",
            eigs_base.len(),
            eigs_spiked.len()
        )));
    }
    if eigs_base.is_empty() {
        return Err(DyadError::contract("interlacing needs nonempty spectra"));
    }
    let scale = eigs_base
        .iter()
        .chain(eigs_spiked)
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tolerance = 1e-8 * (1.0 + scale);
    let mut worst = f64::NEG_INFINITY;
    for k in 0..eigs_base.len() {
        worst = worst.max(eigs_base[k] - eigs_spiked[k]);
        if k > 0 {
            worst = worst.max(eigs_spiked[k] - eigs_base[k - 1]);
        }
    }
    Ok(InterlacingReport {
        holds: worst <= tolerance,
        max_violation: worst,
        tolerance,
    })
}

/// Three-term expansion `U'U + U'VU/U'U + U'V²U/(U'U)² − E(U₁)²` of the spike
/// eigenvalue of `A = UU' + V − E(U₁)²I`. `v` must carry the diagonal
/// `E(U₁)² − U_i²` that makes `A` zero-diagonal.
pub fn spike_expansion_oracle(u: &[f64], v: &SymMatrix, mean_u_sq: f64) -> Result<f64> {
    if u.len() != v.n() {
        return Err(DyadError::contract(format!(
            "vector length {} does not match {}x{} matrix",
            u.len(),
            v.n(),
            v.n()
        )));
    }
    let utu = dot(u, u);
    if utu == 0.0 {
        return Err(DyadError::contract("spike expansion undefined for U = 0"));
    }
    let vu = v.mul_vec(u);
    Ok(utu + dot(u, &vu) / utu + dot(&vu, &vu) / (utu * utu) - mean_u_sq)
}

/// Writes eigenvalues one per line under the header `eigenvalue`.
pub fn export_spectrum(eigenvalues: &[f64], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(eigenvalues.len() * 26 + 16);
    out.push_str("eigenvalue\n");
    for v in eigenvalues {
        out.push_str(&fmt_sig17(*v));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| DyadError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| DyadError::io(path, e))
}
