//! Seeded simulation of the dyadic model
//! `Y_ij = Σ_l β_l X_ij,l + γ(A_i + A_j) + δ·s·A_iA_j + V_ij`
//! together with the ground truth of its reparameterization
//! `Y_ij = Σ_l μ0_l X_ij,l + δU_iU_j + V_ij`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{DyadError, Result};
use crate::linalg::SymMatrix;
use crate::model::{DyadicDesign, OutcomeMatrix, ParamVector, MIN_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// `shift + N(0, sd²)`.
    ShiftedNormal { shift: f64, sd: f64 },
    Constant { value: f64 },
}

impl Distribution {
    pub fn standard_normal() -> Self {
        Distribution::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Normal { mean, .. } => mean,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::ShiftedNormal { shift, .. } => shift,
            Distribution::Constant { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Normal { sd, .. } | Distribution::ShiftedNormal { sd, .. } => sd * sd,
            Distribution::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Distribution::Constant { .. } => 0.0,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Distribution::Normal { mean: m, sd } | Distribution::ShiftedNormal { shift: m, sd } => {
                m.is_finite() && sd.is_finite() && sd >= 0.0
            }
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Distribution::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(DyadError::Config(format!("invalid parameters for {what} distribution: {self:?}")))
        }
    }

    fn sampler(&self) -> Sampler {
        match *self {
            Distribution::Normal { mean, sd } | Distribution::ShiftedNormal { shift: mean, sd } => {
                Sampler::Normal(Normal::new(mean, sd).expect("validated"))
            }
            Distribution::Uniform { low, high } => {
                Sampler::Uniform(Uniform::new(low, high).expect("validated"))
            }
            Distribution::Constant { value } => Sampler::Constant(value),
        }
    }
}

enum Sampler {
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
    Constant(f64),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Constant(v) => *v,
        }
    }

    fn draw_n(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// One regressor `X_ij = φ(X_i, X_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Intercept,
    /// `X_i + X_j`
    Sum,
    /// `X_i · X_j`
    Product,
    /// `|X_i − X_j|`
    AbsDiff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorForm {
    InterceptOnly,
    /// Intercept plus `X_i + X_j`.
    Additive,
    /// Intercept plus `X_i X_j`.
    Multiplicative,
    /// Arbitrary list; every non-intercept term gets its own node covariate draw.
    Custom(Vec<Term>),
}

impl RegressorForm {
    pub fn terms(&self) -> Vec<Term> {
        match self {
            RegressorForm::InterceptOnly => vec![Term::Intercept],
            RegressorForm::Additive => vec![Term::Intercept, Term::Sum],
            RegressorForm::Multiplicative => vec![Term::Intercept, Term::Product],
            RegressorForm::Custom(t) => t.clone(),
        }
    }
}

fn default_effect_scale() -> f64 {
    1.0
}

fn default_delta() -> i8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub beta: Vec<f64>,
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: i8,
    pub regressor_form: RegressorForm,
    pub a_dist: Distribution,
    pub v_dist: Distribution,
    pub x_dist: Distribution,
    /// Optional idiosyncratic dyad noise `W_ij` added to every non-intercept regressor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_dist: Option<Distribution>,
    #[serde(default = "default_effect_scale")]
    pub effect_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DesignSpec {
    /// `Y_ij = μ0 + δU_iU_j + V_ij` with `U = γ + A`, `A ~ N(0, σ_A²)`, `V ~ N(0, σ_V²)`.
    pub fn intercept_only(n: usize, mu0: f64, gamma: f64, delta: i8, sigma_a: f64, sigma_v: f64) -> Self {
        DesignSpec {
            name: "intercept_only".into(),
            n,
            beta: vec![mu0 + f64::from(delta) * gamma * gamma],
            gamma,
            delta,
            regressor_form: RegressorForm::InterceptOnly,
            a_dist: Distribution::Normal { mean: 0.0, sd: sigma_a },
            v_dist: Distribution::Normal { mean: 0.0, sd: sigma_v },
            x_dist: Distribution::Constant { value: 0.0 },
            w_dist: None,
            effect_scale: 1.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(DyadError::Config(m));
        if self.n < MIN_NODES {
            return cfg(format!("design '{}': n = {} is below {MIN_NODES}", self.name, self.n));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return cfg(format!("design '{}': gamma must be finite and >= 0", self.name));
        }
        if self.delta != 1 && self.delta != -1 {
            return cfg(format!("design '{}': delta must be -1 or +1, got {}", self.name, self.delta));
        }
        if !(self.effect_scale.is_finite() && self.effect_scale > 0.0) {
            return cfg(format!("design '{}': effect_scale must be positive", self.name));
        }
        let terms = self.regressor_form.terms();
        if terms.is_empty() {
            return cfg(format!("design '{}': no regressors", self.name));
        }
        if self.beta.len() != terms.len() {
            return cfg(format!(
                "design '{}': beta has {} entries but the regressor form has {} terms",
                self.name,
                self.beta.len(),
                terms.len()
            ));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return cfg(format!("design '{}': beta must be finite", self.name));
        }
        self.a_dist.validate("a")?;
        self.v_dist.validate("v")?;
        self.x_dist.validate("x")?;
        if let Some(w) = &self.w_dist {
            w.validate("w")?;
        }
        Ok(())
    }

    pub fn intercept_index(&self) -> Option<usize> {
        self.regressor_form.terms().iter().position(|t| *t == Term::Intercept)
    }

    /// First non-intercept regressor, or 0 when every regressor is an intercept.
    pub fn slope_index(&self) -> usize {
        self.regressor_form
            .terms()
            .iter()
            .position(|t| *t != Term::Intercept)
            .unwrap_or(0)
    }

    /// `U_i = γ/√s + δ√s·A_i` and the intercept shift `−δγ²/s`.
    fn reparam(&self) -> (f64, f64, f64) {
        let s = self.effect_scale;
        let d = f64::from(self.delta);
        (self.gamma / s.sqrt(), d * s.sqrt(), -d * self.gamma * self.gamma / s)
    }

    pub fn mu0(&self) -> Vec<f64> {
        let (_, _, shift) = self.reparam();
        let mut mu = self.beta.clone();
        if let Some(c) = self.intercept_index() {
            mu[c] += shift;
        }
        mu
    }

    pub fn mean_u(&self) -> f64 {
        let (offset, slope, _) = self.reparam();
        offset + slope * self.a_dist.mean()
    }

    pub fn mean_u_sq(&self) -> f64 {
        let (_, slope, _) = self.reparam();
        slope * slope * self.a_dist.variance() + self.mean_u().powi(2)
    }
}

/// Realized latent quantities of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// Raw draws `A_i`.
    pub a: Vec<f64>,
    /// `U_i = γ/√s + δ√s·A_i`; equals `γ + A_i` when `δ = +1, s = 1`.
    pub u: Vec<f64>,
    /// Off-diagonal noise `V_ij`, zero diagonal.
    pub v: SymMatrix,
    /// The theoretical diagonal `δ(E(U₁²) − U_i²)`.
    pub v_diagonal: Vec<f64>,
    pub mu0: ParamVector,
    pub beta: Vec<f64>,
    pub delta: i8,
    pub mean_u: f64,
    pub mean_u_sq: f64,
}

impl SimTruth {
    /// Noise matrix `δV + diag(E(U₁)² − U_i²)`, for which
    /// `δ·M(μ0) = UU' + noise − E(U₁)²·I` holds exactly.
    pub fn spike_noise(&self) -> SymMatrix {
        let d = f64::from(self.delta);
        let e2 = self.mean_u * self.mean_u;
        self.v
            .map(|i, j, v| if i == j { e2 - self.u[i] * self.u[i] } else { d * v })
    }

    /// `E(U₁)²`, the shift that pairs with [`SimTruth::spike_noise`].
    pub fn spike_shift(&self) -> f64 {
        self.mean_u * self.mean_u
    }

    /// Effect-free outcome `Y = Σ β_l X_l + V` on the same draws.
    pub fn oracle_outcome(&self, design: &DyadicDesign) -> OutcomeMatrix {
        let y = SymMatrix::from_lower_fn(design.n(), |i, j| {
            if i == j {
                return 0.0;
            }
            let mut v = self.v.get(i, j);
            for (x, b) in design.regressors().iter().zip(&self.beta) {
                v += b * x.get(i, j);
            }
            v
        });
        OutcomeMatrix::new(y).expect("zero diagonal by construction")
    }
}

/// Draws, in order: `A`, each non-intercept regressor's node covariates,
/// each such regressor's `W` (if configured), then `V` row by row over the
/// strict lower triangle.
pub fn simulate(spec: &DesignSpec) -> Result<(DyadicDesign, OutcomeMatrix, SimTruth)> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = spec.a_dist.sampler().draw_n(&mut rng, n);

    let terms = spec.regressor_form.terms();
    let x_sampler = spec.x_dist.sampler();
    let covariates: Vec<Option<Vec<f64>>> = terms
        .iter()
        .map(|t| (*t != Term::Intercept).then(|| x_sampler.draw_n(&mut rng, n)))
        .collect();
    let w_sampler = spec.w_dist.as_ref().map(Distribution::sampler);

    let mut x = Vec::with_capacity(terms.len());
    for (term, cov) in terms.iter().zip(&covariates) {
        let m = match (term, cov) {
            (Term::Intercept, _) => SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { 1.0 }),
            (_, Some(c)) => {
                let phi = |i: usize, j: usize| match term {
                    Term::Sum => c[i] + c[j],
                    Term::Product => c[i] * c[j],
                    Term::AbsDiff => (c[i] - c[j]).abs(),
                    Term::Intercept => unreachable!(),
                };
                match &w_sampler {
                    Some(w) => SymMatrix::from_lower_fn(n, |i, j| {
                        if i == j {
                            0.0
                        } else {
                            phi(i, j) + w.draw(&mut rng)
                        }
                    }),
                    None => SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { phi(i, j) }),
                }
            }
            (_, None) => unreachable!("non-intercept terms always carry covariates"),
        };
        x.push(m);
    }

    let v_sampler = spec.v_dist.sampler();
    let v = SymMatrix::from_lower_fn(n, |i, j| if i == j { 0.0 } else { v_sampler.draw(&mut rng) });

    let delta = f64::from(spec.delta);
    let scale = spec.effect_scale;
    let y = SymMatrix::from_lower_fn(n, |i, j| {
        if i == j {
            return 0.0;
        }
        let mut val = spec.gamma * (a[i] + a[j]) + delta * scale * a[i] * a[j] + v.get(i, j);
        for (xl, b) in x.iter().zip(&spec.beta) {
            val += b * xl.get(i, j);
        }
        val
    });

    let (offset, slope, _) = spec.reparam();
    let u: Vec<f64> = a.iter().map(|ai| offset + slope * ai).collect();
    let mean_u = spec.mean_u();
    let mean_u_sq = spec.mean_u_sq();
    let v_diagonal = u.iter().map(|ui| delta * (mean_u_sq - ui * ui)).collect();
    let design = DyadicDesign::new(x, spec.intercept_index())?;
    let truth = SimTruth {
        a,
        u,
        v,
        v_diagonal,
        mu0: ParamVector::new(spec.mu0())?,
        beta: spec.beta.clone(),
        delta: spec.delta,
        mean_u,
        mean_u_sq,
    };
    Ok((design, OutcomeMatrix::new(y)?, truth))
}

/// The four simulation designs: {additive, multiplicative} regressor × γ ∈ {0, 1},
/// β = (1, 1), X ~ U(0, 1), A, V ~ N(0, 1), δ = +1, N = 100.
pub fn standard_designs() -> Vec<DesignSpec> {
    let make = |idx: usize, form: RegressorForm, gamma: f64| DesignSpec {
        name: format!("design{idx}"),
        n: 100,
        beta: vec![1.0, 1.0],
        gamma,
        delta: 1,
        regressor_form: form,
        a_dist: Distribution::standard_normal(),
        v_dist: Distribution::standard_normal(),
        x_dist: Distribution::Uniform { low: 0.0, high: 1.0 },
        w_dist: None,
        effect_scale: 1.0,
        seed: 0,
    };
    vec![
        make(1, RegressorForm::Additive, 0.0),
        make(2, RegressorForm::Multiplicative, 0.0),
        make(3, RegressorForm::Additive, 1.0),
        make(4, RegressorForm::Multiplicative, 1.0),
    ]
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the replication stream `(design, n, replication)` under `master`;
/// independent of the order in which replications run.
pub fn child_seed(master: u64, design_idx: u64, n_idx: u64, replication: u64) -> u64 {
    [design_idx, n_idx, replication]
        .iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0xA5A5_A5A5))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn off_diag_values(m: &SymMatrix) -> Vec<f64> {
        let n = m.n();
        (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| m.get(i, j)).collect()
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn standard_designs_match_listing() {
        let d = standard_designs();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|s| s.n == 100 && s.beta == vec![1.0, 1.0]));
        assert_eq!(d[2].gamma, 1.0);
        assert_eq!(d[2].regressor_form, RegressorForm::Additive);
        assert_eq!(d[1].gamma, 0.0);
        assert_eq!(d[1].regressor_form, RegressorForm::Multiplicative);
        assert_eq!(d[3].mu0(), vec![0.0, 1.0]);
    }

    #[test]
    fn effect_free_intercept_only_is_exact() {
        let mut spec = DesignSpec::intercept_only(6, 1.0, 0.0, 1, 0.0, 0.0);
        spec.a_dist = Distribution::Constant { value: 0.0 };
        spec.v_dist = Distribution::Constant { value: 0.0 };
        let (_, y, _) = simulate(&spec).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(y.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let spec = standard_designs()[3].clone().with_seed(99);
        let (d1, y1, t1) = simulate(&spec).unwrap();
        let (d2, y2, t2) = simulate(&spec).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(y1, y2);
        assert_eq!(t1, t2);
        let (_, y3, _) = simulate(&spec.with_seed(100)).unwrap();
        assert_ne!(y1, y3);
    }

    #[test]
    fn residual_at_truth_is_rank_one_plus_noise() {
        for delta in [1i8, -1] {
            let mut spec = standard_designs()[2].clone().with_seed(5);
            spec.delta = delta;
            spec.effect_scale = 2.5;
            let (design, y, t) = simulate(&spec).unwrap();
            let m = crate::model::build_residual_matrix(&design, &y, &t.mu0).unwrap();
            let d = f64::from(delta);
            for i in 0..spec.n {
                for j in 0..i {
                    let expect = d * t.u[i] * t.u[j] + t.v.get(i, j);
                    assert!((m.matrix().get(i, j) - expect).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn spike_noise_identity() {
        let spec = DesignSpec::intercept_only(12, 1.0, 1.0, -1, 1.0, 1.0).with_seed(3);
        let (design, y, t) = simulate(&spec).unwrap();
        let m = crate::model::build_residual_matrix(&design, &y, &t.mu0).unwrap();
        let noise = t.spike_noise();
        let d = f64::from(t.delta);
        for i in 0..12 {
            for j in 0..12 {
                let shift = if i == j { t.spike_shift() } else { 0.0 };
                let rhs = t.u[i] * t.u[j] + noise.get(i, j) - shift;
                assert!((d * m.matrix().get(i, j) - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn design1_outcome_mean() {
        let spec = standard_designs()[0].clone().with_seed(11);
        let (_, y, _) = simulate(&spec).unwrap();
        let vals = off_diag_values(y.matrix());
        let (m, var) = mean_var(&vals);
        // dyads are dependent through shared nodes; a generous 5 SE band on the
        // node-level scale keeps this a sanity check
        let se = (var / spec.n as f64).sqrt();
        assert!((m - 2.0).abs() < 5.0 * se, "{m}");
    }

    #[test]
    fn design4_disjoint_edge_variance() {
        let spec = standard_designs()[3].clone().with_n(2000).with_seed(8);
        let (design, y, t) = simulate(&spec).unwrap();
        let eps: Vec<f64> = (0..spec.n / 2)
            .map(|k| {
                let (i, j) = (2 * k, 2 * k + 1);
                let fit: f64 = design.dyad(i, j).iter().zip(t.mu0.iter()).map(|(x, b)| x * b).sum();
                y.get(i, j) - fit
            })
            .collect();
        let (_, var) = mean_var(&eps);
        assert!((var - 4.0).abs() < 0.8, "{var}");
        assert_eq!(spec.mean_u(), 1.0);
        assert_eq!(spec.mean_u_sq(), 2.0);
    }

    #[test]
    fn moment_sanity() {
        let spec = standard_designs()[0].clone().with_n(200).with_seed(21);
        let (design, y, t) = simulate(&spec).unwrap();
        let (ma, _) = mean_var(&t.a);
        assert!(ma.abs() < 5.0 / (200f64).sqrt());
        let (_, vv) = mean_var(&off_diag_values(&t.v));
        assert!((vv - 1.0).abs() < 0.1);
        assert!(y.matrix().diagonal_is_zero());
        assert!(design.regressors().iter().all(SymMatrix::diagonal_is_zero));
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let mut spec = standard_designs()[0].clone();
        spec.delta = 0;
        assert!(matches!(simulate(&spec), Err(DyadError::Config(_))));
        let mut spec = standard_designs()[0].clone();
        spec.beta = vec![1.0];
        assert!(matches!(simulate(&spec), Err(DyadError::Config(_))));
        let mut spec = standard_designs()[0].clone();
        spec.gamma = -1.0;
        assert!(matches!(simulate(&spec), Err(DyadError::Config(_))));
        let bad = r#"{"name":"cauchy","location":0,"scale":1}"#;
        assert!(serde_json::from_str::<Distribution>(bad).is_err());
    }

    #[test]
    fn w_noise_and_custom_terms() {
        let mut spec = standard_designs()[0].clone().with_seed(4);
        spec.regressor_form = RegressorForm::Custom(vec![Term::Intercept, Term::Sum, Term::AbsDiff]);
        spec.beta = vec![1.0, 0.5, -0.5];
        spec.w_dist = Some(Distribution::Normal { mean: 0.0, sd: 0.1 });
        let (design, y, _) = simulate(&spec).unwrap();
        assert_eq!(design.l(), 3);
        assert_eq!(design.intercept_column(), Some(0));
        assert!(y.matrix().diagonal_is_zero());
    }

    #[test]
    fn child_seeds_differ_across_coordinates() {
        let base = child_seed(1, 0, 0, 0);
        assert_ne!(base, child_seed(1, 0, 0, 1));
        assert_ne!(base, child_seed(1, 0, 1, 0));
        assert_ne!(base, child_seed(1, 1, 0, 0));
        assert_ne!(base, child_seed(2, 0, 0, 0));
        assert_eq!(base, child_seed(1, 0, 0, 0));
    }
}
