use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, RunConfig};
use crate::dgp::{child_seed, simulate, DesignSpec};
use crate::error::{DyadError, Result};
use crate::estimators::{first_stage, fixed_point, single_iteration, two_step, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::inference::{cross_moments, debias_and_ci, recover_effects, sigma_eps2, InferenceInputs};
use crate::estimators::{ols_dyadic, FnMap};

/// Worker count from `DYAD_THREADS` (unset or 0 means one per core).
pub fn thread_count() -> usize {
    std::env::var("DYAD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f(0..count)` on a pool sized by [`thread_count`]; results keep index order.
pub fn par_replications<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .expect("thread pool");
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}

/// Aggregates for one (design, sample size, estimator) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub design: String,
    pub n: usize,
    pub estimator: EstimatorKind,
    /// Index of the reported coefficient (the first non-intercept regressor).
    pub target_index: usize,
    pub truth: f64,
    /// One slot per replication; `None` marks a failed replication.
    pub estimates: Vec<Option<f64>>,
    pub failures: usize,
    pub mean: f64,
    pub sd: f64,
    pub rmse: f64,
    /// Share of successful replications whose interval covers the truth.
    pub coverage: Option<f64>,
    /// Wall-clock seconds per replication; never written to CSV so outputs stay byte-stable.
    #[serde(skip)]
    pub mean_runtime: f64,
}

impl McCell {
    pub fn successes(&self) -> Vec<f64> {
        self.estimates.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub cells: Vec<McCell>,
    pub replications: usize,
    pub seed: u64,
}

impl McResult {
    pub fn cell(&self, design: &str, n: usize, estimator: EstimatorKind) -> Option<&McCell> {
        self.cells
            .iter()
            .find(|c| c.design == design && c.n == n && c.estimator == estimator)
    }
}

#[derive(Debug, Clone)]
struct Outcome {
    estimate: Option<f64>,
    covered: Option<bool>,
    runtime: f64,
}

/// One replication: every requested estimator on the same draws.
fn replicate(spec: &DesignSpec, estimators: &[EstimatorKind], level: f64) -> Vec<Outcome> {
    let failed = |runtime| Outcome {
        estimate: None,
        covered: None,
        runtime,
    };
    let (design, y, truth) = match simulate(spec) {
        Ok(v) => v,
        Err(_) => return estimators.iter().map(|_| failed(0.0)).collect(),
    };
    let target = spec.slope_index();
    let t_start = Instant::now();
    let fs = first_stage(&design, &y);
    let fs_time = t_start.elapsed().as_secs_f64();

    // inference ingredients shared by the N-rate estimators
    let inputs = |mu_tilde: &crate::model::ParamVector| -> Result<InferenceInputs> {
        let map = FnMap::new(&design, &y)?;
        let spec_tilde = map.spectrum_at(mu_tilde)?;
        let k = crate::estimators::k_hat(&design, &spec_tilde.nu)?;
        Ok(InferenceInputs {
            effects: recover_effects(&spec_tilde),
            k,
            cross_moments: cross_moments(&design),
            sigma_eps2: sigma_eps2(&design, &y)?,
        })
    };
    let mut shared: Option<Result<InferenceInputs>> = None;

    estimators
        .iter()
        .map(|&kind| {
            let t0 = Instant::now();
            let res: Result<(f64, Option<bool>)> = (|| match kind {
                EstimatorKind::Ols => Ok((fs.as_ref().map_err(clone_err)?.ols.mu_hat[target], None)),
                EstimatorKind::OlsAdjusted => Ok((fs.as_ref().map_err(clone_err)?.mu_tilde()[target], None)),
                EstimatorKind::OracleOls => {
                    let yo = truth.oracle_outcome(&design);
                    Ok((ols_dyadic(&design, &yo)?.mu_hat[target], None))
                }
                EstimatorKind::SingleIteration => {
                    let mu = fs.as_ref().map_err(clone_err)?.mu_tilde();
                    Ok((single_iteration(&design, &y, mu)?.mu_hat[target], None))
                }
                EstimatorKind::TwoStep | EstimatorKind::FixedPoint => {
                    let mu = fs.as_ref().map_err(clone_err)?.mu_tilde();
                    let est = if kind == EstimatorKind::TwoStep {
                        two_step(&design, &y, mu)?
                    } else {
                        let r = fixed_point(&design, &y, mu, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                        if !r.converged {
                            return Err(DyadError::Estimation("fixed point did not converge".into()));
                        }
                        r
                    };
                    let value = est.mu_hat[target];
                    let inp = shared.get_or_insert_with(|| inputs(mu));
                    let covered = match inp {
                        Ok(inp) => debias_and_ci(&est, inp, level).ok().map(|r| {
                            let t = truth.mu0[target];
                            r.ci_lower[target] <= t && t <= r.ci_upper[target]
                        }),
                        Err(_) => None,
                    };
                    Ok((value, covered))
                }
            })();
            let mut runtime = t0.elapsed().as_secs_f64();
            if kind != EstimatorKind::OracleOls {
                runtime += fs_time;
            }
            match res {
                Ok((v, covered)) => Outcome {
                    estimate: Some(v),
                    covered,
                    runtime,
                },
                Err(_) => failed(runtime),
            }
        })
        .collect()
}

fn clone_err(e: &DyadError) -> DyadError {
    DyadError::Estimation(e.to_string())
}

fn aggregate(
    spec: &DesignSpec,
    n: usize,
    kind: EstimatorKind,
    outcomes: Vec<&Outcome>,
) -> McCell {
    let target = spec.slope_index();
    let truth = if kind == EstimatorKind::OracleOls {
        spec.beta[target]
    } else {
        spec.mu0()[target]
    };
    let estimates: Vec<Option<f64>> = outcomes.iter().map(|o| o.estimate).collect();
    let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
    let failures = estimates.len() - ok.len();
    let m = ok.len() as f64;
    let (mean, sd, rmse) = if ok.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean = ok.iter().sum::<f64>() / m;
        let var = if ok.len() > 1 {
            ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let mse = ok.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m;
        (mean, var.sqrt(), mse.sqrt())
    };
    let coverage = if kind.has_inference() {
        let flags: Vec<bool> = outcomes.iter().filter_map(|o| o.covered).collect();
        (!flags.is_empty()).then(|| flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64)
    } else {
        None
    };
    let mean_runtime = outcomes.iter().map(|o| o.runtime).sum::<f64>() / outcomes.len().max(1) as f64;
    McCell {
        design: spec.name.clone(),
        n,
        estimator: kind,
        target_index: target,
        truth,
        estimates,
        failures,
        mean,
        sd,
        rmse,
        coverage,
        mean_runtime,
    }
}

/// Every design × sample size × replication, each on its own derived stream.
/// Failed replications are excluded from the aggregates and counted.
pub fn run_monte_carlo(config: &RunConfig) -> Result<McResult> {
    config.validate()?;
    struct Job {
        d: usize,
        ni: usize,
        spec: DesignSpec,
    }
    let mut jobs = Vec::new();
    for (d, design) in config.designs.iter().enumerate() {
        for (ni, &n) in config.sizes_for(design).iter().enumerate() {
            for rep in 0..config.replications {
                let spec = design
                    .clone()
                    .with_n(n)
                    .with_seed(child_seed(config.seed, d as u64, ni as u64, rep as u64));
                jobs.push(Job { d, ni, spec });
            }
        }
    }
    let outcomes = par_replications(jobs.len(), |k| replicate(&jobs[k].spec, &config.estimators, config.ci_level));

    let mut cells = Vec::new();
    let mut start = 0;
    for (d, design) in config.designs.iter().enumerate() {
        for (ni, &n) in config.sizes_for(design).iter().enumerate() {
            let block: Vec<usize> = (start..start + config.replications).collect();
            debug_assert!(block.iter().all(|&k| jobs[k].d == d && jobs[k].ni == ni));
            for (e, &kind) in config.estimators.iter().enumerate() {
                let per_rep: Vec<&Outcome> = block.iter().map(|&k| &outcomes[k][e]).collect();
                cells.push(aggregate(design, n, kind, per_rep));
            }
            start += config.replications;
        }
    }
    Ok(McResult {
        cells,
        replications: config.replications,
        seed: config.seed,
    })
}
