//! Two `f_N` iterations, each followed by the `Ĝ = (I − K̂)⁻¹` extrapolation
//! `μ̌ = Ĝμ̂ + (I − Ĝ)μ_prev`, which removes the first-stage contribution.

use super::fn_map::FnMap;
use super::k_hat::{k_hat, KEstimate};
use super::{EstimateReport, Method};
use crate::error::Result;
use crate::linalg::{inf_norm, mat_vec};
use crate::model::{check_mu, DyadicDesign, OutcomeMatrix, ParamVector};

fn extrapolate(k: &KEstimate, hat: &ParamVector, prev: &ParamVector) -> Result<ParamVector> {
    let diff: Vec<f64> = hat.iter().zip(prev.iter()).map(|(a, b)| a - b).collect();
    let g = k.g_mat();
    let shift = mat_vec(g.as_ref(), &diff);
    ParamVector::new(prev.iter().zip(&shift).map(|(p, s)| p + s).collect())
}

pub fn two_step(design: &DyadicDesign, y: &OutcomeMatrix, mu_tilde: &ParamVector) -> Result<EstimateReport> {
    let map = FnMap::new(design, y)?;
    check_mu(design, mu_tilde)?;
    let first = map.eval(mu_tilde)?;
    let k = k_hat(design, &first.spectrum.nu)?;
    run(&map, mu_tilde, first.next, k)
}

/// Same steps with a caller-supplied `K̂`.
pub fn two_step_with_k(
    design: &DyadicDesign,
    y: &OutcomeMatrix,
    mu_tilde: &ParamVector,
    k: KEstimate,
) -> Result<EstimateReport> {
    let map = FnMap::new(design, y)?;
    check_mu(design, mu_tilde)?;
    let mu1_hat = map.eval(mu_tilde)?.next;
    run(&map, mu_tilde, mu1_hat, k)
}

fn run(map: &FnMap<'_>, mu_tilde: &ParamVector, mu1_hat: ParamVector, k: KEstimate) -> Result<EstimateReport> {
    let mu1_check = extrapolate(&k, &mu1_hat, mu_tilde)?;
    let mu2_hat = map.eval(&mu1_check)?.next;
    let mu2_check = extrapolate(&k, &mu2_hat, &mu1_check)?;
    let step: Vec<f64> = mu2_check.iter().zip(mu1_check.iter()).map(|(a, b)| a - b).collect();
    let lambda_lead = map.spectrum_at(&mu2_check)?.lambda_lead();
    Ok(EstimateReport {
        mu_hat: mu2_check.clone(),
        method: Method::TwoStep,
        iterations: 2,
        trajectory: vec![mu_tilde.clone(), mu1_hat, mu1_check, mu2_hat, mu2_check],
        converged: true,
        final_step_norm: inf_norm(&step),
        lambda_lead,
        k_estimate: Some(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, standard_designs};
    use crate::estimators::{f_n_iterate, first_stage};

    #[test]
    fn zero_k_is_two_plain_iterations() {
        let spec = standard_designs()[2].clone().with_seed(8);
        let (design, y, _) = simulate(&spec).unwrap();
        let fs = first_stage(&design, &y).unwrap();
        let r = two_step_with_k(&design, &y, fs.mu_tilde(), KEstimate::zero(2)).unwrap();
        let once = f_n_iterate(&design, &y, fs.mu_tilde()).unwrap();
        let twice = f_n_iterate(&design, &y, &once).unwrap();
        assert_eq!(r.mu_hat, twice);
        assert_eq!(r.trajectory.len(), 5);
        assert_eq!(r.trajectory[1], once);
        assert_eq!(r.trajectory[2], once);
    }

    #[test]
    fn trajectory_follows_the_five_steps() {
        let spec = standard_designs()[3].clone().with_seed(9);
        let (design, y, _) = simulate(&spec).unwrap();
        let fs = first_stage(&design, &y).unwrap();
        let r = two_step(&design, &y, fs.mu_tilde()).unwrap();
        let k = r.k_estimate.clone().unwrap();
        let g = k.g_mat();
        let t = &r.trajectory;
        assert_eq!(&t[0], fs.mu_tilde());
        for (hat, prev, check) in [(1, 0, 2), (3, 2, 4)] {
            for a in 0..2 {
                let mut expect = 0.0;
                for b in 0..2 {
                    let id = if a == b { 1.0 } else { 0.0 };
                    expect += g[(a, b)] * t[hat][b] + (id - g[(a, b)]) * t[prev][b];
                }
                assert!((t[check][a] - expect).abs() < 1e-10);
            }
        }
        assert_eq!(t[3], f_n_iterate(&design, &y, &t[2]).unwrap());
    }
}
