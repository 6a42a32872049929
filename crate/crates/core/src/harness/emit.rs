use std::path::Path;

use super::monte_carlo::{McCell, McResult};
use crate::error::{DyadError, Result};
use crate::estimators::FnMap;
use crate::format::fmt_sig17;
use crate::model::{build_residual_matrix, objective_corrected, DyadicDesign, OutcomeMatrix, ParamVector};

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| DyadError::io(path, e))
}

pub fn emit_histogram_csv(estimates: &[f64], path: &Path) -> Result<()> {
    if estimates.is_empty() {
        return Err(DyadError::contract("histogram needs at least one estimate"));
    }
    let mut out = String::with_capacity(24 * (estimates.len() + 1));
    out.push_str("estimate\n");
    for v in estimates {
        out.push_str(&fmt_sig17(*v));
        out.push('\n');
    }
    write(path, out)
}

const SUMMARY_HEADER: &str = "design,n,estimator,target_index,truth,replications,failures,mean,sd,rmse,coverage\n";

fn opt(v: f64) -> String {
    if v.is_finite() {
        fmt_sig17(v)
    } else {
        String::new()
    }
}

/// One row per cell; undefined statistics (all replications failed, no interval) are empty.
pub fn emit_summary_csv(cells: &[&McCell], path: &Path) -> Result<()> {
    let mut out = String::from(SUMMARY_HEADER);
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.design,
            c.n,
            c.estimator.name(),
            c.target_index,
            fmt_sig17(c.truth),
            c.estimates.len(),
            c.failures,
            opt(c.mean),
            opt(c.sd),
            opt(c.rmse),
            c.coverage.map(fmt_sig17).unwrap_or_default(),
        ));
    }
    write(path, out)
}

/// `summary_{design}.csv` per design and `hist_{design}_n{n}_{estimator}.csv` per cell
/// with at least one success. Returns the written paths in order.
pub fn write_mc_outputs(result: &McResult, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| DyadError::io(dir, e))?;
    let mut designs: Vec<&str> = Vec::new();
    for c in &result.cells {
        if !designs.contains(&c.design.as_str()) {
            designs.push(&c.design);
        }
    }
    let mut written = Vec::new();
    for d in designs {
        let cells: Vec<&McCell> = result.cells.iter().filter(|c| c.design == d).collect();
        let p = dir.join(format!("summary_{d}.csv"));
        emit_summary_csv(&cells, &p)?;
        written.push(p);
        for c in cells {
            let ok = c.successes();
            if ok.is_empty() {
                continue;
            }
            let p = dir.join(format!("hist_{}_n{}_{}.csv", c.design, c.n, c.estimator.name()));
            emit_histogram_csv(&ok, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnProfileRow {
    pub mu: f64,
    pub f_n: f64,
    pub objective_corrected: f64,
}

/// `f_N` and the corrected objective on a grid, for one-regressor models.
pub fn fn_profile(design: &DyadicDesign, y: &OutcomeMatrix, mu_grid: &[f64]) -> Result<Vec<FnProfileRow>> {
    if design.l() != 1 {
        return Err(DyadError::contract(format!(
            "profile is defined for one regressor, design has {}",
            design.l()
        )));
    }
    let map = FnMap::new(design, y)?;
    mu_grid
        .iter()
        .map(|&mu| {
            let p = ParamVector::new(vec![mu])?;
            let ev = map.eval(&p)?;
            let m = build_residual_matrix(design, y, &p)?;
            Ok(FnProfileRow {
                mu,
                f_n: ev.next[0],
                objective_corrected: objective_corrected(&m, &ev.spectrum)?,
            })
        })
        .collect()
}

pub fn emit_fn_profile(design: &DyadicDesign, y: &OutcomeMatrix, mu_grid: &[f64], path: &Path) -> Result<()> {
    let rows = fn_profile(design, y, mu_grid)?;
    let mut out = String::from("mu,f_n,objective_corrected\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_sig17(r.mu),
            fmt_sig17(r.f_n),
            fmt_sig17(r.objective_corrected)
        ));
    }
    write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, standard_designs, DesignSpec};

    #[test]
    fn histogram_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let vals = [0.1, -1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE];
        emit_histogram_csv(&vals, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("estimate"));
        let back: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
        assert_eq!(back, vals);
    }

    #[test]
    fn empty_histogram_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_histogram_csv(&[], &dir.path().join("e.csv")),
            Err(DyadError::Contract(_))
        ));
    }

    #[test]
    fn io_error_names_path() {
        let err = emit_histogram_csv(&[1.0], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"), "{err}");
    }

    #[test]
    fn profile_rows_match_grid() {
        let spec = DesignSpec::intercept_only(40, 1.0, 0.0, 1, 1.0, 1.0).with_seed(2);
        let (design, y, _) = simulate(&spec).unwrap();
        let grid: Vec<f64> = (0..7).map(|k| 0.5 + 0.1 * k as f64).collect();
        let rows = fn_profile(&design, &y, &grid).unwrap();
        assert_eq!(rows.len(), grid.len());
        for r in &rows {
            assert!(r.objective_corrected >= 0.0 && r.f_n.is_finite());
        }
        let (d2, y2, _) = simulate(&standard_designs()[0].clone().with_n(20)).unwrap();
        assert!(fn_profile(&d2, &y2, &grid).is_err());
    }
}
