use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyadreg::dgp::{simulate, standard_designs, DesignSpec};
use dyadreg::estimators::{first_stage, fixed_point, ols_dyadic, single_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use dyadreg::harness::{
    emit_fn_profile, load_edge_list, run_monte_carlo, write_edge_list, write_mc_outputs, EstimatorKind, RunConfig,
};
use dyadreg::inference::{estimate_with_inference, InferenceReport};
use dyadreg::estimators::Method;
use dyadreg::model::build_residual_matrix;
use dyadreg::spectral::{eigenvalues_sym, export_spectrum};
use dyadreg::{DyadError, DyadicDesign, ErrorClass, OutcomeMatrix, ParamVector, Result};

#[derive(Parser)]
#[command(name = "dyadreg", version, about = "Dyadic regression with interactive node effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one data set from a design and write it as an edge list
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        /// Output edge-list CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate from an edge list; prints a JSON report
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "two_step")]
        estimator: String,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Directory for report.json and summary.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep from a run configuration
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues of the residual matrix M(μ)
    Spectrum {
        #[command(flatten)]
        source: SourceArgs,
        /// Coefficients, comma separated; defaults to the true μ0 for a simulated
        /// design and to the first-stage estimate for an edge list
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mu: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// f_N and the corrected objective on a grid (one-regressor models)
    Fnplot {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 1e-2)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DesignArgs {
    /// Design JSON file
    #[arg(long, conflicts_with = "design")]
    config: Option<PathBuf>,
    /// Built-in design: design1..design4 or intercept_only
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the node count
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct SourceArgs {
    /// Edge-list CSV (alternative to a design)
    #[arg(long = "in", conflicts_with_all = ["config", "design"])]
    input: Option<PathBuf>,
    #[command(flatten)]
    design: DesignArgs,
}

impl DesignArgs {
    fn resolve(&self) -> Result<DesignSpec> {
        let mut spec = match (&self.config, &self.design) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| DyadError::io(path, e))?;
                serde_json::from_str::<DesignSpec>(&text)
                    .map_err(|e| DyadError::Config(format!("invalid design file {}: {e}", path.display())))?
            }
            (None, Some(name)) => builtin_design(name)?,
            (None, None) => return Err(DyadError::Config("either --config or --design is required".into())),
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(n) = self.n {
            spec.n = n;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn builtin_design(name: &str) -> Result<DesignSpec> {
    if name == "intercept_only" {
        return Ok(DesignSpec::intercept_only(100, 1.0, 0.0, 1, 1.0, 1.0));
    }
    standard_designs()
        .into_iter()
        .find(|d| d.name == name)
        .ok_or_else(|| DyadError::Config(format!("unknown design '{name}'")))
}

/// Data plus, for simulated data, the true μ0.
fn load_source(source: &SourceArgs) -> Result<(DyadicDesign, OutcomeMatrix, Option<ParamVector>)> {
    match &source.input {
        Some(path) => {
            let ds = load_edge_list(path)?;
            Ok((ds.design, ds.y, None))
        }
        None => {
            let spec = source.design.resolve()?;
            let (design, y, truth) = simulate(&spec)?;
            Ok((design, y, Some(truth.mu0)))
        }
    }
}

fn estimate(input: &Path, estimator: &str, level: f64, out: Option<&Path>) -> Result<()> {
    let kind = EstimatorKind::parse(estimator)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(DyadError::Config(format!("--level must lie in (0, 1), got {level}")));
    }
    let ds = load_edge_list(input)?;
    let (design, y) = (&ds.design, &ds.y);
    let (report, inference): (_, Option<InferenceReport>) = match kind {
        EstimatorKind::TwoStep | EstimatorKind::FixedPoint => {
            let method = if kind == EstimatorKind::TwoStep {
                Method::TwoStep
            } else {
                Method::FixedPoint
            };
            let p = estimate_with_inference(design, y, method, level)?;
            (p.estimate, Some(p.inference))
        }
        EstimatorKind::Ols => (ols_dyadic(design, y)?, None),
        EstimatorKind::OlsAdjusted => {
            let fs = first_stage(design, y)?;
            let mut r = fs.ols.clone();
            r.mu_hat = fs.mu_tilde().clone();
            r.method = Method::OlsAdjusted;
            r.trajectory = vec![fs.ols.mu_hat.clone(), r.mu_hat.clone()];
            (r, None)
        }
        EstimatorKind::SingleIteration => {
            let fs = first_stage(design, y)?;
            (single_iteration(design, y, fs.mu_tilde())?, None)
        }
        EstimatorKind::OracleOls => {
            return Err(DyadError::Config("oracle_ols needs simulated effects; use it in `mc`".into()))
        }
    };
    if kind == EstimatorKind::FixedPoint && !report.converged {
        return Err(DyadError::Estimation(format!(
            "fixed point did not converge within {DEFAULT_MAX_ITER} iterations (tol {DEFAULT_TOL:e})"
        )));
    }
    let json = serde_json::json!({
        "estimator": kind.name(),
        "n": design.n(),
        "l": design.l(),
        "intercept_column": design.intercept_column(),
        "estimate": report,
        "inference": inference,
    });
    let text = serde_json::to_string_pretty(&json).expect("report serializes");
    println!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| DyadError::io(dir, e))?;
        let p = dir.join("report.json");
        std::fs::write(&p, format!("{text}\n")).map_err(|e| DyadError::io(&p, e))?;
        let p = dir.join("summary.csv");
        std::fs::write(&p, summary_rows(&report.mu_hat, inference.as_ref())).map_err(|e| DyadError::io(&p, e))?;
    }
    Ok(())
}

fn summary_rows(mu: &ParamVector, inf: Option<&InferenceReport>) -> String {
    let f = |v: f64| format!("{v:.16e}");
    let mut out = String::from("coefficient,estimate,debiased,std_error,ci_lower,ci_upper\n");
    for p in 0..mu.len() {
        let cells = match inf {
            Some(r) => [r.debiased[p], r.std_errors[p], r.ci_lower[p], r.ci_upper[p]].map(f).join(","),
            None => ",,,".to_string(),
        };
        out.push_str(&format!("{p},{},{cells}\n", f(mu[p])));
    }
    out
}

fn spectrum(source: &SourceArgs, mu: Option<&[f64]>, out: &Path) -> Result<()> {
    let (design, y, truth) = load_source(source)?;
    let mu = match (mu, truth) {
        (Some(m), _) => ParamVector::new(m.to_vec())?,
        (None, Some(t)) => t,
        (None, None) => first_stage(&design, &y)?.mu_tilde().clone(),
    };
    let m = build_residual_matrix(&design, &y, &mu)?;
    let eig = eigenvalues_sym(m.matrix())?;
    export_spectrum(&eig, out)?;
    let n = design.n() as f64;
    eprintln!(
        "n = {}, largest eigenvalue / sqrt(n) = {:.4}, smallest / sqrt(n) = {:.4}",
        design.n(),
        eig[0] / n.sqrt(),
        eig[eig.len() - 1] / n.sqrt()
    );
    Ok(())
}

fn fnplot(source: &SourceArgs, from: f64, to: f64, step: f64, out: &Path) -> Result<()> {
    if !(step > 0.0 && to >= from && from.is_finite() && to.is_finite()) {
        return Err(DyadError::Config(format!("invalid grid [{from}, {to}] with step {step}")));
    }
    let (design, y, _) = load_source(source)?;
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|k| from + k as f64 * step).collect();
    emit_fn_profile(&design, &y, &grid, out)?;
    // report the fixed point next to the tabulated profile
    if let Ok(fs) = first_stage(&design, &y) {
        if let Ok(r) = fixed_point(&design, &y, fs.mu_tilde(), DEFAULT_TOL, DEFAULT_MAX_ITER) {
            eprintln!("fixed point: {:.6}", r.mu_hat[0]);
        }
    }
    Ok(())
}

fn mc(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let result = run_monte_carlo(&cfg)?;
    let files = write_mc_outputs(&result, &dir)?;
    for c in &result.cells {
        eprintln!(
            "{:<16} n={:<5} {:<17} mean={:+.5} sd={:.5} failures={} runtime={:.3}s",
            c.design, c.n, c.estimator.name(), c.mean, c.sd, c.failures, c.mean_runtime
        );
    }
    eprintln!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { design, out } => {
            let spec = design.resolve()?;
            let (d, y, _) = simulate(&spec)?;
            write_edge_list(&d, &y, &out)
        }
        Command::Estimate {
            input,
            estimator,
            level,
            out,
        } => estimate(&input, &estimator, level, out.as_deref()),
        Command::Mc { config, seed, out } => mc(&config, seed, out.as_deref()),
        Command::Spectrum { source, mu, out } => spectrum(&source, mu.as_deref(), &out),
        Command::Fnplot {
            source,
            from,
            to,
            step,
            out,
        } => fnplot(&source, from, to, step, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Estimation => 2,
                ErrorClass::Io => 3,
            })
        }
    }
}
