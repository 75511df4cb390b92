use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use optinput::analysis::{self, AnalyticVerdict};
use optinput::design_map::{self, SignPattern};
use optinput::estimator::{self, DataRecord, Prior, SearchConfig};
use optinput::experiment::{self, McConfig};
use optinput::kernels::{KernelFamily, KernelSpec};
use optinput::matrix::Matrix;
use optinput::solver::{self, Criterion, DesignProblem, SolverOptions};

const EXIT_INPUT: u8 = 1;
const EXIT_UNCONVERGED: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "optinput", version, about = "Optimal input design for regularized FIR identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a D-, A- or E-optimal input.
    Design(DesignArgs),
    /// Estimate noise variance, kernel hyperparameters and the regularized FIR model.
    Estimate(EstimateArgs),
    /// Run the analytic optimality checks.
    Verify(VerifyArgs),
    /// Run a Monte Carlo experiment from a JSON config.
    Mc(McArgs),
    /// Dump the trigonometric basis W, the table S and the polytope vertices.
    Basis(BasisArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Signs {
    Default,
    Random,
}

#[derive(clap::Args)]
struct DesignArgs {
    /// Kernel specification (JSON).
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    sigma2: f64,
    /// FIR order; must match the kernel.
    #[arg(long)]
    n: usize,
    /// Number of samples.
    #[arg(long = "N")]
    n_samples: usize,
    #[arg(long)]
    energy: f64,
    #[arg(long)]
    criterion: Criterion,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "default")]
    signs: Signs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// Data record (JSON with `u`, `y` and optional `sigma2`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "TC")]
    family: KernelFamily,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Comma-separated claim names; all claims when omitted.
    #[arg(long, value_delimiter = ',')]
    claims: Vec<String>,
}

#[derive(clap::Args)]
struct McArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BasisArgs {
    #[arg(long = "N")]
    n_samples: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    energy: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INPUT);
    }
    let result = match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Basis(a) => cmd_basis(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => match e.downcast_ref::<Exit>() {
            Some(Exit(code)) => ExitCode::from(*code),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_INPUT)
            }
        },
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("OPTINPUT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("OPTINPUT_THREADS must be a positive integer, got `{raw}`"))?;
    if threads == 0 {
        bail!("OPTINPUT_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_design(a: DesignArgs) -> Result<u8> {
    let kernel: KernelSpec = read_json(&a.kernel)?;
    if kernel.n() != a.n {
        bail!("kernel has order {} but --n is {}", kernel.n(), a.n);
    }
    let problem = DesignProblem::new(kernel, a.sigma2, a.n_samples, a.energy, a.criterion)?;
    let defaults = SolverOptions::default();
    let opts = SolverOptions {
        tol: a.tol.unwrap_or(defaults.tol),
        max_iter: a.max_iter.unwrap_or(defaults.max_iter),
        e_max_iter: a.max_iter.unwrap_or(defaults.e_max_iter),
        signs: match a.signs {
            Signs::Default => SignPattern::AllPositive,
            Signs::Random => SignPattern::Random { seed: a.seed },
        },
        ..defaults
    };
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        bail!("--tol and --max-iter must be positive");
    }
    let sol = solver::solve_with(&problem, &opts)?;
    write_json(&a.out, &sol)?;
    if sol.certificate.converged {
        Ok(0)
    } else {
        eprintln!(
            "warning: iteration budget exhausted after {} iterations (gap {:e}); best iterate written",
            sol.certificate.iterations, sol.certificate.gap
        );
        Ok(EXIT_UNCONVERGED)
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    sigma2_hat: f64,
    kernel_spec: KernelSpec,
    theta_rls: Vec<f64>,
}

fn cmd_estimate(a: EstimateArgs) -> Result<u8> {
    let rec: DataRecord = read_json(&a.data)?;
    let u = rec.input.values();
    if a.n == 0 || a.n > rec.len() {
        bail!("need 1 ≤ n ≤ N, got n = {}, N = {}", a.n, rec.len());
    }
    let sigma2_hat = match rec.noise_variance {
        Some(s2) => s2,
        None => {
            let m = estimator::default_noise_order(rec.len(), a.n);
            estimator::estimate_noise_variance(&rec.output, u, m)?
        }
    };
    if !(sigma2_hat > 0.0) {
        bail!("estimated noise variance is zero; supply `sigma2` in the data file");
    }
    let kernel_spec =
        estimator::fit_hyperparameters(&rec.output, u, a.n, sigma2_hat, a.family, &SearchConfig::default())?;
    let prior = Prior::from_spec(&kernel_spec)?;
    let est = estimator::rls_estimate(&rec, &prior, sigma2_hat)?;
    write_json(
        &a.out,
        &EstimateOutput {
            sigma2_hat,
            kernel_spec,
            theta_rls: est.theta,
        },
    )?;
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8> {
    let names: Vec<String> = if a.claims.is_empty() {
        analysis::CLAIMS.iter().map(|s| s.to_string()).collect()
    } else {
        a.claims.iter().map(|s| s.trim().to_string()).collect()
    };
    if let Some(bad) = names.iter().find(|n| !analysis::CLAIMS.contains(&n.as_str())) {
        bail!("unknown claim `{bad}`; known claims: {}", analysis::CLAIMS.join(", "));
    }
    let mut all_hold = true;
    for name in &names {
        let verdict: AnalyticVerdict = analysis::run_claim(name)?;
        all_hold &= verdict.holds;
        println!("{}", serde_json::to_string(&verdict)?);
    }
    Ok(if all_hold { 0 } else { EXIT_VERIFY })
}

fn cmd_mc(a: McArgs) -> Result<u8> {
    let cfg: McConfig = read_json(&a.config)?;
    let dir = a
        .out_dir
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let outcome = experiment::run_monte_carlo(&cfg)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    experiment::write_outputs(&dir, &outcome)?;
    for f in &outcome.summary.failures {
        eprintln!("warning: system {} failed: {}", f.system_id, f.error);
    }
    Ok(0)
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct BasisOutput {
    N: usize,
    n: usize,
    energy: f64,
    W: Vec<Vec<f64>>,
    S: Vec<Vec<f64>>,
    vertices: Vec<Vec<f64>>,
    orthogonality_error: f64,
    rank_S: usize,
}

fn cmd_basis(a: BasisArgs) -> Result<u8> {
    if a.n == 0 || a.n_samples < a.n {
        bail!("need N ≥ n ≥ 1, got N = {}, n = {}", a.n_samples, a.n);
    }
    if !(a.energy > 0.0) {
        bail!("energy must be positive");
    }
    let w = design_map::build_w(a.n_samples);
    let s = design_map::build_s(a.n_samples, a.n)?;
    let wtw = w.transpose().matmul(&w)?;
    let out = BasisOutput {
        N: a.n_samples,
        n: a.n,
        energy: a.energy,
        orthogonality_error: wtw.max_abs_diff(&Matrix::identity(a.n_samples)),
        rank_S: design_map::s_rank(a.n_samples, a.n),
        W: w.to_rows(),
        S: s.to_rows(),
        vertices: design_map::vertices(a.n_samples, a.n, a.energy)?
            .into_iter()
            .map(|v| v.into_values())
            .collect(),
    };
    write_json(&a.out, &out)?;
    Ok(0)
}
