use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mgcurl::experiment::{
    manufactured_convergence, parse_key_values, parse_scalar, run_checks, run_table_with, ExperimentConfig,
    DEFAULT_SEED,
};
use mgcurl::smoother::SmootherKind;
use mgcurl::{Error, Parallelism};

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Multigrid contraction experiments for curl(α curl u) + u = f.
#[derive(Parser)]
#[command(name = "mgcurl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate contraction numbers over α × levels × smoothing steps.
    Table(TableArgs),
    /// Manufactured-solution L² errors on levels 1..=N.
    Converge(ConvergeArgs),
    /// Galerkin, damping and midpoint-curl consistency checks.
    Check {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value = "edge")]
    smoother: String,
    /// Comma-separated coefficients.
    #[arg(long, default_value = "0.01,0.1,1,10,100")]
    alpha: String,
    /// Inclusive range `a..b` or a list.
    #[arg(long, default_value = "1..4")]
    levels: String,
    #[arg(long, default_value = "1..5")]
    steps: String,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative change that stops the power iteration.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Single-threaded, bitwise-reproducible output (no timings).
    #[arg(long)]
    deterministic: bool,
    /// Flat `key = value` file; its entries override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print each row to stderr as it completes.
    #[arg(long)]
    progress: bool,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Gauss points per axis for the load and the error.
    #[arg(long, default_value_t = mgcurl::assembly::DEFAULT_LOAD_QUADRATURE)]
    quadrature: usize,
    /// Flat `key = value` file (`alpha`, `levels`, `quadrature`).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Table(args) => table(args),
        Command::Converge(args) => converge(args),
        Command::Check { seed } => check(seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
                Error::NotPositiveDefinite { .. } => EXIT_FAILED_CHECK,
                _ => EXIT_VALIDATION,
            })
        }
    }
}

fn read_config(path: &PathBuf) -> mgcurl::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn table(args: TableArgs) -> mgcurl::Result<u8> {
    let smoother: SmootherKind = args.smoother.parse()?;
    let mut config = ExperimentConfig::new(smoother);
    config.apply_overrides(&format!(
        "alpha = {}\nlevels = {}\nsteps = {}\nformat = {}",
        args.alpha, args.levels, args.steps, args.format
    ))?;
    config.eta = args.eta;
    config.seed = args.seed.unwrap_or(config.seed);
    config.tol = args.tol.unwrap_or(config.tol);
    config.cap = args.cap.unwrap_or(config.cap);
    if args.deterministic {
        config.parallelism = Parallelism::Deterministic;
    }
    if let Some(path) = &args.config {
        config.apply_overrides(&read_config(path)?)?;
    }
    config.validate()?;

    let report = run_table_with(&config, |row| {
        if args.progress {
            eprintln!(
                "{} alpha={} k={} m={} rho={:.6} iters={}{}",
                row.smoother,
                row.alpha,
                row.k,
                row.m,
                row.rho,
                row.iterations,
                if row.converged { "" } else { " (not converged)" }
            );
        }
    })?;
    print!("{}", report.render(config.format));
    if report.all_converged() {
        Ok(0)
    } else {
        eprintln!("warning: power iteration hit the cap of {} on some rows", config.cap);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn converge(args: ConvergeArgs) -> mgcurl::Result<u8> {
    let (mut alpha, mut levels, mut quadrature) = (args.alpha, args.levels, args.quadrature);
    if let Some(path) = &args.config {
        for (line, key, value) in parse_key_values(&read_config(path)?)? {
            match key.as_str() {
                "alpha" => alpha = parse_scalar(&value)?,
                "levels" => levels = parse_scalar(&value)?,
                "quadrature" => quadrature = parse_scalar(&value)?,
                other => return Err(Error::Config(format!("line {line}: unknown key `{other}`"))),
            }
        }
    }
    let rows = manufactured_convergence(alpha, levels, quadrature)?;
    println!("level,dofs,l2_error,ratio,pcg_iters");
    let mut prev: Option<f64> = None;
    for r in &rows {
        let ratio = prev.map_or_else(|| "NA".to_string(), |p| format!("{:.4}", p / r.l2_error));
        println!("{},{},{:.6e},{},{}", r.level, r.dofs, r.l2_error, ratio, r.pcg_iterations);
        prev = Some(r.l2_error);
    }
    Ok(0)
}

fn check(seed: u64) -> mgcurl::Result<u8> {
    let outcomes = run_checks(seed)?;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    Ok(if outcomes.iter().all(|o| o.passed) { 0 } else { EXIT_FAILED_CHECK })
}
