//! Contraction-number sweeps, manufactured-solution studies and the
//! consistency checks behind the `mgcurl` binary.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble_load, assemble_operator, l2_error};
use crate::error::{Error, Result};
use crate::mesh::{build_hierarchy, Edge};
use crate::multigrid::MultigridHierarchy;
use crate::smoother::{build_blocks, lemma_coarse_check, max_eigenvalue_estimate, SmootherConfig, SmootherKind};
use crate::transfer::{build_prolongation, galerkin_defect};
use crate::Parallelism;

pub const DEFAULT_POWER_TOL: f64 = 1e-6;
pub const DEFAULT_POWER_CAP: usize = 500;
pub const DEFAULT_SEED: u64 = 20240917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "md" | "markdown" => Ok(OutputFormat::Markdown),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// One contraction-number sweep over `alphas × levels × steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub smoother: SmootherKind,
    pub alphas: Vec<f64>,
    pub levels: Vec<usize>,
    pub steps: Vec<usize>,
    /// Damping factor; the smoother's default when `None`.
    pub eta: Option<f64>,
    pub seed: u64,
    pub tol: f64,
    pub cap: usize,
    pub format: OutputFormat,
    pub parallelism: Parallelism,
}

impl ExperimentConfig {
    /// The full five-coefficient, four-level, five-step sweep.
    pub fn new(smoother: SmootherKind) -> Self {
        Self {
            smoother,
            alphas: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            levels: vec![1, 2, 3, 4],
            steps: vec![1, 2, 3, 4, 5],
            eta: None,
            seed: DEFAULT_SEED,
            tol: DEFAULT_POWER_TOL,
            cap: DEFAULT_POWER_CAP,
            format: OutputFormat::Csv,
            parallelism: Parallelism::Parallel,
        }
    }

    pub fn smoother_config(&self) -> SmootherConfig {
        let base = SmootherConfig::new(self.smoother);
        match self.eta {
            Some(eta) => base.with_eta(eta),
            None => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("alpha list is empty".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("level list is empty".into()));
        }
        if self.steps.is_empty() {
            return Err(Error::Config("smoothing-step list is empty".into()));
        }
        if let Some(&a) = self.alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::NonPositiveCoefficient(a));
        }
        if self.levels.contains(&0) {
            return Err(Error::Config("contraction numbers need levels >= 1".into()));
        }
        if self.steps.contains(&0) {
            return Err(Error::Config("smoothing steps must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.cap == 0 {
            return Err(Error::Config("iteration cap must be at least 1".into()));
        }
        self.smoother_config().validate()
    }

    /// Applies `key = value` lines; `#` starts a comment. Keys: `smoother`,
    /// `alpha`, `levels`, `steps`, `eta`, `seed`, `tol`, `cap`, `format`,
    /// `deterministic`.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (lineno, key, value) in parse_key_values(text)? {
            self.set(&key, &value)
                .map_err(|e| Error::Config(format!("line {lineno}: {e}")))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "smoother" => self.smoother = value.parse()?,
            "alpha" | "alphas" => self.alphas = parse_list(value)?,
            "levels" => self.levels = parse_range(value)?,
            "steps" => self.steps = parse_range(value)?,
            "eta" => self.eta = Some(parse_scalar(value)?),
            "seed" => self.seed = parse_scalar(value)?,
            "tol" => self.tol = parse_scalar(value)?,
            "cap" => self.cap = parse_scalar(value)?,
            "format" => self.format = value.parse()?,
            "deterministic" => {
                self.parallelism = if parse_scalar::<bool>(value)? {
                    Parallelism::Deterministic
                } else {
                    Parallelism::Parallel
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

/// `(line number, key, value)` for every `key = value` line of a flat config
/// file. Blank lines and text after `#` are ignored.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        out.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_scalar<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{s}`")))
}

/// Comma-separated list, e.g. `0.01,0.1,1`.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_scalar).collect()
}

/// Inclusive range `a..b`, or a comma-separated list.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    match s.split_once("..") {
        Some((a, b)) => {
            let a: usize = parse_scalar(a)?;
            let b: usize = parse_scalar(b.trim_start_matches('='))?;
            if a > b {
                return Err(Error::Config(format!("empty range `{s}`")));
            }
            Ok((a..=b).collect())
        }
        None => parse_list(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionEstimate {
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of the error propagation operator `E_k` (the a-norm of
/// `E_k`, which is a-symmetric positive semidefinite) by power iteration in
/// the a-inner product from a seeded uniform start on `[-1, 1)`.
///
/// Stops when the Rayleigh quotient changes by at most `tol` relative, or
/// after `cap` steps with `converged = false`.
pub fn estimate_contraction(
    mg: &MultigridHierarchy,
    k: usize,
    m: usize,
    seed: u64,
    tol: f64,
    cap: usize,
) -> Result<ContractionEstimate> {
    if k == 0 {
        return Err(Error::CoarsestLevel(0));
    }
    let op = mg.operator(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = op.a_norm(&w)?;
    w.iter_mut().for_each(|x| *x /= norm);

    let mut rho = f64::NAN;
    for it in 1..=cap {
        let e = mg.error_propagation_apply(k, &w, m)?;
        let next = op.a_inner(&e, &w)?;
        let norm = op.a_norm(&e)?;
        let settled = (next - rho).abs() <= tol * next.abs();
        rho = next;
        if norm == 0.0 {
            return Ok(ContractionEstimate {
                rho: 0.0,
                iterations: it,
                converged: true,
            });
        }
        if settled {
            return Ok(ContractionEstimate {
                rho,
                iterations: it,
                converged: true,
            });
        }
        w = e.into_iter().map(|x| x / norm).collect();
    }
    Ok(ContractionEstimate {
        rho,
        iterations: cap,
        converged: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub smoother: SmootherKind,
    pub alpha: f64,
    pub k: usize,
    pub m: usize,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Wall time; `None` in deterministic mode.
    pub seconds: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContractionReport {
    pub rows: Vec<ContractionRow>,
}

pub const CSV_HEADER: &str = "smoother,alpha,k,m,rho,iters,seconds,seed";

impl ContractionReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    pub fn get(&self, alpha: f64, k: usize, m: usize) -> Option<&ContractionRow> {
        self.rows.iter().find(|r| r.alpha == alpha && r.k == k && r.m == m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let seconds = r.seconds.map_or_else(|| "NA".to_string(), |s| format!("{s:.3}"));
            writeln!(
                out,
                "{},{},{},{},{:.9e},{},{},{}",
                r.smoother, r.alpha, r.k, r.m, r.rho, r.iterations, seconds, r.seed
            )
            .unwrap();
        }
        out
    }

    /// One block per coefficient, levels down and smoothing steps across.
    pub fn to_markdown(&self) -> String {
        let mut alphas: Vec<f64> = Vec::new();
        let mut ks: Vec<usize> = Vec::new();
        let mut ms: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !alphas.contains(&r.alpha) {
                alphas.push(r.alpha);
            }
            if !ks.contains(&r.k) {
                ks.push(r.k);
            }
            if !ms.contains(&r.m) {
                ms.push(r.m);
            }
        }
        let mut out = String::from("| α | k |");
        for m in &ms {
            write!(out, " m={m} |").unwrap();
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(ms.len()));
        out.push('\n');
        for &alpha in &alphas {
            for (i, &k) in ks.iter().enumerate() {
                let label = if i == 0 { format!("{alpha}") } else { String::new() };
                write!(out, "| {label} | {k} |").unwrap();
                for &m in &ms {
                    match self.get(alpha, k, m) {
                        Some(r) => write!(out, " {}{} |", sci(r.rho), if r.converged { "" } else { "*" }),
                        None => write!(out, " |"),
                    }
                    .unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Markdown => self.to_markdown(),
        }
    }
}

/// `9.07E-01` style.
pub fn sci(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.2E}");
    }
    let s = format!("{x:.2E}");
    let (mant, exp) = s.split_once('E').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mant}E{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

/// Runs the sweep row by row; `on_row` sees each row as it completes.
/// Non-converged rows are kept and flagged.
pub fn run_table_with(config: &ExperimentConfig, mut on_row: impl FnMut(&ContractionRow)) -> Result<ContractionReport> {
    config.validate()?;
    let finest = *config.levels.iter().max().expect("validated nonempty");
    let grid = build_hierarchy(finest)?;
    let mut rows = Vec::with_capacity(config.alphas.len() * config.levels.len() * config.steps.len());
    for &alpha in &config.alphas {
        let mg = MultigridHierarchy::build(grid.clone(), alpha, config.smoother_config(), config.parallelism)?;
        for &k in &config.levels {
            for &m in &config.steps {
                let start = Instant::now();
                let est = estimate_contraction(&mg, k, m, config.seed, config.tol, config.cap)?;
                let seconds = match config.parallelism {
                    Parallelism::Deterministic => None,
                    Parallelism::Parallel => Some(start.elapsed().as_secs_f64()),
                };
                let row = ContractionRow {
                    smoother: config.smoother,
                    alpha,
                    k,
                    m,
                    rho: est.rho,
                    iterations: est.iterations,
                    converged: est.converged,
                    seconds,
                    seed: config.seed,
                };
                on_row(&row);
                rows.push(row);
            }
        }
    }
    Ok(ContractionReport { rows })
}

pub fn run_table(config: &ExperimentConfig) -> Result<ContractionReport> {
    run_table_with(config, |_| {})
}

/// `u = (g(y)g(z), g(z)g(x), g(x)g(y))`, `g(t) = sin(πt)`. Its tangential
/// trace vanishes on the boundary of the cube.
pub fn manufactured_field(x: [f64; 3]) -> [f64; 3] {
    let g = x.map(|t| (std::f64::consts::PI * t).sin());
    [g[1] * g[2], g[2] * g[0], g[0] * g[1]]
}

/// `curl curl u = 2π² u` for [`manufactured_field`], so the load is
/// `(2π²α + 1) u`.
pub fn manufactured_load(alpha: f64) -> impl Fn([f64; 3]) -> [f64; 3] {
    let scale = 2.0 * std::f64::consts::PI.powi(2) * alpha + 1.0;
    move |x| manufactured_field(x).map(|v| scale * v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub dofs: usize,
    pub l2_error: f64,
    pub pcg_iterations: usize,
}

pub const MANUFACTURED_TOL: f64 = 1e-10;
const MANUFACTURED_MAX_ITERS: usize = 500;

/// Solves the manufactured problem on levels `1..=max_level` with the vertex
/// smoother V-cycle as PCG preconditioner and reports L² errors.
pub fn manufactured_convergence(alpha: f64, max_level: usize, quadrature: usize) -> Result<Vec<ConvergenceRow>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::NonPositiveCoefficient(alpha));
    }
    if max_level == 0 {
        return Err(Error::Config("manufactured study needs max level >= 1".into()));
    }
    let grid = build_hierarchy(max_level)?;
    let mg = MultigridHierarchy::build(
        grid.clone(),
        alpha,
        SmootherConfig::new(SmootherKind::Vertex),
        Parallelism::Parallel,
    )?;
    let load = manufactured_load(alpha);
    (1..=max_level)
        .map(|k| {
            let f = assemble_load(&grid, k, &load, quadrature)?;
            let out = mg.pcg_solve_at(k, &f.values, MANUFACTURED_TOL, MANUFACTURED_MAX_ITERS)?;
            if !out.converged {
                return Err(Error::NotConverged {
                    iterations: out.iterations,
                    ratio: out.ratio,
                });
            }
            Ok(ConvergenceRow {
                level: k,
                dofs: f.values.len(),
                l2_error: l2_error(&grid, k, &out.solution, manufactured_field, quadrature)?,
                pcg_iterations: out.iterations,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub const GALERKIN_TOL: f64 = 1e-12;
pub const SPECTRAL_SLACK: f64 = 1e-8;
pub const SPECTRAL_ITERATIONS: usize = 200;
pub const LEMMA_FLOOR: f64 = 1e-8;

/// Galerkin identity at levels 1–3, `λ_max(M⁻¹A) ≤ 1` at the damping bounds
/// on levels 1–2, and a positive curl for the midpoint construction around
/// every interior x-parallel coarse edge at levels 1–2.
pub fn run_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let alphas = [0.01, 1.0, 100.0];
    let grid = build_hierarchy(3)?;
    let mut out = Vec::new();
    for &alpha in &alphas {
        let ops = (0..=3)
            .map(|k| assemble_operator(&grid, k, alpha))
            .collect::<Result<Vec<_>>>()?;
        for k in 1..=3 {
            let defect = galerkin_defect(&build_prolongation(&grid, k)?, &ops[k], &ops[k - 1])?;
            out.push(CheckOutcome {
                name: format!("galerkin alpha={alpha} k={k}"),
                passed: defect <= GALERKIN_TOL,
                detail: format!("relative defect {defect:.3e}"),
            });
        }
        for k in 1..=2 {
            for kind in [SmootherKind::Edge, SmootherKind::Vertex] {
                let config = SmootherConfig::new(kind).with_eta(kind.damping_bound());
                let blocks = build_blocks(&grid, &ops[k], k, config)?;
                let lambda = max_eigenvalue_estimate(&ops[k], &blocks, SPECTRAL_ITERATIONS, seed)?;
                out.push(CheckOutcome {
                    name: format!("spectral {kind} alpha={alpha} k={k}"),
                    passed: lambda <= 1.0 + SPECTRAL_SLACK,
                    detail: format!("lambda_max {lambda:.12}"),
                });
            }
        }
    }
    let op_alpha = 1.0;
    for k in 1..=2 {
        let op = assemble_operator(&grid, k, op_alpha)?;
        let coarse = grid.level(k - 1)?;
        let values = coarse
            .interior_edges()
            .into_iter()
            .filter(|e| e.dir == 0)
            .map(|e: Edge| lemma_coarse_check(&grid, &op, e))
            .collect::<Result<Vec<_>>>()?;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        out.push(CheckOutcome {
            name: format!("midpoint curl k={k}"),
            passed: min > LEMMA_FLOOR,
            detail: format!("{} edges, min {min:.12e}", values.len()),
        });
    }
    Ok(out)
}
