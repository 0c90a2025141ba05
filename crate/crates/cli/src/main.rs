//! `nessmix` command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 bad
//! configuration or input, 3 numerical failure.

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use nessmix::ness::{estimate_covariance, estimate_profile, sample_ness};
use nessmix::recursion::build_recursion;
use nessmix::sampling::{par_samples, sample_family};
use nessmix::transition::marginal;
use nessmix::verification::{
    check_scale_invariance, check_separability, check_shift_invariance, check_support,
    check_symmetry, check_two_sided_markov, ResidualReport,
};
use nessmix::{
    BoundaryPair, DensityFamily, EquilibriumMarginal, FactorFamily, GeneratingFactor, GridSpec,
    MixtureSpec, QuadratureSpec, RecursionConfig, RngHandle,
};

#[derive(Parser)]
#[command(
    name = "nessmix",
    version,
    about = "Ordered mixture densities and boundary-driven steady states"
)]
struct Cli {
    /// JSON family configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid sweeps and Monte Carlo.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-densities of tuples read one per line as `θ1,...,θn`.
    Eval {
        /// Points file; standard input when omitted.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Log-density of the i-th marginal on a uniform grid.
    Marginal {
        #[arg(long, default_value_t = 1)]
        index: usize,
        /// Number of interior grid points.
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
    /// Run the normalization recursion and summarize the cached levels.
    Build,
    /// Draw tuples, or steady-state configurations with `--ness`.
    Sample {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        ness: bool,
    },
    /// Run a verification suite and emit a JSON report.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// Monte Carlo profile and covariance of the steady state.
    Ness {
        #[arg(long, default_value_t = 100_000)]
        count: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Markov,
    Symmetry,
    Invariance,
    Support,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FamilyConfig {
    OrderStats,
    Gapped(u32),
    Dirichlet(f64),
    Power(f64),
    ExpKernel(f64),
    CustomG(String),
    DistancePhi(String),
    ScaleOnly { s: f64, u: f64, phi: String },
    ShiftOnly { v: f64, w: f64, phi: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadConfig {
    rel_tol: Option<f64>,
    max_levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    family: FamilyConfig,
    boundary: [f64; 2],
    n: usize,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    working_box: Option<[f64; 2]>,
    #[serde(default)]
    quad: QuadConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    marginal: Option<EquilibriumMarginal>,
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<nessmix::Error> for Failure {
    fn from(e: nessmix::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

/// Configuration with every default filled in, as embedded in reports.
struct Resolved {
    config: Config,
    quad: QuadratureSpec,
    seed: u64,
}

fn resolve(cli: &Cli) -> Result<Resolved, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config_err("--config FILE is required"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut config: Config =
        serde_json::from_str(&text).map_err(|e| config_err(format!("invalid config: {e}")))?;
    if config.n == 0 {
        return Err(config_err("n must be at least 1"));
    }
    let defaults = QuadratureSpec::default();
    let quad = QuadratureSpec::new(
        config.quad.rel_tol.unwrap_or(defaults.rel_tol),
        config.quad.max_levels.unwrap_or(defaults.max_levels),
    )?
    .with_env_override();
    config.quad = QuadConfig {
        rel_tol: Some(quad.rel_tol),
        max_levels: Some(quad.max_levels),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    config.seed = Some(seed);
    if is_recursion(&config.family) && config.working_box.is_none() {
        let [a, b] = config.boundary;
        let (lo, hi) = (a.min(b), a.max(b));
        config.working_box = Some([0.5 * lo, (2.0 * hi).max(hi + 2.0)]);
    }
    Ok(Resolved { config, quad, seed })
}

fn is_recursion(f: &FamilyConfig) -> bool {
    !matches!(
        f,
        FamilyConfig::OrderStats | FamilyConfig::Gapped(_) | FamilyConfig::Dirichlet(_)
    )
}

fn generating_factor(f: &FamilyConfig) -> Result<Option<GeneratingFactor>, Failure> {
    Ok(Some(match f {
        FamilyConfig::Power(s) => GeneratingFactor::power(*s)?,
        FamilyConfig::ExpKernel(rate) => GeneratingFactor::exp_kernel(*rate)?,
        FamilyConfig::CustomG(src) => GeneratingFactor::expression(src)?,
        FamilyConfig::DistancePhi(src) => GeneratingFactor::distance(src)?,
        FamilyConfig::ScaleOnly { s, u, phi } => GeneratingFactor::scale_only(*s, *u, phi)?,
        FamilyConfig::ShiftOnly { v, w, phi } => GeneratingFactor::shift_only(*v, *w, phi)?,
        _ => return Ok(None),
    }))
}

fn recursion_config(r: &Resolved) -> Result<RecursionConfig, Failure> {
    let [z1, z2] = r
        .config
        .working_box
        .ok_or_else(|| config_err("missing working box"))?;
    Ok(RecursionConfig::new(z1, z2)?)
}

fn build_family(r: &Resolved) -> Result<FactorFamily, Failure> {
    let n = r.config.n;
    Ok(match &r.config.family {
        FamilyConfig::OrderStats => FactorFamily::order_stats(n)?,
        FamilyConfig::Gapped(s) => FactorFamily::gapped(*s, n)?,
        FamilyConfig::Dirichlet(s) => FactorFamily::dirichlet(*s, n)?,
        other => {
            let g = generating_factor(other)?.expect("recursion family");
            FactorFamily::from_generating_factor(g, n, &r.quad, recursion_config(r)?)?
        }
    })
}

fn boundary(r: &Resolved) -> Result<BoundaryPair, Failure> {
    let [a, b] = r.config.boundary;
    Ok(BoundaryPair::limiting(a, b)?)
}

fn fmt_log(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn cmd_eval(r: &Resolved, points: Option<&PathBuf>) -> Result<String, Failure> {
    let text = match points {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?,
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| config_err(format!("cannot read standard input: {e}")))?;
            s
        }
    };
    let fam = build_family(r)?;
    let bp = boundary(r)?;
    let mut out = String::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let values = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| config_err(format!("line {}: {e}", lineno + 1)))?;
        if values.len() != r.config.n {
            return Err(config_err(format!(
                "line {}: expected {} values, got {}",
                lineno + 1,
                r.config.n,
                values.len()
            )));
        }
        let v = fam.log_joint(&bp, &values)?;
        out.push_str(&fields.join(","));
        out.push(',');
        out.push_str(&fmt_log(v));
        out.push('\n');
    }
    Ok(out)
}

fn cmd_marginal(r: &Resolved, index: usize, grid: usize) -> Result<String, Failure> {
    if grid == 0 {
        return Err(config_err("--grid must be at least 1"));
    }
    let fam = build_family(r)?;
    let bp = boundary(r)?;
    let m = marginal(&fam, r.config.n, index, bp, &r.quad)?;
    let xs: Vec<f64> = (0..grid)
        .map(|k| bp.at_fraction((k as f64 + 0.5) / grid as f64))
        .collect();
    let values = {
        use rayon::prelude::*;
        xs.par_iter()
            .map(|&x| m.log_density(x))
            .collect::<Result<Vec<f64>, _>>()?
    };
    let mut out = String::from("x,log_density\n");
    for (x, v) in xs.iter().zip(values) {
        out.push_str(&format!("{x},{}\n", fmt_log(v)));
    }
    Ok(out)
}

fn cmd_build(r: &Resolved) -> Result<String, Failure> {
    let Some(g) = generating_factor(&r.config.family)? else {
        let fam = build_family(r)?;
        return Ok(pretty(&json!({
            "config": r.config,
            "family": fam.label(),
            "closed_form": true,
        })));
    };
    let start = std::time::Instant::now();
    let built = build_recursion(g, r.config.n, &r.quad, recursion_config(r)?)?;
    let degrees: Vec<[usize; 2]> = built
        .caches()
        .iter()
        .map(|c| {
            let (d, t) = c.degrees();
            [d, t]
        })
        .collect();
    Ok(pretty(&json!({
        "config": r.config,
        "family": built.generating_factor().label(),
        "closed_form": false,
        "levels": r.config.n,
        "diagonal_exponent": built.diagonal_exponent(),
        "chebyshev_degrees": degrees,
        "seconds": start.elapsed().as_secs_f64(),
    })))
}

fn mixture(r: &Resolved, fam: FactorFamily) -> Result<MixtureSpec, Failure> {
    let [a, b] = r.config.boundary;
    let m = r
        .config
        .marginal
        .clone()
        .unwrap_or(EquilibriumMarginal::Exponential);
    Ok(MixtureSpec::new(
        Arc::new(fam),
        a,
        b,
        m,
        r.config.n,
        r.quad,
    )?)
}

fn cmd_sample(r: &Resolved, count: usize, ness: bool) -> Result<String, Failure> {
    if count == 0 {
        return Err(config_err("--count must be at least 1"));
    }
    let n = r.config.n;
    let fam = build_family(r)?;
    let mut rng = RngHandle::seed(r.seed);
    let (prefix, rows) = if ness {
        let spec = mixture(r, fam)?;
        (
            "x",
            par_samples(&mut rng, count, |g| sample_ness(&spec, g))?,
        )
    } else {
        let bp = boundary(r)?;
        let rows = par_samples(&mut rng, count, |g| {
            Ok(sample_family(&fam, n, &bp, g, &r.quad)?.into_inner())
        })?;
        ("theta", rows)
    };
    let header: Vec<String> = (1..=n).map(|i| format!("{prefix}_{i}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Tolerances: identities are exact for closed forms and limited by
/// quadrature and interpolation for recursion-built families.
fn tolerance(r: &Resolved) -> f64 {
    if is_recursion(&r.config.family) {
        1e-5
    } else {
        1e-8
    }
}

fn cmd_verify(r: &Resolved, suite: Suite) -> Result<(String, bool), Failure> {
    let fam = build_family(r)?;
    let fam: &dyn DensityFamily = &fam;
    let bp = boundary(r)?;
    let n = r.config.n;
    let grid = GridSpec::default();
    let tol = tolerance(r);
    let run = |s: Suite| suite == Suite::All || suite == s;
    let mut reports: Vec<ResidualReport> = Vec::new();
    if run(Suite::Markov) {
        if n < 2 {
            return Err(config_err("the markov suite needs n ≥ 2"));
        }
        reports.push(check_two_sided_markov(fam, &bp, n, &grid, tol, &r.quad)?);
        reports.push(check_separability(fam, &bp, n, &grid, tol)?);
    }
    if run(Suite::Symmetry) {
        reports.push(check_symmetry(fam, &bp, n, &grid, tol)?);
    }
    if run(Suite::Invariance) {
        for gamma in [0.5, 2.0] {
            reports.push(check_scale_invariance(fam, &bp, n, gamma, &grid, tol)?);
            reports.push(check_shift_invariance(fam, &bp, n, gamma, &grid, tol)?);
        }
    }
    if run(Suite::Support) {
        reports.push(check_support(fam, &bp, n, 1024, 1e-300, 2)?);
    }
    let all_pass = reports.iter().all(|r| r.pass);
    Ok((
        pretty(&json!({
            "config": r.config,
            "reports": reports,
            "all_pass": all_pass,
        })),
        all_pass,
    ))
}

fn cmd_ness(r: &Resolved, count: usize) -> Result<String, Failure> {
    let spec = mixture(r, build_family(r)?)?;
    let profile = estimate_profile(&spec, count, &mut RngHandle::seed(r.seed))?;
    let covariance = if count >= 1000 {
        Some(estimate_covariance(
            &spec,
            count,
            &mut RngHandle::seed(r.seed),
        )?)
    } else {
        None
    };
    Ok(pretty(&json!({
        "config": r.config,
        "profile": profile,
        "covariance": covariance,
    })))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| config_err(format!("cannot start {jobs} workers: {e}")))?;
    }
    let r = resolve(cli)?;
    let (text, pass) = match &cli.command {
        Command::Eval { points } => (cmd_eval(&r, points.as_ref())?, true),
        Command::Marginal { index, grid } => (cmd_marginal(&r, *index, *grid)?, true),
        Command::Build => (cmd_build(&r)?, true),
        Command::Sample { count, ness } => (cmd_sample(&r, *count, *ness)?, true),
        Command::Verify { suite } => cmd_verify(&r, *suite)?,
        Command::Ness { count } => (cmd_ness(&r, *count)?, true),
    };
    match &cli.out {
        Some(p) => fs::write(p, text)
            .map_err(|e| config_err(format!("cannot write {}: {e}", p.display())))?,
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| config_err(format!("cannot write output: {e}")))?,
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
