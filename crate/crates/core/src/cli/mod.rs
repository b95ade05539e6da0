//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal or check failure, 2 tolerance failure,
//! 3 input error.

pub mod csv;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::asymptotics::{LimitCovariance, ObservationProbabilities, SchemeSpec};
use crate::copulas::{CopulaModel, MarginFamily, ParametricKind};
use crate::estimators::{HybridEstimator, JointScheme, MarginScheme};
use crate::harness::suites::{run_suites, SuiteOptions};
use crate::harness::{
    default_axis, default_grid, lattice, run_experiment, simulate_dataset, CheckOutcome, ExperimentConfig,
    ExperimentReport, ToleranceCheck,
};

pub const SEED_ENV: &str = "HYBRIDCOP_SEED";
const DEFAULT_SEED: u64 = 42;

/// Failure of a command, carrying its exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Failure(String),
    Tolerance(String),
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Failure(_) => 1,
            Self::Tolerance(_) => 2,
            Self::Input(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Failure(m) | Self::Tolerance(m) | Self::Input(m) => m,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "hybridcop", version, about = "Hybrid copula estimation and limit-theory checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from a scheme's truth and write it as CSV.
    Simulate(SimulateArgs),
    /// Evaluate the hybrid copula estimator of a CSV dataset on a grid.
    Estimate(EstimateArgs),
    /// Tabulate covariance kernels of the limit process.
    LimitCov(LimitCovArgs),
    /// Run a seeded Monte Carlo experiment and write a JSON report.
    Experiment(ExperimentArgs),
    /// Run the deterministic check suites.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SchemeArgs {
    /// Preset: empirical, known, missing or parametric.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Joint estimator: empirical or complete-case. Overrides the preset.
    #[arg(long)]
    pub joint: Option<String>,
    /// Comma-separated margin estimators (empirical, available-case, known,
    /// normal, exponential); a single entry applies to every column.
    #[arg(long)]
    pub margins: Option<String>,
    /// Copula of the truth: independence, clayton or fgm.
    #[arg(long)]
    pub copula: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Dimension of the independence copula.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub px: Option<f64>,
    #[arg(long)]
    pub py: Option<f64>,
    /// Probability that both columns are observed; defaults to px * py.
    #[arg(long)]
    pub pxy: Option<f64>,
    /// Comma-separated true margins: uniform, normal[:mean:sd],
    /// exponential[:rate]; a single entry applies to every column.
    #[arg(long = "true-margins")]
    pub true_margins: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// `default`, `axis:a,b,...` for a lattice, or points `u1,u2;v1,v2`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Kernel {
    CovAlpha,
    CovBeta,
    CovBetaBeta,
    CovAlphaBeta,
    LimitVariance,
}

#[derive(Debug, Args)]
pub struct LimitCovArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, value_enum)]
    pub kernel: Kernel,
    /// First margin index, 1-based.
    #[arg(long, default_value_t = 1)]
    pub j: usize,
    /// Second margin index, 1-based.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Point `u1,u2,...`; the grid is used when omitted.
    #[arg(long)]
    pub u: Option<String>,
    #[arg(long)]
    pub v: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Configuration keys (one `key = value` per line, `#` starts a comment):
/// scheme, joint, margins, copula, theta, dim, px, py, pxy, true_margins,
/// n (repeatable, comma lists allowed), reps, seed, grid (repeatable: a
/// point `u1,u2`, or `default`, or `axis:a,b,...`) and check (repeatable):
///
/// ```text
/// check = variance 0.5,0.5 0.1875 0.012
/// check = variance 0.5,0.5 limit 0.012
/// check = marginal_variance 1 0.5 limit 0.02
/// check = variance_within_se 3
/// check = remainder_decreasing
/// ```
///
/// Command-line flags override the file.
#[derive(Debug, Args)]
#[command(verbatim_doc_comment)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Comma-separated increasing sample sizes.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<String>,
    /// Worker threads; 0 uses every core. Does not affect the report.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Additional tolerance check, same syntax as in the config file.
    #[arg(long)]
    pub check: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Reduced instance and replication counts.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Test hook: perturb the first partial derivative.
    #[arg(long, hide = true)]
    pub corrupt_derivative: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::LimitCov(a) => cmd_limit_cov(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::Check(a) => cmd_check(&a),
    }
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        return v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")));
    }
    Ok(flag.or(config).unwrap_or(DEFAULT_SEED))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Failure(e.to_string())),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| CliError::Input(format!("cannot parse {tok:?} in {what}")))
        })
        .collect()
}

fn parse_probability(x: f64, what: &str) -> CliResult<f64> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(CliError::Input(format!("{what} = {x} is outside [0, 1]")))
    }
}

fn parse_point(s: &str, p: usize) -> CliResult<Vec<f64>> {
    let u: Vec<f64> = parse_list(s, "point")?;
    if u.len() != p {
        return Err(CliError::Input(format!("point {s:?} has {} coordinates, expected {p}", u.len())));
    }
    u.into_iter().map(|x| parse_probability(x, "coordinate")).collect()
}

/// Grid specification: `default`, `axis:a,b,...`, or points `u1,u2;v1,v2`.
pub fn parse_grid(spec: Option<&str>, p: usize) -> CliResult<Vec<Vec<f64>>> {
    let spec = match spec.map(str::trim) {
        None | Some("default") => return Ok(default_grid(p)),
        Some(s) => s,
    };
    if let Some(axis) = spec.strip_prefix("axis:") {
        let axis = parse_list::<f64>(axis, "grid axis")?
            .into_iter()
            .map(|x| parse_probability(x, "grid value"))
            .collect::<CliResult<Vec<_>>>()?;
        return Ok(lattice(&axis, p));
    }
    spec.split(';').map(|pt| parse_point(pt, p)).collect()
}

fn parse_family(tok: &str) -> CliResult<MarginFamily> {
    let parts: Vec<&str> = tok.trim().split(':').collect();
    let nums = parts[1..]
        .iter()
        .map(|x| x.parse::<f64>().map_err(|_| CliError::Input(format!("bad margin parameter in {tok:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    match (parts[0], nums.as_slice()) {
        ("uniform", []) => Ok(MarginFamily::Uniform01),
        ("normal", []) => MarginFamily::normal(0.0, 1.0).map_err(input),
        ("normal", [m, s]) => MarginFamily::normal(*m, *s).map_err(input),
        ("exponential", []) => MarginFamily::exponential(1.0).map_err(input),
        ("exponential", [r]) => MarginFamily::exponential(*r).map_err(input),
        _ => Err(CliError::Input(format!("unknown margin family {tok:?}"))),
    }
}

fn broadcast<T: Clone>(items: Vec<T>, p: usize, what: &str) -> CliResult<Vec<T>> {
    match items.len() {
        1 => Ok(vec![items[0].clone(); p]),
        len if len == p => Ok(items),
        len => Err(CliError::Input(format!("{what} lists {len} entries for {p} columns"))),
    }
}

/// Scheme settings merged from a config file and flags, all as text.
#[derive(Debug, Clone, Default)]
struct SchemeSettings {
    scheme: Option<String>,
    joint: Option<String>,
    margins: Option<String>,
    copula: Option<String>,
    theta: Option<f64>,
    dim: Option<usize>,
    px: Option<f64>,
    py: Option<f64>,
    pxy: Option<f64>,
    true_margins: Option<String>,
}

impl SchemeSettings {
    fn from_args(a: &SchemeArgs) -> Self {
        Self {
            scheme: a.scheme.clone(),
            joint: a.joint.clone(),
            margins: a.margins.clone(),
            copula: a.copula.clone(),
            theta: a.theta,
            dim: a.dim,
            px: a.px,
            py: a.py,
            pxy: a.pxy,
            true_margins: a.true_margins.clone(),
        }
    }

    fn overlay(&mut self, a: &SchemeArgs) {
        let b = Self::from_args(a);
        macro_rules! take {
            ($($f:ident),*) => { $( if b.$f.is_some() { self.$f = b.$f; } )* };
        }
        take!(scheme, joint, margins, copula, theta, dim, px, py, pxy, true_margins);
    }

    fn preset(&self) -> CliResult<&str> {
        match self.scheme.as_deref().unwrap_or("empirical") {
            s @ ("empirical" | "known" | "missing" | "parametric") => Ok(s),
            other => Err(CliError::Input(format!(
                "unknown scheme {other:?}; expected empirical, known, missing or parametric"
            ))),
        }
    }

    fn copula(&self) -> CliResult<CopulaModel> {
        let theta = || {
            self.theta
                .ok_or_else(|| CliError::Input("--theta is required for this copula".into()))
        };
        match self.copula.as_deref().unwrap_or("independence") {
            "independence" => CopulaModel::independence(self.dim.unwrap_or(2)).map_err(input),
            "clayton" => CopulaModel::clayton(theta()?).map_err(input),
            "fgm" => CopulaModel::fgm(theta()?).map_err(input),
            other => Err(CliError::Input(format!("unknown copula {other:?}"))),
        }
    }

    fn true_margins(&self, p: usize) -> CliResult<Vec<MarginFamily>> {
        let default = if self.preset()? == "parametric" { "normal" } else { "uniform" };
        let text = self.true_margins.as_deref().unwrap_or(default);
        let fams = text.split(',').map(parse_family).collect::<CliResult<Vec<_>>>()?;
        broadcast(fams, p, "--true-margins")
    }

    fn joint(&self) -> CliResult<JointScheme> {
        let preset = if self.preset()? == "missing" { "complete-case" } else { "empirical" };
        match self.joint.as_deref().unwrap_or(preset) {
            "empirical" => Ok(JointScheme::Empirical),
            "complete-case" => Ok(JointScheme::CompleteCase),
            other => Err(CliError::Input(format!("unknown joint estimator {other:?}"))),
        }
    }

    fn margins(&self, truths: &[MarginFamily]) -> CliResult<Vec<MarginScheme>> {
        let p = truths.len();
        let preset = self.preset()?;
        let tokens: Vec<String> = match &self.margins {
            Some(m) => m.split(',').map(|s| s.trim().to_string()).collect(),
            None => vec![match preset {
                "known" => "known".into(),
                "missing" => "available-case".into(),
                "parametric" => "parametric".into(),
                _ => "empirical".into(),
            }],
        };
        let tokens = broadcast(tokens, p, "--margins")?;
        tokens
            .iter()
            .zip(truths)
            .map(|(tok, truth)| match tok.as_str() {
                "empirical" => Ok(MarginScheme::Empirical),
                "available-case" => Ok(MarginScheme::AvailableCase),
                "known" => Ok(MarginScheme::Known(*truth)),
                "normal" => Ok(MarginScheme::Parametric(ParametricKind::Normal)),
                "exponential" => Ok(MarginScheme::Parametric(ParametricKind::Exponential)),
                "parametric" => truth
                    .kind()
                    .map(MarginScheme::Parametric)
                    .ok_or_else(|| CliError::Input("parametric margins need normal or exponential true margins".into())),
                other => Err(CliError::Input(format!("unknown margin estimator {other:?}"))),
            })
            .collect()
    }

    fn observation(&self) -> CliResult<ObservationProbabilities> {
        let px = self.px.unwrap_or(1.0);
        let py = self.py.unwrap_or(1.0);
        let pxy = self.pxy.unwrap_or(px * py);
        ObservationProbabilities::new(px, py, pxy).map_err(input)
    }

    fn spec(&self) -> CliResult<SchemeSpec> {
        let copula = self.copula()?;
        let truths = self.true_margins(copula.dim())?;
        let margins = self.margins(&truths)?;
        SchemeSpec::new(copula, truths, self.joint()?, margins, self.observation()?).map_err(input)
    }
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let spec = SchemeSettings::from_args(&a.scheme).spec()?;
    let seed = resolve_seed(a.seed, None)?;
    let data = simulate_dataset(&spec, a.n, seed).map_err(input)?;
    let columns: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    emit(a.out.as_deref(), &csv::write_data(&columns, &data))
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let settings = SchemeSettings::from_args(&a.scheme);
    let joint = settings.joint()?;
    settings.preset()?;
    if let Some(spec) = a.grid.as_deref() {
        // syntax only; the dimension is known once the data is read
        if spec != "default" && !spec.starts_with("axis:") {
            spec.split(';')
                .try_for_each(|pt| parse_list::<f64>(pt, "point").map(drop))?;
        }
    }
    let table = csv::read_csv(&a.data).map_err(CliError::Input)?;
    let data = &table.data;
    let p = data.p();
    let truths = settings.true_margins(p)?;
    let margins = settings.margins(&truths)?;
    let grid = parse_grid(a.grid.as_deref(), p)?;
    let counts: Vec<String> = (0..p).map(|j| data.observed_count(j).to_string()).collect();
    eprintln!(
        "n = {}, complete rows = {}, observed per column = [{}]",
        data.n(),
        data.complete_rows(),
        counts.join(", ")
    );
    let est = HybridEstimator::fit(data, joint, &margins).map_err(input)?;
    let mut out = String::new();
    let header: Vec<String> = (1..=p).map(|j| format!("u_{j}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",c_hat\n");
    for u in &grid {
        let c = est.eval(u).map_err(input)?;
        let cells: Vec<String> = u.iter().chain([&c]).map(|&x| csv::format_value(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)
}

fn cmd_limit_cov(a: &LimitCovArgs) -> CliResult<()> {
    let spec = SchemeSettings::from_args(&a.scheme).spec()?;
    let p = spec.dim();
    let index = |i: usize, flag: &str| {
        if (1..=p).contains(&i) {
            Ok(i - 1)
        } else {
            Err(CliError::Input(format!("--{flag} = {i} is outside 1..={p}")))
        }
    };
    let (j, k) = (index(a.j, "j")?, index(a.k, "k")?);
    let s = a.s.map(|x| parse_probability(x, "--s")).transpose()?;
    let t = a.t.map(|x| parse_probability(x, "--t")).transpose()?;
    let u = a.u.as_deref().map(|x| parse_point(x, p)).transpose()?;
    let v = a.v.as_deref().map(|x| parse_point(x, p)).transpose()?;
    let points = match &u {
        Some(u) => vec![u.clone()],
        None => parse_grid(a.grid.as_deref(), p)?,
    };
    let axis = |m: usize| -> Vec<f64> {
        let mut vals: Vec<f64> = match &a.grid {
            None => default_axis(),
            Some(_) => points.iter().map(|u| u[m]).collect(),
        };
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals
    };
    let lim = LimitCovariance::new(spec);
    let fmt = |x: f64| csv::format_value(x);
    let join = |u: &[f64]| u.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(",");
    let names = |prefix: &str| (1..=p).map(|i| format!("{prefix}_{i}")).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    let mut failures = 0;
    match a.kernel {
        Kernel::CovAlpha => {
            out += &format!("{},{},value\n", names("u"), names("v"));
            for u in &points {
                let v = v.clone().unwrap_or_else(|| u.clone());
                let val = lim.cov_alpha(u, &v).map_err(input)?;
                out += &format!("{},{},{}\n", join(u), join(&v), fmt(val));
            }
        }
        Kernel::CovBeta => {
            out += "j,s,t,value\n";
            let pairs: Vec<(f64, f64)> = match s {
                Some(s) => vec![(s, t.unwrap_or(s))],
                None => axis(j).into_iter().map(|x| (x, t.unwrap_or(x))).collect(),
            };
            for (s, t) in pairs {
                let val = lim.cov_beta(j, s, t).map_err(input)?;
                out += &format!("{},{},{},{}\n", j + 1, fmt(s), fmt(t), fmt(val));
            }
        }
        Kernel::CovBetaBeta => {
            out += "j,k,s,t,value\n";
            let pairs: Vec<(f64, f64)> = match (s, t) {
                (Some(s), Some(t)) => vec![(s, t)],
                _ => points.iter().map(|u| (s.unwrap_or(u[j]), t.unwrap_or(u[k]))).collect(),
            };
            for (s, t) in pairs {
                let val = lim.cov_beta_beta(j, k, s, t).map_err(input)?;
                out += &format!("{},{},{},{},{}\n", j + 1, k + 1, fmt(s), fmt(t), fmt(val));
            }
        }
        Kernel::CovAlphaBeta => {
            out += &format!("j,{},s,value\n", names("u"));
            for u in &points {
                let s = s.unwrap_or(u[j]);
                let val = lim.cov_alpha_beta(j, u, s).map_err(input)?;
                out += &format!("{},{},{},{}\n", j + 1, join(u), fmt(s), fmt(val));
            }
        }
        Kernel::LimitVariance => {
            out += &format!("{},value,error\n", names("u"));
            for u in &points {
                match lim.limit_variance(u) {
                    Ok(val) => out += &format!("{},{},\n", join(u), fmt(val)),
                    Err(e) => {
                        failures += 1;
                        out += &format!("{},NA,\"{}\"\n", join(u), e.to_string().replace('"', "'"));
                    }
                }
            }
        }
    }
    emit(a.out.as_deref(), &out)?;
    if failures > 0 {
        return Err(CliError::Input(format!(
            "{failures} grid point(s) lie on the boundary, where the limit variance is undefined"
        )));
    }
    Ok(())
}

/// Experiment settings parsed from a config file and flags.
#[derive(Debug, Clone, Default)]
struct ExperimentSettings {
    scheme: SchemeSettings,
    sizes: Option<Vec<usize>>,
    reps: Option<usize>,
    seed: Option<u64>,
    grid: Vec<String>,
    checks: Vec<ToleranceCheck>,
}

fn parse_target(tok: &str) -> CliResult<Option<f64>> {
    if tok == "limit" {
        Ok(None)
    } else {
        tok.parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("bad check target {tok:?}")))
    }
}

fn parse_f64(tok: &str, what: &str) -> CliResult<f64> {
    tok.parse().map_err(|_| CliError::Input(format!("cannot parse {what} {tok:?}")))
}

/// Parses one `check` entry; margin indices are 1-based.
pub fn parse_check(text: &str) -> CliResult<ToleranceCheck> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let bad = || CliError::Input(format!("malformed check {text:?}"));
    match parts.as_slice() {
        ["variance", u, target, tol] => Ok(ToleranceCheck::Variance {
            u: parse_list(u, "check point")?,
            target: parse_target(target)?,
            tol: parse_f64(tol, "tolerance")?,
        }),
        ["marginal_variance", j, s, target, tol] => {
            let j: usize = j.parse().map_err(|_| bad())?;
            if j == 0 {
                return Err(bad());
            }
            Ok(ToleranceCheck::MarginalVariance {
                j: j - 1,
                s: parse_f64(s, "point")?,
                target: parse_target(target)?,
                tol: parse_f64(tol, "tolerance")?,
            })
        }
        ["variance_within_se", k] => Ok(ToleranceCheck::VarianceWithinSe {
            k: parse_f64(k, "multiplier")?,
        }),
        ["remainder_decreasing"] => Ok(ToleranceCheck::RemainderDecreasing),
        _ => Err(bad()),
    }
}

fn parse_config(text: &str) -> CliResult<ExperimentSettings> {
    let mut s = ExperimentSettings::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |m: String| CliError::Input(format!("config line {}: {m}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at("expected key = value".into()))?;
        let (key, value) = (key.trim(), value.trim().to_string());
        let num = |v: &str| v.parse::<f64>().map_err(|_| at(format!("cannot parse {v:?}")));
        let sc = &mut s.scheme;
        match key {
            "scheme" => sc.scheme = Some(value),
            "joint" => sc.joint = Some(value),
            "margins" => sc.margins = Some(value),
            "copula" => sc.copula = Some(value),
            "true_margins" => sc.true_margins = Some(value),
            "theta" => sc.theta = Some(num(&value)?),
            "px" => sc.px = Some(num(&value)?),
            "py" => sc.py = Some(num(&value)?),
            "pxy" => sc.pxy = Some(num(&value)?),
            "dim" => sc.dim = Some(value.parse().map_err(|_| at(format!("cannot parse {value:?}")))?),
            "n" => s
                .sizes
                .get_or_insert_with(Vec::new)
                .extend(parse_list::<usize>(&value, "n").map_err(|e| at(e.message().into()))?),
            "reps" => s.reps = Some(value.parse().map_err(|_| at(format!("cannot parse {value:?}")))?),
            "seed" => s.seed = Some(value.parse().map_err(|_| at(format!("cannot parse {value:?}")))?),
            "grid" => s.grid.push(value),
            "check" => s.checks.push(parse_check(&value).map_err(|e| at(e.message().into()))?),
            other => return Err(at(format!("unknown key {other:?}"))),
        }
    }
    Ok(s)
}

fn experiment_settings(a: &ExperimentArgs) -> CliResult<ExperimentSettings> {
    let mut s = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ExperimentSettings::default(),
    };
    s.scheme.overlay(&a.scheme);
    if let Some(n) = &a.n {
        s.sizes = Some(parse_list(n, "--n")?);
    }
    if a.reps.is_some() {
        s.reps = a.reps;
    }
    if a.seed.is_some() {
        s.seed = a.seed;
    }
    if let Some(g) = &a.grid {
        s.grid = vec![g.clone()];
    }
    for c in &a.check {
        s.checks.push(parse_check(c)?);
    }
    Ok(s)
}

fn experiment_config(s: &ExperimentSettings) -> CliResult<ExperimentConfig> {
    let scheme = s.scheme.spec()?;
    let p = scheme.dim();
    let grid = if s.grid.is_empty() {
        default_grid(p)
    } else {
        let mut g = Vec::new();
        for entry in &s.grid {
            g.extend(parse_grid(Some(entry), p)?);
        }
        g
    };
    let config = ExperimentConfig {
        scheme,
        sample_sizes: s.sizes.clone().unwrap_or_else(|| vec![1000]),
        replications: s.reps.unwrap_or(200),
        grid,
        master_seed: resolve_seed(None, s.seed)?,
    };
    config.validate().map_err(input)?;
    Ok(config)
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    experiment: &'a ExperimentConfig,
    checks: &'a [ToleranceCheck],
}

#[derive(Serialize)]
struct Report<'a> {
    config: ConfigEcho<'a>,
    results: &'a ExperimentReport,
    checks: &'a [CheckOutcome],
    version: &'a str,
}

fn cmd_experiment(a: &ExperimentArgs) -> CliResult<()> {
    let settings = experiment_settings(a)?;
    let config = experiment_config(&settings)?;
    let results = run_experiment(&config, a.threads).map_err(|e| CliError::Failure(e.to_string()))?;
    let outcomes = settings
        .checks
        .iter()
        .map(|c| c.evaluate(&results, &config))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(input)?;
    let report = Report {
        config: ConfigEcho {
            experiment: &config,
            checks: &settings.checks,
        },
        results: &results,
        checks: &outcomes,
        version: crate::VERSION,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    for o in &outcomes {
        eprintln!(
            "{} {}: observed {:.6}, expected {:.6}, tolerance {:.3e}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.observed,
            o.expected,
            o.tolerance
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::Tolerance(format!("{failed} of {} checks failed", outcomes.len())));
    }
    Ok(())
}

fn cmd_check(a: &CheckArgs) -> CliResult<()> {
    let opts = SuiteOptions {
        quick: a.quick,
        corrupt_derivative: a.corrupt_derivative,
    };
    let results = if a.threads == 0 {
        run_suites(opts)
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.threads)
            .build()
            .map_err(|e| CliError::Failure(e.to_string()))?
            .install(|| run_suites(opts))
    };
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{:<width$}  {}  {}",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.detail
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("failed suites: {}", failed.join(", "))))
    }
}
