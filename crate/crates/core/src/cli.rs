//! Command-line front end: configs in, CSV or JSON artifacts out.
//!
//! Every subcommand accepts `--config FILE` holding a JSON object whose keys
//! mirror the long flag names (with underscores); flags given on the command
//! line override the file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::densities::DensitySpec;
use crate::equilibrium::{solve_threshold, uniform_closed_threshold, with_finite_shift, ContestSpec};
use crate::error::ContestError;
use crate::finite_contest::{run_dynamics, simulate_contest, DynamicsHyper, FiniteContest};
use crate::finite_contest::{SimulationOptions, SimulationPolicy};
use crate::intervention::{
    calibrate_rho, crossover_tau, optimize, sweep_csv, sweep_tau, InterventionSpec, RatioConstraint,
    ValuationModel, SWEEP_CSV_HEADER,
};
use crate::metrics::{fmt_sig, general_metrics, uniform_metrics, MeritFn, MetricsReport};

/// Default output directory when `--output` is absent.
pub const OUTPUT_DIR_ENV: &str = "CONTEST_OUTPUT_DIR";

/// Threshold on the optimal `delta_rho` that marks the intervention crossover.
pub const CROSSOVER_DELTA_RHO: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed config, unwritable output.
    Config(String),
    Contest(ContestError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Contest(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Contest(e) => e.name(),
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            CliError::Contest(e) => e.to_string(),
        }
    }

    /// Single-line JSON error record.
    pub fn record(&self) -> String {
        json!({
            "error": self.name(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl From<ContestError> for CliError {
    fn from(e: ContestError) -> Self {
        CliError::Contest(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "contest", version, about = "Equilibria, fairness metrics and interventions for selection contests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium threshold, optionally with the finite-population shift.
    Solve(SolveArgs),
    /// Representation, welfare and revenue metrics at equilibrium.
    Metrics(MetricsArgs),
    /// Metric grid over (rho, c, alpha).
    Sweep(SweepArgs),
    /// Best-response dynamics for the uniform two-group contest.
    Dynamics(DynamicsArgs),
    /// Monte-Carlo finite contest under a threshold policy.
    Simulate(SimulateArgs),
    /// Optimal (delta_rho, delta_c) under a ratio floor, or a sweep over the floor.
    Intervene(InterveneArgs),
    /// Recover rho from an observed representation ratio.
    Calibrate(CalibrateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// JSON config file; command-line flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Output file; defaults to $CONTEST_OUTPUT_DIR/<command>.<ext>, else stdout.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<Format>,
}

fn json_arg(s: &str) -> std::result::Result<Value, String> {
    serde_json::from_str(s).map_err(|e| format!("invalid JSON: {e}"))
}

#[derive(Args, Debug, Clone, Serialize)]
struct ContestFlags {
    /// Full contest as JSON (groups, ability, c); replaces the two-group flags.
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    contest: Option<Value>,
    /// Advantaged-group valuation density as JSON (default Uniform(0,1)).
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p1: Option<Value>,
    /// Ability density as JSON (default point mass at 0).
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ability: Option<Value>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    contest: ContestFlags,
    /// Population size for the finite shift.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct MetricsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    contest: ContestFlags,
    /// Merit function as JSON (default identity).
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    merit: Option<Value>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Value, comma list, or inclusive range `lo:hi:step`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<String>,
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p1: Option<Value>,
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ability: Option<Value>,
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    merit: Option<Value>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DynamicsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Total population, split evenly between the groups.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m_v: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m_e: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
    /// Convergence trace CSV; defaults to `<output stem>_trace.csv` beside a file output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum PolicyChoice {
    /// Large-population threshold policy.
    Threshold,
    /// Threshold policy with the finite-population participation shift.
    #[default]
    Shifted,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p1: Option<Value>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<PolicyChoice>,
    /// Explicit policy as JSON, overriding `--policy`.
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    policy_spec: Option<Value>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    deviation_grid: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    probe_points: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct InterveneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    /// Cost coefficient `a` in `a * delta_rho^beta`.
    #[arg(long, visible_alias = "a")]
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_coeff: Option<f64>,
    /// Cost exponent `beta`.
    #[arg(long, visible_alias = "beta")]
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_exponent: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    /// Floor values as `lo:hi:step`, a comma list or a single value.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_tau: Option<String>,
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    merit: Option<Value>,
    /// `representation` or `welfare`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    constraint: Option<String>,
    /// Valuation model as JSON (default uniform closed forms).
    #[arg(long, value_parser = json_arg)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<Value>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CalibrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    r_obs: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

/// A list of values given as a number, an array, or text (`lo:hi:step`, `a,b,c`, `x`).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RangeSpec {
    One(f64),
    List(Vec<f64>),
    Text(String),
}

impl RangeSpec {
    fn values(&self, what: &str) -> CliResult<Vec<f64>> {
        let bad = |m: String| CliError::Config(format!("{what}: {m}"));
        match self {
            RangeSpec::One(x) => Ok(vec![*x]),
            RangeSpec::List(v) if !v.is_empty() => Ok(v.clone()),
            RangeSpec::List(_) => Err(bad("empty list".into())),
            RangeSpec::Text(s) => {
                let num = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("cannot parse {t:?} as a number")))
                };
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    [lo, hi, step] => {
                        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
                        if !(step > 0.0) || !(hi >= lo) {
                            return Err(bad(format!("range {s:?} needs lo <= hi and step > 0")));
                        }
                        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
                        if count > 10_000_000 {
                            return Err(bad(format!("range {s:?} has too many points")));
                        }
                        Ok((0..count).map(|i| lo + step * i as f64).collect())
                    }
                    [_] => s.split(',').map(num).collect(),
                    _ => Err(bad(format!("expected lo:hi:step, got {s:?}"))),
                }
            }
        }
    }
}

fn unit_uniform() -> DensitySpec {
    DensitySpec::uniform(0.0, 1.0)
}
fn zero_ability() -> DensitySpec {
    DensitySpec::point_mass(0.0)
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveParams {
    contest: Option<ContestSpec>,
    #[serde(default = "unit_uniform")]
    p1: DensitySpec,
    #[serde(default = "zero_ability")]
    ability: DensitySpec,
    #[serde(default = "one")]
    rho: f64,
    c: Option<f64>,
    #[serde(default = "half")]
    alpha: f64,
    n: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsParams {
    contest: Option<ContestSpec>,
    #[serde(default = "unit_uniform")]
    p1: DensitySpec,
    #[serde(default = "zero_ability")]
    ability: DensitySpec,
    #[serde(default = "one")]
    rho: f64,
    c: Option<f64>,
    #[serde(default = "half")]
    alpha: f64,
    #[serde(default)]
    merit: MeritFn,
}

fn build_contest(
    contest: &Option<ContestSpec>,
    p1: &DensitySpec,
    ability: &DensitySpec,
    rho: f64,
    c: Option<f64>,
    alpha: f64,
) -> CliResult<ContestSpec> {
    match contest {
        Some(spec) => {
            let mut spec = spec.clone();
            if let Some(c) = c {
                spec.selection_fraction = c;
            }
            Ok(spec)
        }
        None => {
            let c = c.ok_or_else(|| CliError::Config("missing selection fraction `c`".into()))?;
            Ok(ContestSpec::two_group(p1.clone(), rho, alpha, ability.clone(), c))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepParams {
    #[serde(default = "default_rho_range")]
    rho: RangeSpec,
    c: RangeSpec,
    #[serde(default = "default_alpha_range")]
    alpha: RangeSpec,
    #[serde(default = "unit_uniform")]
    p1: DensitySpec,
    #[serde(default = "zero_ability")]
    ability: DensitySpec,
    #[serde(default)]
    merit: MeritFn,
}

fn default_rho_range() -> RangeSpec {
    RangeSpec::Text("0.01:1:0.01".into())
}
fn default_alpha_range() -> RangeSpec {
    RangeSpec::One(0.5)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsParams {
    n: u64,
    #[serde(default = "default_dyn_rho")]
    rho: f64,
    #[serde(default = "default_dyn_c")]
    c: f64,
    #[serde(default = "default_grid")]
    m_v: usize,
    #[serde(default = "default_grid")]
    m_e: usize,
    #[serde(default = "default_iterations")]
    iterations: usize,
    step: Option<f64>,
    trace: Option<PathBuf>,
}

fn default_dyn_rho() -> f64 {
    0.8
}
fn default_dyn_c() -> f64 {
    0.2
}
fn default_grid() -> usize {
    101
}
fn default_iterations() -> usize {
    500
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateParams {
    n: u64,
    #[serde(default = "one")]
    rho: f64,
    c: f64,
    #[serde(default = "half")]
    alpha: f64,
    #[serde(default = "unit_uniform")]
    p1: DensitySpec,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    policy: PolicyChoice,
    policy_spec: Option<SimulationPolicy>,
    #[serde(default = "default_deviation_grid")]
    deviation_grid: usize,
    #[serde(default = "default_probe_points")]
    probe_points: usize,
}

fn default_trials() -> usize {
    1000
}
fn default_deviation_grid() -> usize {
    100
}
fn default_probe_points() -> usize {
    25
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterveneParams {
    #[serde(default = "default_base_rho")]
    rho: f64,
    #[serde(default = "default_base_c")]
    c: f64,
    #[serde(default = "default_base_alpha")]
    alpha: f64,
    #[serde(default = "default_cost_coeff")]
    cost_coeff: f64,
    #[serde(default = "default_cost_exponent")]
    cost_exponent: f64,
    tau: Option<f64>,
    sweep_tau: Option<RangeSpec>,
    #[serde(default)]
    merit: MeritFn,
    #[serde(default)]
    constraint: RatioConstraint,
    #[serde(default)]
    model: ValuationModel,
}

fn default_base_rho() -> f64 {
    0.882
}
fn default_base_c() -> f64 {
    0.268
}
fn default_base_alpha() -> f64 {
    0.228
}
fn default_cost_coeff() -> f64 {
    5.0
}
fn default_cost_exponent() -> f64 {
    1.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrateParams {
    r_obs: f64,
    c: f64,
    alpha: f64,
}

/// Where and how a command writes its main artifact.
struct Sink<'a> {
    output: Option<PathBuf>,
    format: Format,
    default_dir: Option<&'a Path>,
    command: &'static str,
}

impl Sink<'_> {
    fn ext(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn path(&self) -> Option<PathBuf> {
        self.output.clone().or_else(|| {
            self.default_dir
                .map(|d| d.join(format!("{}.{}", self.command, self.ext())))
        })
    }

    fn write(&self, content: &str, stdout: &mut dyn Write) -> CliResult<()> {
        match self.path() {
            Some(p) => write_file(&p, content),
            None => stdout
                .write_all(content.as_bytes())
                .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}"))),
        }
    }
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, content).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>, command: &str) -> CliResult<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Config("config must be a JSON object".into()));
    };
    if let Some(cmd) = map.remove("command") {
        if cmd.as_str() != Some(command) {
            return Err(CliError::Config(format!(
                "config is for command {cmd}, not {command:?}"
            )));
        }
    }
    Ok(map)
}

/// Overlay flags on the config file and split off the output settings.
fn resolve<A: Serialize, P: DeserializeOwned>(
    flags: &A,
    common: &Common,
    command: &'static str,
    default_dir: Option<&Path>,
) -> CliResult<(P, Option<PathBuf>, Format)> {
    let mut map = load_config(common.config.as_deref(), command)?;
    let Value::Object(overlay) = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))? else {
        unreachable!("flag structs serialize to objects")
    };
    map.extend(overlay);
    let invalid = |e: serde_json::Error| CliError::Config(format!("invalid {command} config: {e}"));
    let output = map
        .remove("output")
        .map(serde_json::from_value::<PathBuf>)
        .transpose()
        .map_err(invalid)?;
    let format = map
        .remove("format")
        .map(serde_json::from_value::<Format>)
        .transpose()
        .map_err(invalid)?
        .unwrap_or_default();
    let params = serde_json::from_value(Value::Object(map)).map_err(invalid)?;
    // Relative outputs from a config file resolve against the default directory, if any.
    let output = output.map(|p| match default_dir {
        Some(d) if p.is_relative() && common.output.is_none() => d.join(p),
        _ => p,
    });
    Ok((params, output, format))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Config(e.to_string()))
}

fn cmd_solve(args: &SolveArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (p, output, format): (SolveParams, _, _) = resolve(args, &args.common, "solve", dir)?;
    let spec = build_contest(&p.contest, &p.p1, &p.ability, p.rho, p.c, p.alpha)?;
    let mut policy = solve_threshold(&spec)?;
    if let Some(n) = p.n {
        policy = with_finite_shift(&policy, &spec, n)?;
    }
    let content = match format {
        Format::Json => to_json(&policy)?,
        Format::Csv => {
            let mut header = vec!["t".to_string(), "n".into(), "delta_n".into(), "epsilon_n".into()];
            header.extend((1..=policy.per_group_thresholds.len()).map(|i| format!("theta_{i}")));
            let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
            let mut row = vec![
                fmt_sig(policy.t),
                policy.n.map(|n| n.to_string()).unwrap_or_default(),
                opt(policy.delta_n),
                opt(policy.epsilon_n),
            ];
            row.extend(policy.per_group_thresholds.iter().map(|x| fmt_sig(*x)));
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
    };
    Sink { output, format, default_dir: dir, command: "solve" }.write(&content, stdout)
}

fn cmd_metrics(args: &MetricsArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (p, output, format): (MetricsParams, _, _) = resolve(args, &args.common, "metrics", dir)?;
    let spec = build_contest(&p.contest, &p.p1, &p.ability, p.rho, p.c, p.alpha)?;
    let policy = solve_threshold(&spec)?;
    let report = general_metrics(&spec, &policy, &p.merit)?;
    let content = match format {
        Format::Json => to_json(&json!({ "t": policy.t, "metrics": report }))?,
        Format::Csv => {
            let (rho, alpha) = if p.contest.is_some() {
                (String::new(), String::new())
            } else {
                (fmt_sig(p.rho), fmt_sig(p.alpha))
            };
            let row = [
                rho,
                fmt_sig(spec.c()),
                alpha,
                fmt_sig(policy.t),
                fmt_sig(report.rep_ratio),
                fmt_sig(report.welfare_ratio),
                fmt_sig(report.avg_revenue),
            ];
            format!("{}\n{}\n", MetricsReport::CSV_HEADER, row.join(","))
        }
    };
    Sink { output, format, default_dir: dir, command: "metrics" }.write(&content, stdout)
}

fn cmd_sweep(args: &SweepArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (p, output, format): (SweepParams, _, _) = resolve(args, &args.common, "sweep", dir)?;
    let rhos = p.rho.values("rho")?;
    let cs = p.c.values("c")?;
    let alphas = p.alpha.values("alpha")?;
    let mut points = Vec::with_capacity(rhos.len() * cs.len() * alphas.len());
    for &rho in &rhos {
        for &c in &cs {
            points.extend(alphas.iter().map(|&alpha| (rho, c, alpha)));
        }
    }
    let closed = p.p1.as_uniform() == Some((0.0, 1.0)) && p.ability.as_point_mass() == Some(0.0);
    let rows: Vec<crate::error::Result<(f64, f64, f64, f64, MetricsReport)>> = points
        .par_iter()
        .map(|&(rho, c, alpha)| {
            if closed {
                let m = uniform_metrics(rho, c, alpha, &p.merit)?;
                Ok((rho, c, alpha, uniform_closed_threshold(rho, c, alpha), m))
            } else {
                let spec = ContestSpec::two_group(p.p1.clone(), rho, alpha, p.ability.clone(), c);
                let policy = solve_threshold(&spec)?;
                let m = general_metrics(&spec, &policy, &p.merit)?;
                Ok((rho, c, alpha, policy.t, m))
            }
        })
        .collect();
    let rows = rows.into_iter().collect::<crate::error::Result<Vec<_>>>()?;
    let content = match format {
        Format::Csv => {
            let mut out = format!("{}\n", MetricsReport::CSV_HEADER);
            for (rho, c, alpha, t, m) in &rows {
                out.push_str(&m.csv_row(*rho, *c, *alpha, *t));
                out.push('\n');
            }
            out
        }
        Format::Json => to_json(
            &rows
                .iter()
                .map(|(rho, c, alpha, t, m)| json!({"rho": rho, "c": c, "alpha": alpha, "t": t, "metrics": m}))
                .collect::<Vec<_>>(),
        )?,
    };
    Sink { output, format, default_dir: dir, command: "sweep" }.write(&content, stdout)
}

fn cmd_dynamics(args: &DynamicsArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (p, output, format): (DynamicsParams, _, _) = resolve(args, &args.common, "dynamics", dir)?;
    if p.n < 2 {
        return Err(ContestError::Domain(format!("n = {} must be at least 2", p.n)).into());
    }
    let n1 = p.n / 2;
    let contest = FiniteContest {
        n1,
        n2: p.n - n1,
        k: (p.c * p.n as f64).floor() as u64,
        p1: DensitySpec::uniform(0.0, 1.0),
        p2: DensitySpec::biased(DensitySpec::uniform(0.0, 1.0), p.rho),
        seed: 0,
    };
    let hyper = DynamicsHyper {
        m_v: p.m_v,
        m_e: p.m_e,
        iterations: p.iterations,
        step: p.step,
    };
    let trace = run_dynamics(&contest, p.rho, p.c, &hyper)?;
    let sink = Sink { output, format, default_dir: dir, command: "dynamics" };
    let content = match format {
        Format::Csv => trace.final_policies_csv(),
        Format::Json => to_json(&json!({
            "t": trace.t,
            "final_policies": trace.final_policies(),
            "delta": trace.delta,
        }))?,
    };
    sink.write(&content, stdout)?;
    let trace_path = p.trace.or_else(|| {
        sink.path().map(|main| {
            let stem = main.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            main.with_file_name(format!("{stem}_trace.csv"))
        })
    });
    if let Some(path) = trace_path {
        write_file(&path, &trace.trace_csv())?;
    }
    Ok(())
}

const SIMULATE_CSV_HEADER: &str = "trials,r_R,r_R_se,r_S,r_S_se,RV,RV_se,max_regret,max_regret_se,\
deviation_win_prob_below_t,deviation_win_prob_below_t_se";

fn cmd_simulate(args: &SimulateArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (p, output, format): (SimulateParams, _, _) = resolve(args, &args.common, "simulate", dir)?;
    let n2 = (p.alpha * p.n as f64).round() as u64;
    let contest = FiniteContest {
        n1: p.n.saturating_sub(n2),
        n2,
        k: (p.c * p.n as f64).floor() as u64,
        p1: p.p1.clone(),
        p2: DensitySpec::biased(p.p1.clone(), p.rho),
        seed: p.seed,
    };
    let policy = match p.policy_spec {
        Some(policy) => policy,
        None => {
            let spec = ContestSpec::two_group(p.p1.clone(), p.rho, p.alpha, DensitySpec::point_mass(0.0), p.c);
            let mut policy = solve_threshold(&spec)?;
            if p.policy == PolicyChoice::Shifted {
                policy = with_finite_shift(&policy, &spec, p.n)?;
            }
            SimulationPolicy::Threshold { policy }
        }
    };
    let options = SimulationOptions {
        trials: p.trials,
        deviation_grid: p.deviation_grid,
        probe_points: p.probe_points,
        probe_efforts: Vec::new(),
    };
    let report = simulate_contest(&contest, &policy, &options)?;
    let content = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
            let row = [
                report.trials.to_string(),
                fmt_sig(report.rep_ratio),
                fmt_sig(report.rep_ratio_se),
                fmt_sig(report.welfare_ratio),
                fmt_sig(report.welfare_ratio_se),
                fmt_sig(report.avg_revenue),
                fmt_sig(report.avg_revenue_se),
                fmt_sig(report.max_regret_estimate),
                fmt_sig(report.max_regret_se),
                opt(report.deviation_win_prob_below_t),
                opt(report.deviation_win_prob_below_t_se),
            ];
            format!("{SIMULATE_CSV_HEADER}\n{}\n", row.join(","))
        }
    };
    Sink { output, format, default_dir: dir, command: "simulate" }.write(&content, stdout)
}

fn cmd_intervene(args: &InterveneArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (p, output, format): (InterveneParams, _, _) = resolve(args, &args.common, "intervene", dir)?;
    let spec = InterventionSpec {
        rho: p.rho,
        c: p.c,
        alpha: p.alpha,
        cost_coeff: p.cost_coeff,
        cost_exponent: p.cost_exponent,
        merit: p.merit,
        tau: p.tau.unwrap_or(1.0),
        model: p.model,
        constraint: p.constraint,
    };
    let content = match (&p.sweep_tau, p.tau) {
        (Some(range), _) => {
            let taus = range.values("sweep_tau")?;
            spec.with_tau(taus[0]).validate()?;
            let solutions = sweep_tau(&spec, &taus);
            match format {
                Format::Csv => sweep_csv(&taus, &solutions),
                Format::Json => {
                    let rows: Vec<Value> = taus
                        .iter()
                        .zip(&solutions)
                        .map(|(tau, s)| match s {
                            Ok(s) => json!({"tau": tau, "solution": s}),
                            Err(e) => json!({"tau": tau, "error": e.name(), "message": e.to_string()}),
                        })
                        .collect();
                    to_json(&json!({
                        "solutions": rows,
                        "crossover_tau": crossover_tau(&taus, &solutions, CROSSOVER_DELTA_RHO),
                    }))?
                }
            }
        }
        (None, Some(tau)) => {
            let s = optimize(&spec)?;
            match format {
                Format::Csv => format!(
                    "{SWEEP_CSV_HEADER}\n{},{},{},{},{}\n",
                    fmt_sig(tau),
                    fmt_sig(s.delta_rho),
                    fmt_sig(s.delta_c),
                    fmt_sig(s.objective),
                    fmt_sig(s.achieved_r_r)
                ),
                Format::Json => to_json(&s)?,
            }
        }
        (None, None) => return Err(CliError::Config("intervene needs --tau or --sweep-tau".into())),
    };
    Sink { output, format, default_dir: dir, command: "intervene" }.write(&content, stdout)
}

fn cmd_calibrate(args: &CalibrateArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (p, output, format): (CalibrateParams, _, _) = resolve(args, &args.common, "calibrate", dir)?;
    let rho = calibrate_rho(p.r_obs, p.c, p.alpha)?;
    let content = match format {
        Format::Csv => format!("{rho:.6}\n"),
        Format::Json => to_json(&json!({ "rho": rho }))?,
    };
    // The calibrated value always goes to stdout; a file copy is written when requested.
    if output.is_some() {
        Sink { output, format, default_dir: dir, command: "calibrate" }.write(&content, stdout)?;
    }
    stdout
        .write_all(content.as_bytes())
        .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}")))
}

fn dispatch(cli: &Cli, dir: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, dir, stdout),
        Command::Metrics(a) => cmd_metrics(a, dir, stdout),
        Command::Sweep(a) => cmd_sweep(a, dir, stdout),
        Command::Dynamics(a) => cmd_dynamics(a, dir, stdout),
        Command::Simulate(a) => cmd_simulate(a, dir, stdout),
        Command::Intervene(a) => cmd_intervene(a, dir, stdout),
        Command::Calibrate(a) => cmd_calibrate(a, dir, stdout),
    }
}

/// Run with an explicit default output directory; returns the process exit code.
pub fn run_with<I, T>(args: I, default_dir: Option<&Path>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            let rendered = e.render().to_string();
            let _ = write!(stderr, "{rendered}");
            let first = rendered.lines().next().unwrap_or_default();
            let err = CliError::Config(first.trim_start_matches("error: ").to_string());
            let _ = writeln!(stderr, "{}", err.record());
            return err.exit_code();
        }
    };
    match dispatch(&cli, default_dir, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.record());
            e.exit_code()
        }
    }
}

/// Run with the default output directory taken from `CONTEST_OUTPUT_DIR`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let dir = std::env::var_os(OUTPUT_DIR_ENV)
        .filter(|d| !d.is_empty())
        .map(PathBuf::from);
    run_with(args, dir.as_deref(), stdout, stderr)
}
