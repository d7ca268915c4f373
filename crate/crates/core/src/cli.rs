//! Command-line front end: `crb`, `estimate` and `bench` subcommands driven
//! by JSON config files with `key=value` overrides.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::{format_table, generate_paths, monte_carlo, write_csv, write_outputs, ScenarioConfig};
use crate::channel::{synthesize, PathSet};
use crate::error::Error;
use crate::estimation::{build_dictionaries, matching_pursuit, DirectionGrid, EstimatedAtom, EstimationRow, Strategy};
use crate::fim::{crb_report, CrbReport, DEFAULT_CONDITION_THRESHOLD};
use crate::geometry::{ArrayGeometry, Axis, GeometrySpec, Plane};
use crate::observation::{observe, ObservationSpec};

pub const THREADS_ENV: &str = "MIMO_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mimo-lab", version, about = "MIMO channel estimation bounds and benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fisher information and relative CRB of a path configuration.
    Crb(CommonArgs),
    /// One noisy observation followed by greedy estimation.
    Estimate(CommonArgs),
    /// Monte-Carlo comparison of the estimators.
    Bench(CommonArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (bench: stem for .csv and .json). Stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed (`seed`, or `base_seed` for bench).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to MIMO_LAB_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Exit with code 3 when a Fisher matrix is ill-conditioned.
    #[arg(long)]
    pub strict: bool,
    /// Also print an aligned results table.
    #[arg(long)]
    pub emit_table: bool,
    /// `dotted.key=value` config overrides; values are parsed as JSON when possible.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("Fisher information matrix is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::IllConditioned(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

/// Grid sizes for `estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { m: 400, n: 400 }
    }
}

/// Clustered path generator used when no explicit paths are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_clusters: usize,
    pub paths_per_cluster: usize,
    pub angular_spread_deg: f64,
    pub gain_decay_db_per_cluster: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        Self {
            n_clusters: d.n_clusters,
            paths_per_cluster: d.paths_per_cluster,
            angular_spread_deg: d.angular_spread_deg,
            gain_decay_db_per_cluster: d.gain_decay_db_per_cluster,
        }
    }
}

/// Strategy selection for `estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyChoice {
    Joint,
    Sequential,
    #[default]
    Both,
}

impl StrategyChoice {
    pub fn strategies(self) -> Vec<Strategy> {
        match self {
            StrategyChoice::Joint => vec![Strategy::Joint],
            StrategyChoice::Sequential => vec![Strategy::Sequential],
            StrategyChoice::Both => vec![Strategy::Joint, Strategy::Sequential],
        }
    }
}

/// Config shared by `crb` and `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rx_array: GeometrySpec,
    pub tx_array: GeometrySpec,
    /// Explicit paths; when absent they are drawn from `generator`.
    pub paths: Option<PathSet>,
    pub generator: GeneratorSpec,
    pub observation: ObservationSpec,
    pub seed: u64,
    pub grid: GridSpec,
    pub p_budget: usize,
    pub strategy: StrategyChoice,
    pub condition_threshold: f64,
    pub include_blocks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rx_array: GeometrySpec::Upa {
                nx: 4,
                ny: 4,
                spacing: 0.5,
                plane: Plane::Yz,
            },
            tx_array: GeometrySpec::Upa {
                nx: 8,
                ny: 8,
                spacing: 0.5,
                plane: Plane::Yz,
            },
            paths: None,
            generator: GeneratorSpec::default(),
            observation: ObservationSpec {
                target_snr_db: Some(10.0),
                ..ObservationSpec::default()
            },
            seed: 0,
            grid: GridSpec::default(),
            p_budget: 10,
            strategy: StrategyChoice::Both,
            condition_threshold: DEFAULT_CONDITION_THRESHOLD,
            include_blocks: false,
        }
    }
}

/// Fully validated inputs of `crb`/`estimate`.
pub struct Prepared {
    pub config: RunConfig,
    pub g_r: ArrayGeometry,
    pub g_t: ArrayGeometry,
    pub paths: PathSet,
}

impl RunConfig {
    pub fn prepare(self) -> Result<Prepared, CliError> {
        let g_r = self.rx_array.build().map_err(invalid)?;
        let g_t = self.tx_array.build().map_err(invalid)?;
        self.observation
            .validate(g_r.n_antennas(), g_t.n_antennas())
            .map_err(invalid)?;
        if !(self.condition_threshold > 1.0) {
            return Err(invalid("condition_threshold must exceed 1"));
        }
        if self.p_budget == 0 {
            return Err(invalid("p_budget must be at least 1"));
        }
        if self.grid.m == 0 || self.grid.n == 0 {
            return Err(invalid("grid sizes must be positive"));
        }
        let paths = match &self.paths {
            Some(p) => p.clone(),
            None => {
                let scenario = self.scenario();
                scenario.validate().map_err(invalid)?;
                generate_paths(&scenario, &g_r, &g_t, self.seed)?
            }
        };
        Ok(Prepared {
            config: self,
            g_r,
            g_t,
            paths,
        })
    }

    fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            tx_array: self.tx_array.clone(),
            rx_array: self.rx_array.clone(),
            n_clusters: self.generator.n_clusters,
            paths_per_cluster: self.generator.paths_per_cluster,
            angular_spread_deg: self.generator.angular_spread_deg,
            gain_decay_db_per_cluster: self.generator.gain_decay_db_per_cluster,
            ..ScenarioConfig::default()
        }
    }
}

/// Sets `dotted.key` in a JSON object tree.
///
/// Objects missing along the way are seeded from the matching part of
/// `defaults`, so overriding one nested field keeps its defaulted siblings.
pub fn apply_override(root: &mut Value, defaults: &Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(invalid(format!("override `{assignment}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut default = Some(defaults);
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            _ => return Err(invalid(format!("override `{key}`: `{part}` is not inside an object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        default = default.and_then(|d| d.get(part));
        node = obj.entry(part.to_string()).or_insert_with(|| match default {
            Some(d @ Value::Object(_)) => d.clone(),
            _ => Value::Object(Default::default()),
        });
    }
    unreachable!("key has at least one part")
}

/// Reads the config file (or `{}`), then applies overrides and the seed flag.
pub fn load_config<T>(args: &CommonArgs, seed_key: &str) -> Result<T, CliError>
where
    T: Default + Serialize + for<'de> Deserialize<'de>,
{
    let mut root = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    if !root.is_object() {
        return Err(invalid("config must be a JSON object"));
    }
    let defaults = serde_json::to_value(T::default()).map_err(Error::from)?;
    for o in &args.overrides {
        apply_override(&mut root, &defaults, o)?;
    }
    if let Some(seed) = args.seed {
        apply_override(&mut root, &defaults, &format!("{seed_key}={seed}"))?;
    }
    serde_json::from_value(root).map_err(invalid)
}

/// `--threads`, else the environment variable, else unset.
pub fn thread_count(args: &CommonArgs) -> Result<Option<usize>, CliError> {
    if let Some(n) = args.threads {
        return if n == 0 { Err(invalid("--threads must be positive")) } else { Ok(Some(n)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Crb(args) => run_crb(&args),
        Command::Estimate(args) => run_estimate(&args),
        Command::Bench(args) => run_bench(&args),
    }
}

pub fn crb_for(p: &Prepared) -> Result<CrbReport, CliError> {
    let h = synthesize(&p.paths, &p.g_r, &p.g_t).vectorized();
    let s = p
        .config
        .observation
        .build(p.g_r.n_antennas(), p.g_t.n_antennas(), Some(&h))?;
    Ok(crb_report(
        &p.paths,
        &p.g_r,
        &p.g_t,
        &s,
        p.config.condition_threshold,
        p.config.include_blocks,
    )?)
}

pub fn run_crb(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: RunConfig = load_config(args, "seed")?;
    thread_count(args)?;
    if cfg.observation.sigma2 == Some(0.0) {
        return Err(invalid("crb needs a positive noise variance"));
    }
    let prepared = cfg.prepare()?;
    let report = crb_for(&prepared)?;
    write_text(
        args.out.as_deref(),
        &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"),
    )?;
    if args.emit_table {
        eprintln!(
            "paths {:>4}  SNR {:>8.2} dB  CRB {:.6e}  3P/SNR {:.6e}  cond {}",
            report.n_p / 6,
            report.snr_db,
            report.crb_relative,
            report.floor_3p_over_snr,
            report
                .condition_number
                .map_or("inf".to_string(), |c| format!("{c:.3e}"))
        );
    }
    if args.strict && report.ill_conditioned {
        let cond = report.condition_number.unwrap_or(f64::INFINITY);
        return Err(CliError::IllConditioned(format!("condition number {cond:.3e}")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    rows: Vec<EstimationRow>,
    runs: Vec<EstimateRun>,
}

#[derive(Debug, Serialize)]
struct EstimateRun {
    strategy: Strategy,
    atoms: Vec<EstimatedAtom>,
    residual_norms: Vec<f64>,
}

fn broadside(g: &ArrayGeometry, side: &str) -> Result<Axis, CliError> {
    g.broadside()
        .ok_or_else(|| invalid(format!("{side} needs a broadside axis for the grid")))
}

pub fn run_estimate(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: RunConfig = load_config(args, "seed")?;
    thread_count(args)?;
    let p = cfg.prepare()?;
    let grid = DirectionGrid::front_hemisphere(
        p.config.grid.m,
        p.config.grid.n,
        broadside(&p.g_r, "rx_array")?,
        broadside(&p.g_t, "tx_array")?,
    )
    .map_err(invalid)?;
    let h = synthesize(&p.paths, &p.g_r, &p.g_t);
    let s = p
        .config
        .observation
        .build(p.g_r.n_antennas(), p.g_t.n_antennas(), Some(&h.vectorized()))?;
    let y = observe(&h, &s, p.config.seed)?.y;
    let dict = build_dictionaries(&grid, &s, &p.g_r, &p.g_t)?;
    let mut out = EstimateOutput {
        rows: Vec::new(),
        runs: Vec::new(),
    };
    for strategy in p.config.strategy.strategies() {
        let r = matching_pursuit(&y, &dict, p.config.p_budget, strategy, Some(&h))?;
        out.rows.push(r.row());
        out.runs.push(EstimateRun {
            strategy,
            atoms: r.atoms,
            residual_norms: r.residual_norms,
        });
    }
    write_text(
        args.out.as_deref(),
        &(serde_json::to_string_pretty(&out).map_err(Error::from)? + "\n"),
    )?;
    if args.emit_table {
        eprintln!("{:<12} {:>4} {:>12} {:>10} {:>14}", "strategy", "P", "rMSE", "time (s)", "score evals");
        for r in &out.rows {
            eprintln!(
                "{:<12} {:>4} {:>12.6} {:>10.4} {:>14}",
                r.strategy.as_str(),
                r.p,
                r.rmse.unwrap_or(f64::NAN),
                r.wall_time_s,
                r.score_evals
            );
        }
    }
    Ok(())
}

pub fn run_bench(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: ScenarioConfig = load_config(args, "base_seed")?;
    let threads = thread_count(args)?;
    cfg.validate().map_err(invalid)?;
    let rows = monte_carlo(&cfg, threads)?;
    match &args.out {
        Some(path) => write_outputs(&rows, &cfg, path)?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    if args.emit_table {
        let table = format_table(&rows);
        if args.out.is_some() {
            print!("{table}");
        } else {
            eprint!("{table}");
        }
    }
    if args.strict {
        if let Some(r) = rows.iter().find(|r| r.ill_conditioned_trials > 0) {
            return Err(CliError::IllConditioned(format!(
                "{} of {} trials",
                r.ill_conditioned_trials, r.trials
            )));
        }
    }
    Ok(())
}
