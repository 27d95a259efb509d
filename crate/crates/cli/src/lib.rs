//! `dbf` command line: scenario runs, parameter sweeps, theory bounds and
//! connectivity checks.

pub mod config;
pub mod edges;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dbf_core::bounds::{delta_max, kappa, robust_delta_max, robust_delta_min, ConvergenceParams};
use dbf_core::topology::{local_degree_matrix, sigma_m_with_window, Clause};
use dbf_core::{check_assumption1, sigma_m_bound, AdjacencySchedule, Digraph};
use dbf_sim::metrics::format_float;
use dbf_sim::{
    run_benchmark_scenario1, run_benchmark_scenario2, run_formation, run_multiloop, RunMetrics,
};
use serde_json::{json, Value};

use config::{BoundsConfig, Overrides, RunConfig, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unusable configuration or input files; exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
    /// The input was valid but a checked property does not hold; exit code 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Failed(_) => 1,
        }
    }
}

impl From<dbf_sim::SimError> for CliError {
    fn from(e: dbf_sim::SimError) -> Self {
        match e {
            dbf_sim::SimError::ConfigInvalid(m) => {
                CliError::Config(format!("invalid configuration: {m}"))
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "dbf",
    version,
    about = "Distributed Bayesian filtering simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write metrics.csv, summary.json and config.json.
    Run(RunArgs),
    /// Print step-size, accuracy and transient bounds.
    Bounds(BoundsArgs),
    /// Check a communication schedule given as edge-list files.
    GraphCheck(GraphCheckArgs),
    /// Run a scenario once per value of one configuration key.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    /// Time step of the selected scenario.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set benchmark.particles=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            scenario: self.scenario,
            dt: self.dt,
            seed: self.seed,
            out: self.out.clone(),
            set: self.set.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Dotted configuration key, e.g. `benchmark.dt` or `multiloop.n_loop`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub values: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// JSON configuration file; its `bounds` section supplies defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub theta_l: Option<f64>,
    #[arg(long)]
    pub sigma_m: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub d1: Option<f64>,
    #[arg(long)]
    pub eps_u: Option<f64>,
    #[arg(long)]
    pub eps_l: Option<f64>,
    /// Smallest realizable step size; enables the accuracy-floor check.
    #[arg(long)]
    pub dt_min: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GraphCheckArgs {
    /// Edge-list file; repeat to give a periodic schedule, one file per step.
    #[arg(long = "edges", required = true)]
    pub edges: Vec<PathBuf>,
    /// Agent count; defaults to the largest index plus one.
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match dispatch(&cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            let kind = match e {
                CliError::Config(_) => "configuration error",
                CliError::Runtime(_) => "error",
                CliError::Failed(_) => "check failed",
            };
            eprintln!("dbf: {kind}: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => cmd_run(a, out),
        Command::Bounds(a) => cmd_bounds(a, out),
        Command::GraphCheck(a) => cmd_graph_check(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
    }
}

/// Metrics plus scenario-specific extras for summary.json.
pub struct Outcome {
    pub metrics: RunMetrics,
    pub extra: Value,
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    Ok(match cfg.scenario {
        Scenario::Benchmark1 => Outcome {
            metrics: run_benchmark_scenario1(&cfg.benchmark)?,
            extra: Value::Null,
        },
        Scenario::Benchmark2 => Outcome {
            metrics: run_benchmark_scenario2(&cfg.benchmark)?,
            extra: Value::Null,
        },
        Scenario::Formation => {
            let r = run_formation(&cfg.formation)?;
            Outcome {
                metrics: r.metrics,
                extra: json!({ "final_positions": r.final_positions }),
            }
        }
        Scenario::Multiloop => Outcome {
            metrics: run_multiloop(&cfg.multiloop)?,
            extra: Value::Null,
        },
    })
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Writes metrics.csv, summary.json and the resolved config.json into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, outcome: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv = dir.join("metrics.csv");
    let f = File::create(&csv).map_err(|e| io_err(&csv, e))?;
    outcome
        .metrics
        .write_csv(BufWriter::new(f))
        .map_err(|e| io_err(&csv, e))?;
    let mut summary = json!({
        "scenario": cfg.scenario.name(),
        "seed": cfg.active_seed(),
        "summary": outcome.metrics.summary,
    });
    if let Value::Object(extra) = &outcome.extra {
        for (k, v) in extra {
            summary[k] = v.clone();
        }
    }
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("config.json"), cfg)
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.config.config.as_deref(), &a.config.overrides())?;
    let dir = cfg.output_dir();
    let outcome = execute(&cfg)?;
    write_run(&dir, &cfg, &outcome)?;
    let w = |e| CliError::Runtime(format!("stdout: {e}"));
    writeln!(out, "wrote {}", dir.display()).map_err(w)?;
    for (k, v) in &outcome.metrics.summary {
        writeln!(out, "{k:<28} {v}").map_err(w)?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.values.is_empty() {
        return Err(CliError::Config("--values needs at least one value".into()));
    }
    let base = a.config.overrides();
    let base_cfg = RunConfig::load(a.config.config.as_deref(), &base)?;
    // every value must give a valid configuration before anything runs
    let mut configs = Vec::with_capacity(a.values.len());
    for v in &a.values {
        let mut o = base.clone();
        o.set.push(format!("{}={v}", a.param));
        configs.push(RunConfig::load(a.config.config.as_deref(), &o)?);
    }
    let dir = match &base_cfg.out {
        Some(d) => d.clone(),
        None => {
            let root = std::env::var_os(config::OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            root.join(format!("{}-sweep-{}", base_cfg.scenario.name(), a.param))
        }
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_json(&dir.join("config.json"), &base_cfg)?;
    let path = dir.join("sweep.csv");
    let mut csv = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    let mut columns: Option<Vec<String>> = None;
    for (v, cfg) in a.values.iter().zip(&configs) {
        let outcome = execute(cfg)?;
        let summary = &outcome.metrics.summary;
        let cols = columns.get_or_insert_with(|| {
            let cols: Vec<String> = summary.keys().cloned().collect();
            let _ = writeln!(csv, "param,value,{}", cols.join(","));
            cols
        });
        let cells: Vec<String> = cols
            .iter()
            .map(|c| summary.get(c).map(|x| format_float(*x)).unwrap_or_default())
            .collect();
        writeln!(csv, "{},{v},{}", a.param, cells.join(",")).map_err(|e| io_err(&path, e))?;
        csv.flush().map_err(|e| io_err(&path, e))?;
        writeln!(out, "{}={v} done", a.param).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    writeln!(out, "wrote {}", path.display()).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

/// Bounds inputs from the optional config file, `--set` and flags.
pub fn resolve_bounds(a: &BoundsArgs) -> Result<BoundsConfig, CliError> {
    let overrides = Overrides {
        set: a.set.clone(),
        ..Default::default()
    };
    let mut value = serde_json::to_value(RunConfig::load(a.config.as_deref(), &overrides)?.bounds)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let flags: [(&str, Option<Value>); 11] = [
        ("n", a.n.map(Value::from)),
        ("b", a.b.map(Value::from)),
        ("theta_l", a.theta_l.map(Value::from)),
        ("sigma_m", a.sigma_m.map(Value::from)),
        ("gamma", a.gamma.map(Value::from)),
        ("delta", a.delta.map(Value::from)),
        ("eta", a.eta.map(Value::from)),
        ("d1", a.d1.map(Value::from)),
        ("eps_u", a.eps_u.map(Value::from)),
        ("eps_l", a.eps_l.map(Value::from)),
        ("dt_min", a.dt_min.map(Value::from)),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            value[k] = v;
        }
    }
    // a γ without σ_m on the command line selects the spectral bound
    if a.gamma.is_some() && a.sigma_m.is_none() {
        value["sigma_m"] = Value::Null;
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid bounds: {e}")))
}

/// Every quantity the `bounds` table prints.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BoundsReport {
    pub n: usize,
    pub b: usize,
    pub window: usize,
    pub sigma_m: f64,
    pub sigma_m_bound: Option<f64>,
    pub delta: f64,
    pub delta_t: f64,
    pub delta_min: Option<f64>,
    pub kappa: usize,
}

pub fn compute_bounds(c: &BoundsConfig) -> Result<BoundsReport, CliError> {
    let cfg_err = |e: dbf_core::DbfError| CliError::Config(e.to_string());
    let bound = c
        .gamma
        .map(|g| sigma_m_bound(c.n, g))
        .transpose()
        .map_err(cfg_err)?;
    let sigma_m = c
        .sigma_m
        .or(bound)
        .ok_or_else(|| CliError::Config("either sigma_m or gamma must be given".into()))?;
    let p = ConvergenceParams {
        n: c.n,
        b: c.b,
        theta_l: c.theta_l,
        sigma_m,
        delta: c.delta,
        eta: c.eta,
        d1: c.d1,
        eps_u: c.eps_u,
        eps_l: c.eps_l,
    };
    p.validate().map_err(cfg_err)?;
    let robust = p.eps_u > 0.0 || p.eps_l > 0.0;
    let delta_t = if robust {
        robust_delta_max(&p)
    } else {
        delta_max(&p)
    }
    .map_err(cfg_err)?;
    let delta_min = match c.dt_min {
        Some(dt) => {
            let floor = robust_delta_min(&p, dt).map_err(cfg_err)?;
            if p.delta <= floor {
                return Err(CliError::Config(format!(
                    "infeasible: delta = {} does not exceed delta_min = {floor} reachable with \
                     step size {dt}; raise delta or lower dt_min",
                    p.delta
                )));
            }
            Some(floor)
        }
        None => None,
    };
    Ok(BoundsReport {
        n: p.n,
        b: p.b,
        window: p.window(),
        sigma_m,
        sigma_m_bound: bound,
        delta: p.delta,
        delta_t,
        delta_min,
        kappa: kappa(&p).map_err(cfg_err)?,
    })
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let r = compute_bounds(&resolve_bounds(a)?)?;
    let w = |e| CliError::Runtime(format!("stdout: {e}"));
    if a.json {
        let text =
            serde_json::to_string_pretty(&r).map_err(|e| CliError::Runtime(e.to_string()))?;
        return writeln!(out, "{text}").map_err(w);
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    let rows = [
        ("N", r.n.to_string()),
        ("b", r.b.to_string()),
        ("window b(N-1)", r.window.to_string()),
        ("sigma_m", r.sigma_m.to_string()),
        ("sigma_m bound", opt(r.sigma_m_bound)),
        ("delta", r.delta.to_string()),
        ("step size", r.delta_t.to_string()),
        ("delta_min", opt(r.delta_min)),
        ("kappa", r.kappa.to_string()),
    ];
    for (k, v) in rows {
        writeln!(out, "{k:<16} {v}").map_err(w)?;
    }
    Ok(())
}

/// Result of `graph-check`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GraphReport {
    pub agents: usize,
    pub snapshots: usize,
    pub b: Option<usize>,
    pub gamma: Option<f64>,
    pub stochastic_residual: f64,
    pub sigma_m: Option<f64>,
    pub sigma_m_bound: Option<f64>,
    /// `(clause, "pass" | "fail" | "skipped")` in clause order.
    pub clauses: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub ok: bool,
}

pub fn check_schedule(
    snapshots: &[Vec<(usize, usize)>],
    agents: Option<usize>,
) -> Result<GraphReport, CliError> {
    let n = agents.unwrap_or_else(|| {
        snapshots
            .iter()
            .flatten()
            .map(|&(i, j)| i.max(j) + 1)
            .max()
            .unwrap_or(0)
    });
    if n == 0 {
        return Err(CliError::Config("no agents: edge lists are empty".into()));
    }
    let mut matrices = Vec::with_capacity(snapshots.len());
    for (s, edges) in snapshots.iter().enumerate() {
        if let Some(&(i, j)) = edges.iter().find(|(i, j)| *i >= n || *j >= n) {
            return Err(CliError::Config(format!(
                "snapshot {s}: edge {i} {j} exceeds {n} agents"
            )));
        }
        let g = Digraph::undirected(n, edges.iter().copied())
            .map_err(|e| CliError::Config(e.to_string()))?;
        matrices.push(local_degree_matrix(&g).map_err(|e| CliError::Config(e.to_string()))?);
    }
    let schedule = AdjacencySchedule::new(matrices).map_err(|e| CliError::Config(e.to_string()))?;
    let report = check_assumption1(&schedule);
    let sigma_m = match report.b {
        Some(b) if n >= 2 => sigma_m_with_window(&schedule, b).ok(),
        _ => None,
    };
    let sigma_m_bound = report.gamma.and_then(|g| sigma_m_bound(n, g).ok());
    let clauses = [
        Clause::Connectivity,
        Clause::DoublyStochastic,
        Clause::Gamma,
        Clause::Primitivity,
    ]
    .into_iter()
    .map(|c| {
        let status = if report.violations.contains(&c) {
            "fail"
        } else if report.b.is_none() && matches!(c, Clause::Gamma | Clause::Primitivity) {
            "skipped"
        } else {
            "pass"
        };
        (c.to_string(), status.to_string())
    })
    .collect();
    Ok(GraphReport {
        agents: n,
        snapshots: snapshots.len(),
        b: report.b,
        gamma: report.gamma,
        stochastic_residual: report.stochastic_residual,
        sigma_m,
        sigma_m_bound,
        clauses,
        warnings: report.warnings,
        ok: report.ok,
    })
}

fn cmd_graph_check(a: &GraphCheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let snapshots = a
        .edges
        .iter()
        .map(|p| edges::read_edge_list(p))
        .collect::<Result<Vec<_>, _>>()?;
    let r = check_schedule(&snapshots, a.agents)?;
    let w = |e| CliError::Runtime(format!("stdout: {e}"));
    if a.json {
        let text =
            serde_json::to_string_pretty(&r).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out, "{text}").map_err(w)?;
    } else {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
        writeln!(out, "agents           {}", r.agents).map_err(w)?;
        writeln!(out, "snapshots        {}", r.snapshots).map_err(w)?;
        writeln!(
            out,
            "b                {}",
            r.b.map(|b| b.to_string()).unwrap_or_else(|| "-".into())
        )
        .map_err(w)?;
        writeln!(out, "gamma            {}", opt(r.gamma)).map_err(w)?;
        writeln!(out, "residual         {:e}", r.stochastic_residual).map_err(w)?;
        writeln!(out, "sigma_m          {}", opt(r.sigma_m)).map_err(w)?;
        writeln!(out, "sigma_m bound    {}", opt(r.sigma_m_bound)).map_err(w)?;
        for (c, status) in &r.clauses {
            writeln!(out, "{status:<8} {c}").map_err(w)?;
        }
        for warning in &r.warnings {
            writeln!(out, "warning: {warning}").map_err(w)?;
        }
    }
    if r.ok {
        Ok(())
    } else {
        let failed: Vec<&str> = r
            .clauses
            .iter()
            .filter(|(_, status)| status == "fail")
            .map(|(c, _)| c.as_str())
            .collect();
        Err(CliError::Failed(format!(
            "schedule violates {}",
            failed.join("; ")
        )))
    }
}
