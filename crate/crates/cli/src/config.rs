//! Run configuration: JSON file, flag overrides and validation.

use std::path::{Path, PathBuf};

use dbf_sim::{BenchmarkConfig, FormationConfig, MultiloopConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Variable naming the directory runs are written under when `--out` is absent.
pub const OUTPUT_ROOT_ENV: &str = "DBF_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Benchmark1,
    Benchmark2,
    Formation,
    Multiloop,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Benchmark1 => "benchmark1",
            Scenario::Benchmark2 => "benchmark2",
            Scenario::Formation => "formation",
            Scenario::Multiloop => "multiloop",
        }
    }
}

/// Inputs of the `bounds` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub n: usize,
    pub b: usize,
    pub theta_l: f64,
    /// Taken from `gamma` through the spectral bound when absent.
    pub sigma_m: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: f64,
    pub eta: f64,
    pub d1: f64,
    pub eps_u: f64,
    pub eps_l: f64,
    /// Smallest realizable step size, for the accuracy floor.
    pub dt_min: Option<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let p = dbf_core::bounds::ConvergenceParams::default();
        Self {
            n: p.n,
            b: p.b,
            theta_l: p.theta_l,
            sigma_m: Some(p.sigma_m),
            gamma: None,
            delta: p.delta,
            eta: p.eta,
            d1: p.d1,
            eps_u: p.eps_u,
            eps_l: p.eps_l,
            dt_min: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Overrides the seed of the selected scenario when set.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub benchmark: BenchmarkConfig,
    pub formation: FormationConfig,
    pub multiloop: MultiloopConfig,
    pub bounds: BoundsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Benchmark1,
            seed: None,
            out: None,
            benchmark: BenchmarkConfig::default(),
            formation: FormationConfig::default(),
            multiloop: MultiloopConfig::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `dotted.key=value` pairs.
    pub set: Vec<String>,
}

impl RunConfig {
    /// Reads `path` (or defaults) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str::<Value>(&text).map_err(|e| {
                    CliError::Config(format!("config {} is not valid JSON: {e}", p.display()))
                })?
            }
            None => Value::Object(Default::default()),
        };
        for kv in &overrides.set {
            let (key, raw) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))?;
            set_path(&mut value, key, parse_value(raw))?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        if let Some(s) = overrides.scenario {
            cfg.scenario = s;
        }
        if let Some(dt) = overrides.dt {
            match cfg.scenario {
                Scenario::Formation => cfg.formation.dt = dt,
                _ => cfg.benchmark.dt = dt,
            }
        }
        if overrides.seed.is_some() {
            cfg.seed = overrides.seed;
        }
        if overrides.out.is_some() {
            cfg.out = overrides.out.clone();
        }
        if let Some(seed) = cfg.seed {
            cfg.benchmark.seed = seed;
            cfg.formation.seed = seed;
            cfg.multiloop.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Validates the section the selected scenario uses.
    pub fn validate(&self) -> Result<(), CliError> {
        let r = match self.scenario {
            Scenario::Benchmark1 | Scenario::Benchmark2 => self.benchmark.validate(),
            Scenario::Formation => self.formation.validate(),
            Scenario::Multiloop => self.multiloop.validate(),
        };
        r.map_err(|e| CliError::Config(e.to_string()))
    }

    /// Seed of the selected scenario.
    pub fn active_seed(&self) -> u64 {
        match self.scenario {
            Scenario::Benchmark1 | Scenario::Benchmark2 => self.benchmark.seed,
            Scenario::Formation => self.formation.seed,
            Scenario::Multiloop => self.multiloop.seed,
        }
    }

    /// `--out`, else `$DBF_OUTPUT_ROOT/<scenario>-seed<seed>`, else `runs/...`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(format!(
            "{}-seed{}",
            self.scenario.name(),
            self.active_seed()
        ))
    }
}

/// JSON literal if it parses as one, else a string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `a.b.c` inside `root`, creating objects along the way.
pub fn set_path(root: &mut Value, key: &str, v: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key {key:?}")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("key {key:?} descends into a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one part")
}
