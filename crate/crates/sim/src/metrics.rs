//! Per-tick metric rows and run summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

/// Who a metric row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgentLabel {
    Agent(usize),
    Central,
    Target,
    Network,
}

impl fmt::Display for AgentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentLabel::Agent(i) => write!(f, "{i}"),
            AgentLabel::Central => f.write_str("central"),
            AgentLabel::Target => f.write_str("target"),
            AgentLabel::Network => f.write_str("network"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub tick: usize,
    pub agent: AgentLabel,
    pub metric: &'static str,
    pub value: f64,
}

/// Everything a run produces besides its configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<MetricRow>,
    pub summary: BTreeMap<String, f64>,
}

impl RunMetrics {
    pub fn push(&mut self, tick: usize, agent: AgentLabel, metric: &'static str, value: f64) {
        self.rows.push(MetricRow {
            tick,
            agent,
            metric,
            value,
        });
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    /// Values of `metric` for `agent`, in tick order.
    pub fn series(&self, agent: AgentLabel, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.agent == agent && r.metric == metric)
            .map(|r| (r.tick, r.value))
            .collect()
    }

    /// Writes `tick,agent,metric,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tick,agent,metric,value")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.tick,
                r.agent,
                r.metric,
                format_float(r.value)
            )?;
        }
        out.flush()
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Mean of `values[from..]`; `NaN` when empty.
pub fn tail_mean(values: &[f64], from: usize) -> f64 {
    let tail = &values[from.min(values.len())..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
