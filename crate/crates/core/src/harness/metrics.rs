//! Objective extraction and derived energy metrics.

use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::Deserialize;

use super::HarnessError;
use crate::optimizer::Direction;

/// Multiple of the baseline runtime used as the evaluation timeout.
pub const TIMEOUT_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Application figure of merit (throughput), maximized.
    Fom,
    Runtime,
    Energy,
    Edp,
}

impl MetricKind {
    pub fn direction(self) -> Direction {
        match self {
            MetricKind::Fom => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Fom => "fom",
            MetricKind::Runtime => "runtime",
            MetricKind::Energy => "energy",
            MetricKind::Edp => "edp",
        })
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fom" => Ok(MetricKind::Fom),
            "runtime" => Ok(MetricKind::Runtime),
            "energy" => Ok(MetricKind::Energy),
            "edp" => Ok(MetricKind::Edp),
            other => Err(format!("unknown metric kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MetricSource {
    /// Last match of a pattern with one numeric capture group.
    StdoutRegex(Regex),
    /// Per-node energy file; `{eval_dir}` and `{eval_id}` are substituted.
    MetricsFile(String),
    /// Measured wall-clock time of the script.
    WallClock,
}

#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub source: MetricSource,
    /// For EDP: where to read the runtime from; wall-clock time otherwise.
    pub runtime_pattern: Option<Regex>,
}

fn compile(pattern: &str) -> Result<Regex, HarnessError> {
    let re = Regex::new(pattern).map_err(|e| HarnessError::Metric(e.to_string()))?;
    if re.captures_len() < 2 {
        return Err(HarnessError::Metric(format!(
            "pattern `{pattern}` has no capture group"
        )));
    }
    Ok(re)
}

impl MetricSpec {
    pub fn stdout_regex(kind: MetricKind, pattern: &str) -> Result<Self, HarnessError> {
        Self::new(kind, MetricSource::StdoutRegex(compile(pattern)?), None)
    }

    pub fn metrics_file(
        kind: MetricKind,
        path: &str,
        runtime_pattern: Option<&str>,
    ) -> Result<Self, HarnessError> {
        let runtime_pattern = runtime_pattern.map(compile).transpose()?;
        Self::new(kind, MetricSource::MetricsFile(path.to_string()), runtime_pattern)
    }

    pub fn wall_clock() -> Self {
        MetricSpec {
            kind: MetricKind::Runtime,
            source: MetricSource::WallClock,
            runtime_pattern: None,
        }
    }

    pub fn new(
        kind: MetricKind,
        source: MetricSource,
        runtime_pattern: Option<Regex>,
    ) -> Result<Self, HarnessError> {
        let ok = matches!(
            (&kind, &source),
            (MetricKind::Fom, MetricSource::StdoutRegex(_))
                | (MetricKind::Runtime, MetricSource::StdoutRegex(_) | MetricSource::WallClock)
                | (MetricKind::Energy | MetricKind::Edp, MetricSource::MetricsFile(_))
        );
        if !ok {
            return Err(HarnessError::Metric(format!(
                "metric kind `{kind}` cannot be read from this source"
            )));
        }
        Ok(MetricSpec {
            kind,
            source,
            runtime_pattern,
        })
    }

    pub fn direction(&self) -> Direction {
        self.kind.direction()
    }
}

/// Numeric value of the last match of `re` in `text`.
pub fn last_match(re: &Regex, text: &str) -> Option<f64> {
    re.captures_iter(text)
        .filter_map(|c| c.get(1))
        .last()
        .and_then(|m| m.as_str().trim().parse::<f64>().ok())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEnergy {
    pub package_j: f64,
    pub dram_j: f64,
}

/// Mean over nodes of package plus DRAM energy.
pub fn aggregate_energy(per_node: &[NodeEnergy]) -> Result<f64, HarnessError> {
    if per_node.is_empty() {
        return Err(HarnessError::Metric("no per-node energies".into()));
    }
    let mut total = 0.0;
    for n in per_node {
        if !(n.package_j >= 0.0 && n.dram_j >= 0.0) {
            return Err(HarnessError::Metric(format!(
                "negative or non-numeric energy {n:?}"
            )));
        }
        total += n.package_j + n.dram_j;
    }
    Ok(total / per_node.len() as f64)
}

/// Energy-delay product: energy (J) times runtime (s).
pub fn compute_edp(energy_j: f64, runtime_s: f64) -> Result<f64, HarnessError> {
    if !(energy_j >= 0.0 && runtime_s >= 0.0) {
        return Err(HarnessError::Metric(format!(
            "EDP needs non-negative inputs, got energy {energy_j} and runtime {runtime_s}"
        )));
    }
    Ok(energy_j * runtime_s)
}

pub fn default_timeout(baseline_runtime_s: f64) -> Result<f64, HarnessError> {
    if baseline_runtime_s <= 0.0 || !baseline_runtime_s.is_finite() {
        return Err(HarnessError::Metric(format!(
            "baseline runtime must be positive, got {baseline_runtime_s}"
        )));
    }
    Ok(TIMEOUT_FACTOR * baseline_runtime_s)
}

/// Parses `package_energy_j dram_energy_j` lines, one per node. Blank lines
/// and `#` comments are skipped.
pub fn parse_metrics_file(text: &str) -> Result<Vec<NodeEnergy>, HarnessError> {
    let mut nodes = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| s.parse::<f64>().ok().filter(|v| *v >= 0.0);
        match fields.as_slice() {
            [pkg, dram] => match (parse(pkg), parse(dram)) {
                (Some(package_j), Some(dram_j)) => nodes.push(NodeEnergy { package_j, dram_j }),
                _ => {
                    return Err(HarnessError::Metric(format!(
                        "metrics line {}: expected two non-negative numbers",
                        no + 1
                    )))
                }
            },
            _ => {
                return Err(HarnessError::Metric(format!(
                    "metrics line {}: expected 2 fields, found {}",
                    no + 1,
                    fields.len()
                )))
            }
        }
    }
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(p: f64, d: f64) -> NodeEnergy {
        NodeEnergy {
            package_j: p,
            dram_j: d,
        }
    }

    #[test]
    fn energy_aggregation() {
        assert_eq!(aggregate_energy(&[node(100.0, 20.0), node(110.0, 30.0)]).unwrap(), 130.0);
        assert_eq!(aggregate_energy(&[node(250.0, 50.0)]).unwrap(), 300.0);
        assert_eq!(aggregate_energy(&[node(0.0, 0.0), node(0.0, 0.0)]).unwrap(), 0.0);
        assert!(aggregate_energy(&[]).is_err());
        assert!(aggregate_energy(&[node(-1.0, 0.0)]).is_err());
    }

    #[test]
    fn edp() {
        assert_eq!(compute_edp(130.0, 2.0).unwrap(), 260.0);
        assert_eq!(compute_edp(55.0, 0.0).unwrap(), 0.0);
        let energy = 100.0 * 3.0;
        assert_eq!(compute_edp(energy, 3.0).unwrap(), 100.0 * 3.0f64.powi(2));
        assert!(compute_edp(-1.0, 1.0).is_err());
        assert!(compute_edp(1.0, -1.0).is_err());
    }

    #[test]
    fn timeout_rule() {
        assert_eq!(default_timeout(200.0).unwrap(), 300.0);
        assert_eq!(default_timeout(1.0).unwrap(), 1.5);
        assert!(default_timeout(0.0).is_err());
        assert!(default_timeout(-3.0).is_err());
    }

    #[test]
    fn last_match_wins() {
        let re = Regex::new(r"FOM: ([0-9.eE+-]+)").unwrap();
        let out = "FOM: 100 particles/s\nFOM: 562288 particles/s\n";
        assert_eq!(last_match(&re, out), Some(562288.0));
        assert_eq!(last_match(&re, "nothing here"), None);
    }

    #[test]
    fn metrics_file_format() {
        let nodes = parse_metrics_file("100 20\n\n# node 2\n110.5\t30\n").unwrap();
        assert_eq!(nodes, vec![node(100.0, 20.0), node(110.5, 30.0)]);
        assert!(parse_metrics_file("1 2 3").is_err());
        assert!(parse_metrics_file("1 -2").is_err());
        assert!(parse_metrics_file("a b").is_err());
    }

    #[test]
    fn metric_spec_combinations() {
        assert!(MetricSpec::stdout_regex(MetricKind::Fom, "FOM: (\\d+)").is_ok());
        assert!(MetricSpec::stdout_regex(MetricKind::Fom, "FOM: \\d+").is_err());
        assert!(MetricSpec::stdout_regex(MetricKind::Fom, "(").is_err());
        assert!(MetricSpec::stdout_regex(MetricKind::Energy, "(\\d+)").is_err());
        assert!(MetricSpec::metrics_file(MetricKind::Edp, "metrics.txt", None).is_ok());
        assert!(MetricSpec::metrics_file(MetricKind::Fom, "metrics.txt", None).is_err());
        assert_eq!(MetricKind::Fom.direction(), Direction::Maximize);
        assert_eq!(MetricKind::Edp.direction(), Direction::Minimize);
    }
}
