//! Turning a configuration into a measured evaluation: mold rendering,
//! subprocess execution under a timeout, metric extraction and the derived
//! energy metrics.

mod exec;
mod metrics;
mod mold;

use std::time::Duration;

use thiserror::Error;

pub use exec::{execute_with_timeout, ExecOutcome, ExecRequest, ScriptEvaluator};
pub use metrics::{
    aggregate_energy, compute_edp, default_timeout, last_match, parse_metrics_file, MetricKind,
    MetricSource, MetricSpec, NodeEnergy, TIMEOUT_FACTOR,
};
pub use mold::{placeholders, render_template, CodeMold, MoldError, RenderedMold};

use crate::optimizer::Direction;

/// Penalty assigned to timed-out or failed maximize-direction evaluations
/// when none is configured.
pub const DEFAULT_MAXIMIZE_PENALTY: f64 = -1.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("metric: {0}")]
    Metric(String),
    #[error(transparent)]
    Mold(#[from] MoldError),
    #[error("preparing {path}: {source}")]
    Setup {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Objective recorded for a timed-out evaluation: the timeout itself (in
/// seconds) for minimize metrics, the penalty for maximize metrics.
pub fn timeout_objective(direction: Direction, timeout: Duration, penalty: f64) -> f64 {
    match direction {
        Direction::Minimize => timeout.as_secs_f64(),
        Direction::Maximize => penalty,
    }
}
