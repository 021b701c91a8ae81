//! Manager/worker evaluation engine.
//!
//! One manager thread owns the optimizer and the results sink; `n_workers`
//! worker threads each evaluate one configuration at a time and send the
//! outcome back over a channel. The first dispatch fills every worker; after
//! that each completion is told to the optimizer and the freed worker gets a
//! fresh ask, until `max_evals` have been dispatched.

use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use thiserror::Error;

use crate::harness::{timeout_objective, DEFAULT_MAXIMIZE_PENALTY};
use crate::optimizer::{
    default_n_initial, Direction, EvalStatus, Optimizer, OptimizerError, OptimizerSettings,
    DEFAULT_CANDIDATE_POOL, DEFAULT_KAPPA,
};
use crate::space::{Configuration, ParameterSpace};
use crate::store::{EvaluationRecord, RecordSink};
use crate::surrogate::ForestParams;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid campaign: {0}")]
    InvalidCampaign(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

/// An evaluator could not even start an evaluation (for example, its
/// working directory could not be created). Aborts the campaign.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("evaluator setup failed: {0}")]
pub struct EvaluatorError(pub String);

/// Everything a worker hands to the evaluator for one evaluation.
#[derive(Debug, Clone)]
pub struct EvalJob<'a> {
    pub eval_id: u64,
    pub worker_id: usize,
    pub worker_label: &'a str,
    pub config: &'a Configuration,
    pub timeout: Duration,
    pub penalty: f64,
    pub direction: Direction,
    pub campaign_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// User orientation.
    pub objective: f64,
    pub status: EvalStatus,
    pub elapsed: Duration,
}

impl EvalOutcome {
    pub fn timeout(job: &EvalJob<'_>, elapsed: Duration) -> Self {
        EvalOutcome {
            objective: timeout_objective(job.direction, job.timeout, job.penalty),
            status: EvalStatus::Timeout,
            elapsed,
        }
    }
}

/// Black-box evaluation of one configuration. Implementations must honor
/// `job.timeout` themselves and report `EvalStatus::Timeout` when it is hit.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvalOutcome, EvaluatorError>;
}

impl<F> Evaluator for F
where
    F: Fn(&EvalJob<'_>) -> Result<EvalOutcome, EvaluatorError> + Send + Sync,
{
    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvalOutcome, EvaluatorError> {
        self(job)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub n_workers: usize,
    pub max_evals: usize,
    pub eval_timeout: Duration,
    pub kappa: f64,
    /// `None` picks `max(2 * n_workers, 8)`.
    pub n_initial: Option<usize>,
    pub candidate_pool_size: usize,
    pub seed: u64,
    pub direction: Direction,
    /// `None` picks -1 for maximize and the timeout (seconds) for minimize.
    pub timeout_penalty: Option<f64>,
    pub metric_name: String,
    pub forest: ForestParams,
    /// Stop dispatching once the campaign has run this long.
    pub wall_clock_budget: Option<Duration>,
    /// Opaque per-worker labels (e.g. node names); defaults to `worker-<i>`.
    pub worker_labels: Vec<String>,
    /// Replace wall-clock timestamps by a logical event counter and zero the
    /// elapsed field, so serial runs are byte-reproducible.
    pub logical_clock: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_workers: 1,
            max_evals: 256,
            eval_timeout: Duration::from_secs(60),
            kappa: DEFAULT_KAPPA,
            n_initial: None,
            candidate_pool_size: DEFAULT_CANDIDATE_POOL,
            seed: 0,
            direction: Direction::Minimize,
            timeout_penalty: None,
            metric_name: "objective".into(),
            forest: ForestParams::default(),
            wall_clock_budget: None,
            worker_labels: Vec::new(),
            logical_clock: false,
        }
    }
}

impl CampaignConfig {
    pub fn check(&self) -> Result<(), EnsembleError> {
        let bad = |m: String| Err(EnsembleError::InvalidCampaign(m));
        if self.n_workers == 0 {
            return bad("n_workers must be >= 1".into());
        }
        if self.max_evals == 0 {
            return bad("max_evals must be >= 1".into());
        }
        if self.n_workers > self.max_evals {
            return bad(format!(
                "n_workers ({}) exceeds max_evals ({})",
                self.n_workers, self.max_evals
            ));
        }
        if self.eval_timeout.is_zero() {
            return bad("eval_timeout must be > 0".into());
        }
        if self.timeout_penalty.is_some_and(|p| !p.is_finite()) {
            return bad("timeout_penalty must be finite".into());
        }
        Ok(())
    }

    pub fn penalty(&self) -> f64 {
        self.timeout_penalty.unwrap_or(match self.direction {
            Direction::Maximize => DEFAULT_MAXIMIZE_PENALTY,
            Direction::Minimize => self.eval_timeout.as_secs_f64(),
        })
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            kappa: self.kappa,
            n_initial: self.n_initial.unwrap_or_else(|| default_n_initial(self.n_workers)),
            candidate_pool_size: self.candidate_pool_size,
            seed: self.seed,
            direction: self.direction,
            forest: self.forest.clone(),
        }
    }

    pub fn worker_label(&self, worker_id: usize) -> String {
        self.worker_labels
            .get(worker_id)
            .cloned()
            .unwrap_or_else(|| format!("worker-{worker_id}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    SpaceExhausted,
    WallClockBudget,
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    /// In completion order.
    pub records: Vec<EvaluationRecord>,
    pub termination: Termination,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressSnapshot {
    pub n_done: usize,
    pub best_objective: Option<f64>,
    pub best_config: Option<Configuration>,
    pub elapsed_total: Duration,
}

/// Best `ok` record per `direction`; the earliest wins ties.
pub fn progress_snapshot(
    records: &[EvaluationRecord],
    direction: Direction,
    campaign_start: Instant,
) -> ProgressSnapshot {
    let best = records
        .iter()
        .filter(|r| r.status == EvalStatus::Ok)
        .fold(None::<&EvaluationRecord>, |best, r| match best {
            Some(b) if !direction.is_better(r.objective, b.objective) => Some(b),
            _ => Some(r),
        });
    ProgressSnapshot {
        n_done: records.len(),
        best_objective: best.map(|r| r.objective),
        best_config: best.map(|r| r.config.clone()),
        elapsed_total: campaign_start.elapsed(),
    }
}

struct Job {
    eval_id: u64,
    config: Configuration,
    started_tick: Option<f64>,
}

struct Done {
    worker_id: usize,
    eval_id: u64,
    config: Configuration,
    started_at: f64,
    finished_at: f64,
    outcome: Result<EvalOutcome, EvaluatorError>,
}

fn millis(d: Duration) -> f64 {
    (d.as_secs_f64() * 1000.0).round() / 1000.0
}

/// Runs a full campaign, appending records to `sink` in `eval_id` order as
/// soon as every earlier evaluation has finished.
pub fn run_campaign(
    space: Arc<ParameterSpace>,
    evaluator: &dyn Evaluator,
    campaign: &CampaignConfig,
    sink: &mut dyn RecordSink,
) -> Result<CampaignOutcome, EnsembleError> {
    campaign.check()?;
    let mut optimizer = Optimizer::new(Arc::clone(&space), campaign.optimizer_settings())?;
    let penalty = campaign.penalty();
    let start = Instant::now();
    let labels: Vec<String> = (0..campaign.n_workers).map(|i| campaign.worker_label(i)).collect();

    thread::scope(|scope| {
        let (done_tx, done_rx) = mpsc::channel::<Done>();
        let mut job_txs = Vec::with_capacity(campaign.n_workers);
        for worker_id in 0..campaign.n_workers {
            let (job_tx, job_rx) = mpsc::channel::<Job>();
            job_txs.push(job_tx);
            let done_tx = done_tx.clone();
            let label = labels[worker_id].as_str();
            scope.spawn(move || {
                for job in job_rx {
                    let started = start.elapsed();
                    let outcome = evaluator.evaluate(&EvalJob {
                        eval_id: job.eval_id,
                        worker_id,
                        worker_label: label,
                        config: &job.config,
                        timeout: campaign.eval_timeout,
                        penalty,
                        direction: campaign.direction,
                        campaign_seed: campaign.seed,
                    });
                    let finished = start.elapsed();
                    let msg = Done {
                        worker_id,
                        eval_id: job.eval_id,
                        config: job.config,
                        started_at: job.started_tick.unwrap_or_else(|| millis(started)),
                        finished_at: millis(finished),
                        outcome,
                    };
                    if done_tx.send(msg).is_err() {
                        break;
                    }
                }
            });
        }
        drop(done_tx);

        let mut idle: VecDeque<usize> = (0..campaign.n_workers).collect();
        let mut dispatched = 0usize;
        let mut outstanding = 0usize;
        let mut tick = 0u64;
        let mut stop: Option<Termination> = None;
        let mut records = Vec::with_capacity(campaign.max_evals);
        let mut pending: BTreeMap<u64, EvaluationRecord> = BTreeMap::new();
        let mut next_to_write = 0u64;

        loop {
            while stop.is_none() && dispatched < campaign.max_evals {
                if campaign
                    .wall_clock_budget
                    .is_some_and(|budget| start.elapsed() >= budget)
                {
                    info!("wall-clock budget exhausted after {dispatched} dispatches");
                    stop = Some(Termination::WallClockBudget);
                    break;
                }
                let Some(worker_id) = idle.pop_front() else { break };
                match optimizer.ask() {
                    Ok(config) => {
                        let started_tick = campaign.logical_clock.then(|| {
                            tick += 1;
                            tick as f64
                        });
                        let job = Job {
                            eval_id: dispatched as u64,
                            config,
                            started_tick,
                        };
                        job_txs[worker_id]
                            .send(job)
                            .expect("worker threads outlive the manager loop");
                        dispatched += 1;
                        outstanding += 1;
                    }
                    Err(OptimizerError::SpaceExhausted) => {
                        info!("space exhausted after {dispatched} dispatches");
                        idle.push_front(worker_id);
                        stop = Some(Termination::SpaceExhausted);
                    }
                    Err(e) => {
                        idle.push_front(worker_id);
                        stop = Some(Termination::Aborted(e.to_string()));
                    }
                }
            }
            if outstanding == 0 {
                break;
            }

            let done = done_rx.recv().expect("a worker holds an outstanding job");
            outstanding -= 1;
            idle.push_back(done.worker_id);

            let outcome = match done.outcome {
                Ok(o) if o.objective.is_finite() => o,
                Ok(o) => {
                    warn!("eval {}: non-finite objective {}", done.eval_id, o.objective);
                    EvalOutcome {
                        objective: penalty,
                        status: EvalStatus::Fail,
                        elapsed: o.elapsed,
                    }
                }
                Err(e) => {
                    warn!("eval {}: {e}", done.eval_id);
                    if stop.is_none() {
                        stop = Some(Termination::Aborted(e.to_string()));
                    }
                    EvalOutcome {
                        objective: penalty,
                        status: EvalStatus::Fail,
                        elapsed: Duration::from_secs_f64(
                            (done.finished_at - done.started_at).max(0.0),
                        ),
                    }
                }
            };
            if let Err(e) = optimizer.tell(&done.config, outcome.objective, outcome.status) {
                stop.get_or_insert(Termination::Aborted(e.to_string()));
            }

            let (started_at, finished_at, elapsed) = if campaign.logical_clock {
                tick += 1;
                (done.started_at, tick as f64, 0.0)
            } else {
                (done.started_at, done.finished_at.max(done.started_at), outcome.elapsed.as_secs_f64())
            };
            let record = EvaluationRecord {
                eval_id: done.eval_id,
                worker_id: done.worker_id,
                config: done.config,
                objective: outcome.objective,
                status: outcome.status,
                elapsed,
                started_at,
                finished_at,
            };
            info!(
                "eval {} on worker {}: {} {} ({:.3}s)",
                record.eval_id, record.worker_id, record.status, record.objective, elapsed
            );
            records.push(record.clone());
            pending.insert(record.eval_id, record);
            while let Some(next) = pending.remove(&next_to_write) {
                if let Err(e) = sink.append(&next) {
                    stop.get_or_insert(Termination::Aborted(format!("writing results: {e}")));
                }
                next_to_write += 1;
            }
        }
        drop(job_txs);

        Ok(CampaignOutcome {
            records,
            termination: stop.unwrap_or(Termination::Completed),
            wall_time: start.elapsed(),
        })
    })
}
