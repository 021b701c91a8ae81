//! Synthetic objectives over OpenMC-shaped conditional spaces.
//!
//! These stand in for a real application so that campaigns can be exercised
//! without launching anything: a weighted quadratic bowl over the numeric
//! parameters, per-choice offsets for categoricals, and an extra term that
//! only applies while the conditional child is active.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::derive_seed;
use crate::ensemble::{EvalJob, EvalOutcome, Evaluator, EvaluatorError};
use crate::optimizer::EvalStatus;
use crate::space::{
    Condition, Configuration, ParamKind, ParameterSpace, ParameterSpec, Value, Violation,
};

/// The seven-parameter OpenMC space: queuing mode, particles in flight, hash
/// grid bins, sorting threshold (queued mode only), threads, tasks per GPU
/// and thread placement.
pub fn openmc_space() -> ParameterSpace {
    let params = vec![
        ParameterSpec::categorical("P0", &["openmc", "openmc-queueless"], "openmc"),
        ParameterSpec::uniform_int("P1", 100_000, 8_000_000, 1000, 1_000_000),
        ParameterSpec::uniform_int("P2", 100, 100_000, 100, 4000),
        ParameterSpec::uniform_int("P3", 0, 1_000_000, 1000, 20_000),
        ParameterSpec::uniform_int("P4", 2, 8, 1, 8),
        ParameterSpec::ordinal("P5", &[1.0, 2.0], 1.0),
        ParameterSpec::categorical("P6", &["cores", "threads", "sockets"], "threads"),
    ]
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .expect("static space is well-formed");
    let cond = Condition {
        child: "P3".into(),
        parent: "P0".into(),
        equals: Value::Choice(0),
    };
    ParameterSpace::new(params, vec![cond]).expect("static space is well-formed")
}

/// A small space with the same structure as [`openmc_space`] (two-way mode
/// switch, a wide quantized integer, a conditioned child, an ordinal pair and
/// a three-way categorical) that is small enough to enumerate: 5040 configs.
pub fn openmc_like_space() -> ParameterSpace {
    let params = vec![
        ParameterSpec::categorical("P0", &["openmc", "openmc-queueless"], "openmc"),
        ParameterSpec::uniform_int("P1", 100_000, 8_000_000, 200_000, 900_000),
        ParameterSpec::uniform_int("P2", 0, 95_000, 5000, 20_000),
        ParameterSpec::ordinal("P3", &[1.0, 2.0], 1.0),
        ParameterSpec::categorical("P4", &["cores", "threads", "sockets"], "threads"),
    ]
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .expect("static space is well-formed");
    let cond = Condition {
        child: "P2".into(),
        parent: "P0".into(),
        equals: Value::Choice(0),
    };
    ParameterSpace::new(params, vec![cond]).expect("static space is well-formed")
}

/// Extra quadratic term applied only while `child` is active.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTerm {
    pub child: usize,
    pub weight: f64,
    pub optimum: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    space: Arc<ParameterSpace>,
    /// Per parameter; applies to integer and ordinal parameters.
    pub weights: Vec<f64>,
    /// Per parameter, in normalized `[0, 1]` units.
    pub optima: Vec<f64>,
    /// Per parameter, one offset per choice; empty for non-categoricals.
    pub categorical_offsets: Vec<Vec<f64>>,
    pub conditional_term: Option<ConditionalTerm>,
    pub noise_std: f64,
    pub sleep: Duration,
}

impl SyntheticObjective {
    /// A flat objective (everything zero) over `space`.
    pub fn flat(space: Arc<ParameterSpace>) -> Self {
        let n = space.len();
        let categorical_offsets = space
            .params()
            .iter()
            .map(|p| match &p.kind {
                ParamKind::Categorical { choices } => vec![0.0; choices.len()],
                _ => Vec::new(),
            })
            .collect();
        SyntheticObjective {
            space,
            weights: vec![0.0; n],
            optima: vec![0.0; n],
            categorical_offsets,
            conditional_term: None,
            noise_std: 0.0,
            sleep: Duration::ZERO,
        }
    }

    /// Canned objective over [`openmc_like_space`]; minimum 0-ish in queued
    /// mode with two tasks and `threads` placement.
    pub fn openmc_like() -> Self {
        let mut obj = Self::flat(Arc::new(openmc_like_space()));
        obj.categorical_offsets[0] = vec![0.0, 0.05];
        obj.weights[1] = 1.0;
        obj.optima[1] = 0.62;
        obj.weights[3] = 0.3;
        obj.optima[3] = 1.0;
        obj.categorical_offsets[4] = vec![0.08, 0.0, 0.15];
        obj.conditional_term = Some(ConditionalTerm {
            child: 2,
            weight: 0.6,
            optimum: 0.3,
        });
        obj
    }

    /// Bowl over the full seven-parameter OpenMC space.
    pub fn openmc() -> Self {
        let mut obj = Self::flat(Arc::new(openmc_space()));
        obj.categorical_offsets[0] = vec![0.0, 0.02];
        obj.weights[1] = 1.0;
        obj.optima[1] = 0.45;
        obj.weights[2] = 0.4;
        obj.optima[2] = 0.1;
        obj.weights[4] = 0.5;
        obj.optima[4] = 1.0;
        obj.weights[5] = 0.2;
        obj.optima[5] = 0.0;
        obj.categorical_offsets[6] = vec![0.05, 0.0, 0.1];
        obj.conditional_term = Some(ConditionalTerm {
            child: 3,
            weight: 0.3,
            optimum: 0.05,
        });
        obj
    }

    /// Looks up a built-in objective by name.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "openmc-like" => Some(Self::openmc_like()),
            "openmc" => Some(Self::openmc()),
            _ => None,
        }
    }

    pub fn catalog() -> &'static [&'static str] {
        &["openmc-like", "openmc"]
    }

    pub fn space(&self) -> &Arc<ParameterSpace> {
        &self.space
    }

    /// Noise-free value.
    pub fn value(&self, cfg: &Configuration) -> Result<f64, Violation> {
        self.space.validate(cfg)?;
        let mut total = 0.0;
        for (i, spec) in self.space.params().iter().enumerate() {
            let Some(value) = cfg.get(i) else { continue };
            match (&spec.kind, value) {
                (ParamKind::Categorical { .. }, Value::Choice(c)) => {
                    total += self.categorical_offsets[i].get(*c).copied().unwrap_or(0.0);
                }
                _ => {
                    let x = normalize(&spec.kind, value);
                    total += self.weights[i] * (x - self.optima[i]).powi(2);
                }
            }
        }
        if let Some(term) = &self.conditional_term {
            if let Some(value) = cfg.get(term.child) {
                let x = normalize(&self.space.params()[term.child].kind, value);
                total += term.weight * (x - term.optimum).powi(2);
            }
        }
        Ok(total)
    }

    /// Value plus Gaussian noise drawn from `rng`.
    pub fn evaluate<R: Rng + ?Sized>(&self, cfg: &Configuration, rng: &mut R) -> Result<f64, Violation> {
        let base = self.value(cfg)?;
        if self.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.noise_std).expect("noise_std is finite and >= 0");
            Ok(base + normal.sample(rng))
        } else {
            Ok(base)
        }
    }
}

/// Evaluator wrapper: sleeps `objective.sleep` (cut short at the timeout),
/// then returns the objective with noise seeded from the campaign seed and
/// the eval_id.
pub struct SyntheticEvaluator {
    objective: SyntheticObjective,
}

impl SyntheticEvaluator {
    pub fn new(objective: SyntheticObjective) -> Self {
        SyntheticEvaluator { objective }
    }

    pub fn objective(&self) -> &SyntheticObjective {
        &self.objective
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvalOutcome, EvaluatorError> {
        let start = Instant::now();
        if self.objective.sleep >= job.timeout {
            thread::sleep(job.timeout);
            return Ok(EvalOutcome::timeout(job, start.elapsed()));
        }
        if !self.objective.sleep.is_zero() {
            thread::sleep(self.objective.sleep);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(job.campaign_seed, job.eval_id));
        Ok(match self.objective.evaluate(job.config, &mut rng) {
            Ok(objective) => EvalOutcome {
                objective,
                status: EvalStatus::Ok,
                elapsed: start.elapsed(),
            },
            Err(_) => EvalOutcome {
                objective: job.penalty,
                status: EvalStatus::Fail,
                elapsed: start.elapsed(),
            },
        })
    }
}

fn normalize(kind: &ParamKind, value: &Value) -> f64 {
    match (kind, value) {
        (ParamKind::UniformInt { lower, upper, .. }, Value::Int(v)) => {
            if upper == lower {
                0.0
            } else {
                (v - lower) as f64 / (upper - lower) as f64
            }
        }
        (ParamKind::Ordinal { sequence }, Value::Choice(i)) => {
            if sequence.len() < 2 {
                0.0
            } else {
                *i as f64 / (sequence.len() - 1) as f64
            }
        }
        (ParamKind::Categorical { choices }, Value::Choice(i)) => {
            if choices.len() < 2 {
                0.0
            } else {
                *i as f64 / (choices.len() - 1) as f64
            }
        }
        _ => 0.0,
    }
}
