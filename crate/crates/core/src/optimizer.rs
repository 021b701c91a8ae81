//! Ask/tell Bayesian optimization with a lower-confidence-bound acquisition.
//!
//! Objectives are kept internally in minimize orientation; maximize metrics
//! are negated when they are told. After `n_initial` observations every ask
//! refits the forest on the full history (once per history size), scores a
//! pool of fresh random candidates by `mean - kappa * std`, and returns the
//! lowest-scoring candidate not already evaluated or in flight.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::space::{Configuration, ParameterSpace};
use crate::surrogate::{ForestParams, Prediction, SurrogateError, SurrogateForest, TrainingSet};

pub const DEFAULT_KAPPA: f64 = 1.96;
pub const DEFAULT_CANDIDATE_POOL: usize = 1000;

/// Resample attempts before falling back to enumerating unused configurations.
const RESAMPLE_CAP: usize = 1000;
/// Spaces at most this large are enumerated when random draws keep colliding.
const ENUMERATION_LIMIT: usize = 200_000;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("space exhausted")]
    SpaceExhausted,
    #[error("configuration was not asked or was already told")]
    NotInFlight,
    #[error("objective {0} is not finite")]
    NonFiniteObjective(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    /// Maps a user-orientation objective to minimize orientation.
    pub fn to_internal(self, objective: f64) -> f64 {
        match self {
            Direction::Minimize => objective,
            Direction::Maximize => -objective,
        }
    }

    /// True if `a` is strictly better than `b`.
    pub fn is_better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Minimize => "minimize",
            Direction::Maximize => "maximize",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "minimize" | "min" => Ok(Direction::Minimize),
            "maximize" | "max" => Ok(Direction::Maximize),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Timeout,
    Fail,
}

impl fmt::Display for EvalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Timeout => "timeout",
            EvalStatus::Fail => "fail",
        })
    }
}

impl FromStr for EvalStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(EvalStatus::Ok),
            "timeout" => Ok(EvalStatus::Timeout),
            "fail" => Ok(EvalStatus::Fail),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Lower confidence bound `mu - kappa * sigma`.
pub fn lcb(mu: f64, sigma: f64, kappa: f64) -> Result<f64, OptimizerError> {
    if sigma < 0.0 || sigma.is_nan() {
        return Err(OptimizerError::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if kappa < 0.0 || kappa.is_nan() {
        return Err(OptimizerError::InvalidArgument(format!(
            "kappa must be >= 0, got {kappa}"
        )));
    }
    Ok(mu - kappa * sigma)
}

/// Index of the candidate with the smallest LCB; the earliest wins ties.
pub fn argmin_lcb(candidates: &[Prediction], kappa: f64) -> Result<Option<usize>, OptimizerError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in candidates.iter().enumerate() {
        let score = lcb(p.mean, p.std, kappa)?;
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    Ok(best.map(|(i, _)| i))
}

pub fn default_n_initial(n_workers: usize) -> usize {
    (2 * n_workers).max(8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub kappa: f64,
    pub n_initial: usize,
    pub candidate_pool_size: usize,
    pub seed: u64,
    pub direction: Direction,
    pub forest: ForestParams,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            kappa: DEFAULT_KAPPA,
            n_initial: default_n_initial(1),
            candidate_pool_size: DEFAULT_CANDIDATE_POOL,
            seed: 0,
            direction: Direction::Minimize,
            forest: ForestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub config: Configuration,
    /// Minimize orientation.
    pub objective: f64,
    pub status: EvalStatus,
}

pub struct Optimizer {
    space: Arc<ParameterSpace>,
    settings: OptimizerSettings,
    history: Vec<Observation>,
    in_flight: HashSet<Configuration>,
    used: HashSet<Configuration>,
    rng: ChaCha8Rng,
    model: Option<(usize, SurrogateForest)>,
}

impl Optimizer {
    pub fn new(space: Arc<ParameterSpace>, settings: OptimizerSettings) -> Result<Self, OptimizerError> {
        if !(settings.kappa >= 0.0 && settings.kappa.is_finite()) {
            return Err(OptimizerError::InvalidArgument(format!(
                "kappa must be a finite value >= 0, got {}",
                settings.kappa
            )));
        }
        if settings.n_initial == 0 {
            return Err(OptimizerError::InvalidArgument("n_initial must be >= 1".into()));
        }
        if settings.candidate_pool_size == 0 {
            return Err(OptimizerError::InvalidArgument(
                "candidate_pool_size must be >= 1".into(),
            ));
        }
        settings.forest.check()?;
        let rng = ChaCha8Rng::seed_from_u64(settings.seed);
        Ok(Optimizer {
            space,
            settings,
            history: Vec::new(),
            in_flight: HashSet::new(),
            used: HashSet::new(),
            rng,
            model: None,
        })
    }

    pub fn space(&self) -> &Arc<ParameterSpace> {
        &self.space
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn in_flight(&self) -> &HashSet<Configuration> {
        &self.in_flight
    }

    /// Best observation so far, in minimize orientation.
    pub fn incumbent(&self) -> Option<&Observation> {
        self.history
            .iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
    }

    pub fn ask(&mut self) -> Result<Configuration, OptimizerError> {
        let cfg = if self.history.len() < self.settings.n_initial {
            self.random_unused()?
        } else {
            self.model_guided()?
        };
        self.in_flight.insert(cfg.clone());
        self.used.insert(cfg.clone());
        Ok(cfg)
    }

    /// Records the result of an asked configuration. `objective` is in the
    /// user's orientation.
    pub fn tell(
        &mut self,
        cfg: &Configuration,
        objective: f64,
        status: EvalStatus,
    ) -> Result<(), OptimizerError> {
        if !objective.is_finite() {
            return Err(OptimizerError::NonFiniteObjective(objective));
        }
        if !self.in_flight.remove(cfg) {
            return Err(OptimizerError::NotInFlight);
        }
        self.history.push(Observation {
            config: cfg.clone(),
            objective: self.settings.direction.to_internal(objective),
            status,
        });
        Ok(())
    }

    fn random_unused(&mut self) -> Result<Configuration, OptimizerError> {
        for _ in 0..RESAMPLE_CAP {
            let cfg = self.space.sample(&mut self.rng);
            if !self.used.contains(&cfg) {
                return Ok(cfg);
            }
        }
        let mut unused = self.unused_by_enumeration()?;
        let pick = self.rng.random_range(0..unused.len());
        Ok(unused.swap_remove(pick))
    }

    fn unused_by_enumeration(&self) -> Result<Vec<Configuration>, OptimizerError> {
        if self.used.len() as u128 >= self.space.cardinality() {
            return Err(OptimizerError::SpaceExhausted);
        }
        let all = self
            .space
            .enumerate(ENUMERATION_LIMIT)
            .ok_or(OptimizerError::SpaceExhausted)?;
        let unused: Vec<Configuration> = all.into_iter().filter(|c| !self.used.contains(c)).collect();
        if unused.is_empty() {
            Err(OptimizerError::SpaceExhausted)
        } else {
            Ok(unused)
        }
    }

    fn fitted_model(&mut self) -> Result<&SurrogateForest, OptimizerError> {
        let n = self.history.len();
        if self.model.as_ref().is_none_or(|(size, _)| *size != n) {
            let xs = self
                .history
                .iter()
                .map(|o| self.space.encode_unchecked(&o.config))
                .collect();
            let ys = self.history.iter().map(|o| o.objective).collect();
            let data = TrainingSet::new(xs, ys)?;
            let seed = derive_seed(self.settings.seed, 0x5EED_0000 + n as u64);
            let forest = SurrogateForest::fit(&data, &self.settings.forest, seed)?;
            self.model = Some((n, forest));
        }
        Ok(&self.model.as_ref().expect("model was just fitted").1)
    }

    fn model_guided(&mut self) -> Result<Configuration, OptimizerError> {
        let mut pool = Vec::with_capacity(self.settings.candidate_pool_size);
        let mut seen = HashSet::with_capacity(self.settings.candidate_pool_size);
        for _ in 0..self.settings.candidate_pool_size {
            let cfg = self.space.sample(&mut self.rng);
            if !self.used.contains(&cfg) && seen.insert(cfg.clone()) {
                pool.push(cfg);
            }
        }
        if pool.is_empty() {
            pool = self.unused_by_enumeration()?;
        }
        let kappa = self.settings.kappa;
        let space = Arc::clone(&self.space);
        let model = self.fitted_model()?;
        let predictions = pool
            .iter()
            .map(|c| model.predict(&space.encode_unchecked(c)))
            .collect::<Result<Vec<_>, _>>()?;
        let best = argmin_lcb(&predictions, kappa)?.expect("candidate pool is not empty");
        Ok(pool.swap_remove(best))
    }
}
