//! Asynchronous autotuning of external programs.
//!
//! A campaign searches a conditional [`space::ParameterSpace`] with a
//! Bayesian optimizer ([`optimizer`]) whose surrogate is a random forest
//! ([`surrogate`]). Candidate configurations are evaluated in parallel by an
//! [`ensemble`] of workers, either through a rendered code mold run as a
//! subprocess ([`harness`]) or through a built-in synthetic objective
//! ([`synthbench`]). Results go to an append-only CSV database ([`store`]).

pub mod cli;
pub mod ensemble;
pub mod harness;
pub mod optimizer;
pub mod space;
pub mod store;
pub mod surrogate;
pub mod synthbench;

pub use ensemble::{
    progress_snapshot, run_campaign, CampaignConfig, CampaignOutcome, EvalJob, EvalOutcome,
    Evaluator, EvaluatorError, ProgressSnapshot, Termination,
};
pub use optimizer::{lcb, Direction, EvalStatus, Optimizer, OptimizerSettings};
pub use space::{Configuration, ParameterSpace, ParameterSpec, Value};
pub use store::{BaselineSpec, EvaluationRecord, ResultsWriter};
pub use surrogate::{ForestParams, SurrogateForest, TrainingSet};

/// Mixes a stream index into a seed (splitmix64 finalizer), so per-tree and
/// per-evaluation generators are independent but reproducible.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(stream))
}
