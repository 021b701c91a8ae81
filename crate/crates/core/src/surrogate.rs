//! Random-forest regression surrogate.
//!
//! Classic CART trees: axis-aligned threshold splits chosen by minimizing the
//! summed squared error of the two children, thresholds at midpoints between
//! consecutive distinct feature values, leaves predicting the mean of their
//! resident targets. The forest reports the mean and population standard
//! deviation of the per-tree predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("training set is empty")]
    Empty,
    #[error("{xs} feature vectors but {ys} targets")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn check(&self) -> Result<(), SurrogateError> {
        if self.n_trees == 0 {
            return Err(SurrogateError::InvalidParams("n_trees must be >= 1"));
        }
        if self.min_samples_split < 2 {
            return Err(SurrogateError::InvalidParams("min_samples_split must be >= 2"));
        }
        Ok(())
    }
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            min_samples_split: 2,
            max_depth: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    dim: usize,
}

impl TrainingSet {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self, SurrogateError> {
        if xs.len() != ys.len() {
            return Err(SurrogateError::LengthMismatch {
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        let dim = xs.first().map_or(0, Vec::len);
        for (row, (x, y)) in xs.iter().zip(&ys).enumerate() {
            if x.len() != dim {
                return Err(SurrogateError::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(SurrogateError::NonFinite { row });
            }
        }
        Ok(TrainingSet { xs, ys, dim })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn targets(&self) -> &[f64] {
        &self.ys
    }
}

/// Point estimate and across-tree spread at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Training samples resident in each leaf, in node order.
    pub fn leaf_sizes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { samples, .. } => Some(*samples),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

struct TreeBuilder<'a> {
    data: &'a TrainingSet,
    params: &'a ForestParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    cost: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            samples: 0,
        });

        let ys = &self.data.ys;
        let first = ys[rows[0]];
        let constant = rows.iter().all(|&r| ys[r] == first);
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if constant || depth_capped || rows.len() < self.params.min_samples_split {
            None
        } else {
            self.best_split(rows)
        };

        match split {
            None => {
                self.nodes[id] = Node::Leaf {
                    value: leaf_value(rows.iter().map(|&r| ys[r])),
                    samples: rows.len(),
                };
            }
            Some(best) => {
                let xs = &self.data.xs;
                let mid = partition(rows, |&r| xs[r][best.feature] <= best.threshold);
                let (lo, hi) = rows.split_at_mut(mid);
                let left = self.build(lo, depth + 1);
                let right = self.build(hi, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let xs = &self.data.xs;
        let ys = &self.data.ys;
        let n = rows.len();
        let center = rows.iter().map(|&r| ys[r]).sum::<f64>() / n as f64;

        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for feature in 0..self.data.dim {
            sorted.sort_by(|&a, &b| xs[a][feature].total_cmp(&xs[b][feature]).then(a.cmp(&b)));
            let total: f64 = sorted.iter().map(|&r| ys[r] - center).sum();
            let total_sq: f64 = sorted.iter().map(|&r| (ys[r] - center).powi(2)).sum();
            let (mut sum, mut sq) = (0.0, 0.0);
            for k in 0..n - 1 {
                let d = ys[sorted[k]] - center;
                sum += d;
                sq += d * d;
                let here = xs[sorted[k]][feature];
                let next = xs[sorted[k + 1]][feature];
                if here == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let sse_left = sq - sum * sum / nl;
                let sse_right = (total_sq - sq) - (total - sum).powi(2) / nr;
                let cost = sse_left + sse_right;
                // Strict comparison keeps the lowest feature, then the lowest
                // threshold, among equal-cost splits.
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    let mut threshold = here + (next - here) / 2.0;
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(BestSplit {
                        cost,
                        feature,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

fn leaf_value(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        n += 1;
    }
    (sum / n as f64).clamp(lo, hi)
}

/// Moves rows satisfying `pred` to the front, preserving relative order on
/// both sides. Returns the number of rows that satisfied it.
fn partition(rows: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|r| pred(r));
    let mid = yes.len();
    rows[..mid].copy_from_slice(&yes);
    rows[mid..].copy_from_slice(&no);
    mid
}

/// Mean and population standard deviation. The mean is clamped into the
/// range of the inputs, so identical inputs give exactly `(v, 0)`.
pub fn mean_std(values: &[f64]) -> Prediction {
    let n = values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (values.iter().sum::<f64>() / n).clamp(lo, hi);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Prediction {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateForest {
    trees: Vec<RegressionTree>,
    params: ForestParams,
    seed: u64,
    dim: usize,
}

impl SurrogateForest {
    pub fn fit(data: &TrainingSet, params: &ForestParams, seed: u64) -> Result<Self, SurrogateError> {
        if data.is_empty() {
            return Err(SurrogateError::Empty);
        }
        params.check()?;
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rows: Vec<usize> = if params.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                    (0..data.len()).map(|_| rng.random_range(0..data.len())).collect()
                } else {
                    (0..data.len()).collect()
                };
                let mut builder = TreeBuilder {
                    data,
                    params,
                    nodes: Vec::new(),
                };
                builder.build(&mut rows, 0);
                RegressionTree {
                    nodes: builder.nodes,
                }
            })
            .collect();
        Ok(SurrogateForest {
            trees,
            params: params.clone(),
            seed,
            dim: data.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn tree_predictions(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        if x.len() != self.dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, SurrogateError> {
        Ok(mean_std(&self.tree_predictions(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&[f64]], ys: &[f64]) -> TrainingSet {
        TrainingSet::new(xs.iter().map(|x| x.to_vec()).collect(), ys.to_vec()).unwrap()
    }

    #[test]
    fn single_sample_forest_is_all_leaves() {
        let data = set(&[&[1.0, 2.0]], &[5.0]);
        let f = SurrogateForest::fit(&data, &ForestParams::default(), 0).unwrap();
        assert!(f.trees().iter().all(|t| t.n_leaves() == 1));
        assert_eq!(f.predict(&[9.0, -3.0]).unwrap(), Prediction { mean: 5.0, std: 0.0 });
    }

    #[test]
    fn constant_targets_have_zero_spread() {
        let data = set(&[&[0.0], &[1.0], &[2.0], &[7.0]], &[3.0; 4]);
        let f = SurrogateForest::fit(&data, &ForestParams::default(), 9).unwrap();
        for x in [-5.0, 0.5, 3.0, 100.0] {
            assert_eq!(f.predict(&[x]).unwrap(), Prediction { mean: 3.0, std: 0.0 });
        }
    }

    #[test]
    fn two_point_memorization() {
        let data = set(&[&[0.0], &[10.0]], &[0.0, 1.0]);
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let f = SurrogateForest::fit(&data, &params, 0).unwrap();
        assert_eq!(f.predict(&[0.0]).unwrap(), Prediction { mean: 0.0, std: 0.0 });
        assert_eq!(f.predict(&[10.0]).unwrap(), Prediction { mean: 1.0, std: 0.0 });
        // split sits at the midpoint
        assert_eq!(f.predict(&[5.0]).unwrap().mean, 0.0);
        assert_eq!(f.predict(&[5.0001]).unwrap().mean, 1.0);
    }

    #[test]
    fn mean_std_of_two_values() {
        assert_eq!(mean_std(&[2.0, 4.0]), Prediction { mean: 3.0, std: 1.0 });
    }

    #[test]
    fn tie_breaks_toward_lowest_feature() {
        // Both features separate the targets perfectly.
        let data = set(&[&[0.0, 0.0], &[1.0, 1.0]], &[0.0, 1.0]);
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let f = SurrogateForest::fit(&data, &params, 0).unwrap();
        // Feature 0 decides; feature 1 is ignored.
        assert_eq!(f.predict(&[0.0, 1.0]).unwrap().mean, 0.0);
        assert_eq!(f.predict(&[1.0, 0.0]).unwrap().mean, 1.0);
    }

    #[test]
    fn max_depth_and_min_split_limit_growth() {
        let xs: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let data = TrainingSet::new(xs, ys).unwrap();
        let one = |p: ForestParams| {
            SurrogateForest::fit(&data, &p, 0).unwrap().trees()[0].n_leaves()
        };
        let base = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        assert_eq!(one(base.clone()), 16);
        assert_eq!(
            one(ForestParams {
                max_depth: Some(2),
                ..base.clone()
            }),
            4
        );
        let sizes = SurrogateForest::fit(
            &data,
            &ForestParams {
                min_samples_split: 5,
                ..base
            },
            0,
        )
        .unwrap()
        .trees()[0]
            .leaf_sizes();
        assert!(sizes.iter().all(|&s| (1..5).contains(&s)), "{sizes:?}");
        assert_eq!(sizes.iter().sum::<usize>(), 16);
    }

    #[test]
    fn errors() {
        assert_eq!(
            SurrogateForest::fit(&set(&[], &[]), &ForestParams::default(), 0).unwrap_err(),
            SurrogateError::Empty
        );
        assert!(matches!(
            TrainingSet::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]),
            Err(SurrogateError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            TrainingSet::new(vec![vec![1.0]], vec![0.0, 0.0]),
            Err(SurrogateError::LengthMismatch { .. })
        ));
        assert!(matches!(
            TrainingSet::new(vec![vec![1.0]], vec![f64::NAN]),
            Err(SurrogateError::NonFinite { row: 0 })
        ));
        let f = SurrogateForest::fit(&set(&[&[1.0]], &[1.0]), &ForestParams::default(), 0).unwrap();
        assert!(matches!(
            f.predict(&[1.0, 2.0]),
            Err(SurrogateError::DimensionMismatch { .. })
        ));
    }
}
