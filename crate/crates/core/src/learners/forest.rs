use rand::seq::index;
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{canonicalize, check_dim};

/// Random-forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestParams {
    pub trees: usize,
    /// Depth 0 gives a single leaf (the bootstrap mean).
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; 0 means `max(1, d / 3)`.
    pub mtry: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 10,
            min_leaf: 5,
            mtry: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::BadHyperparameter("forest needs at least one tree".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::BadHyperparameter("forest min_leaf must be >= 1".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        match self.mtry {
            0 => (d / 3).max(1),
            m => m.min(d),
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Bagged CART regression trees with random feature subsets at each split.
///
/// Tree `j` draws its bootstrap sample and feature subsets from ChaCha8 stream
/// `j` of a generator keyed by the symmetric training hash, so a tree does not
/// depend on how many other trees are grown or in which order.
#[derive(Debug, Clone)]
pub struct Forest {
    d: usize,
    trees: Vec<Tree>,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    at: usize,
    score: f64,
}

impl Builder<'_> {
    /// Sorts `idx` by feature `f`, ties by row index; `keyed` is scratch space.
    fn sort_by_feature(&self, idx: &mut [usize], f: usize, keyed: &mut Vec<(f64, usize)>) {
        keyed.clear();
        keyed.extend(idx.iter().map(|&i| (self.x.get(i, f), i)));
        keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (slot, &(_, i)) in idx.iter_mut().zip(keyed.iter()) {
            *slot = i;
        }
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(total / n as f64));
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return id;
        }

        let d = self.x.cols();
        let features = index::sample(&mut self.rng, d, self.mtry).into_vec();
        let features_last = *features.last().expect("mtry >= 1");
        let parent_score = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut keyed = Vec::with_capacity(n);
        for f in features {
            self.sort_by_feature(idx, f, &mut keyed);
            let mut left_sum = 0.0;
            for p in 1..n {
                left_sum += self.y[idx[p - 1]];
                if p < self.params.min_leaf || n - p < self.params.min_leaf {
                    continue;
                }
                let lo = keyed[p - 1].0;
                let hi = keyed[p].0;
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / p as f64 + right_sum * right_sum / (n - p) as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        at: p,
                        score,
                    });
                }
            }
        }

        let Some(best) = best else { return id };
        if !(best.score > parent_score) {
            return id;
        }
        if best.feature != features_last {
            self.sort_by_feature(idx, best.feature, &mut keyed);
        }
        drop(keyed);
        let (l, r) = idx.split_at_mut(best.at);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }
}

impl Forest {
    pub fn fit(x: &Matrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let (x, y) = canonicalize(x, y)?;
        let n = x.rows();
        let mtry = params.features_per_split(x.cols());
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = Builder {
                    x: &x,
                    y: &y,
                    params,
                    mtry,
                    rng,
                    nodes: Vec::new(),
                };
                b.grow(&mut sample, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(Self { d: x.cols(), trees })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x)?;
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> (Matrix, Vec<f64>) {
        let rows: Vec<[f64; 1]> = (0..40).map(|i| [i as f64]).collect();
        let y = (0..40).map(|i| if i < 20 { 0.0 } else { 10.0 }).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn learns_a_step() {
        let (x, y) = step_data();
        let f = Forest::fit(&x, &y, &ForestParams::default(), 1).unwrap();
        assert!(f.predict(&[2.0]).unwrap() < 1.0);
        assert!(f.predict(&[37.0]).unwrap() > 9.0);
    }

    #[test]
    fn depth_zero_is_constant() {
        let (x, y) = step_data();
        let p = ForestParams {
            trees: 5,
            max_depth: 0,
            ..ForestParams::default()
        };
        let f = Forest::fit(&x, &y, &p, 3).unwrap();
        assert_eq!(f.predict(&[0.0]).unwrap(), f.predict(&[39.0]).unwrap());
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let (x, y) = step_data();
        let p = ForestParams {
            trees: 1,
            max_depth: 20,
            min_leaf: 20,
            mtry: 1,
        };
        let f = Forest::fit(&x, &y, &p, 9).unwrap();
        // At most one split is possible with 40 bootstrap rows and leaves of 20.
        assert!(f.trees[0].nodes.len() <= 3);
    }

    #[test]
    fn tree_count_and_validation() {
        let (x, y) = step_data();
        let p = ForestParams {
            trees: 7,
            ..ForestParams::default()
        };
        assert_eq!(Forest::fit(&x, &y, &p, 0).unwrap().tree_count(), 7);
        let bad = ForestParams {
            trees: 0,
            ..ForestParams::default()
        };
        assert!(Forest::fit(&x, &y, &bad, 0).is_err());
    }
}
