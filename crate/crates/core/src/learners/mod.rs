//! Base learners for the first level of the stack.
//!
//! Every built-in learner treats its training rows as a multiset: fitting on
//! any row permutation of the same data gives bit-identical predictions. This
//! is achieved by sorting rows into a canonical order before fitting and by
//! seeding any internal randomness from [`symmetric_hash`] of the rows.

mod forest;
mod knn;
mod ridge;

use std::fmt;
use std::str::FromStr;

pub use forest::{Forest, ForestParams};
pub use knn::Knn;
pub use ridge::Ridge;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::mix64;

/// A fitted regression function `x ↦ ŷ`.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> Result<f64>;
}

/// A learning method: training rows in, [`Predictor`] out.
pub trait Learner: Sync {
    type Model: Predictor;

    fn fit(&self, x: &Matrix, y: &[f64]) -> Result<Self::Model>;

    /// Smallest training set this learner accepts.
    fn min_train_size(&self) -> usize {
        1
    }
}

const ROW_KEY: u64 = 0x5ca1_ab1e_0ddb_a11e;

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 describe the same observation.
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn row_hash(x: &[f64], y: f64) -> u64 {
    let mut h = ROW_KEY;
    for &v in x.iter().chain(std::iter::once(&y)) {
        h = mix64(h ^ canonical_bits(v));
    }
    h
}

/// Order-invariant, multiset-sensitive hash of training rows `(xᵢ, yᵢ)`.
///
/// Each row is hashed with a fixed key, the row hashes are summed modulo 2⁶⁴,
/// and the sum is finalized together with the row count. Duplicating a row
/// changes the hash; reordering rows does not.
pub fn symmetric_hash(x: &Matrix, y: &[f64]) -> Result<u64> {
    if x.rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    let sum = x
        .row_iter()
        .zip(y)
        .fold(0u64, |acc, (r, &yi)| acc.wrapping_add(mix64(row_hash(r, yi))));
    Ok(mix64(sum ^ mix64(x.rows() as u64)))
}

/// Row indices sorted lexicographically by `(x, y)` under `f64::total_cmp`.
pub(crate) fn canonical_order(x: &Matrix, y: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| y[a].total_cmp(&y[b]))
    });
    idx
}

/// Training rows in canonical order.
pub(crate) fn canonicalize(x: &Matrix, y: &[f64]) -> Result<(Matrix, Vec<f64>)> {
    if x.rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    let order = canonical_order(x, y);
    Ok((x.select_rows(&order), order.iter().map(|&i| y[i]).collect()))
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// Which built-in learner to use, with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerSpec {
    /// Ridge regression with an unpenalized intercept; `lambda ≥ 0`.
    Ridge { lambda: f64 },
    /// k-nearest-neighbours mean on standardized features; `k ≥ 1`.
    Knn { k: usize },
    /// CART random forest.
    Forest(ForestParams),
}

impl LearnerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerSpec::Ridge { .. } => "ridge",
            LearnerSpec::Knn { .. } => "knn",
            LearnerSpec::Forest(_) => "forest",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Ridge { lambda } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(Error::BadHyperparameter(format!(
                        "ridge lambda must be finite and >= 0, got {lambda}"
                    )));
                }
            }
            LearnerSpec::Knn { k } => {
                if *k == 0 {
                    return Err(Error::BadHyperparameter("knn k must be >= 1".into()));
                }
            }
            LearnerSpec::Forest(p) => p.validate()?,
        }
        Ok(())
    }
}

impl Learner for LearnerSpec {
    type Model = FittedLearner;

    fn fit(&self, x: &Matrix, y: &[f64]) -> Result<FittedLearner> {
        self.validate()?;
        let training_hash = symmetric_hash(x, y)?;
        let model = match self {
            LearnerSpec::Ridge { lambda } => Model::Ridge(Ridge::fit(x, y, *lambda)?),
            LearnerSpec::Knn { k } => Model::Knn(Knn::fit(x, y, *k)?),
            LearnerSpec::Forest(p) => Model::Forest(Forest::fit(x, y, p, training_hash)?),
        };
        Ok(FittedLearner {
            model,
            training_hash,
        })
    }

    fn min_train_size(&self) -> usize {
        match self {
            LearnerSpec::Knn { k } => *k,
            _ => 1,
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::Ridge { lambda } => write!(f, "ridge:lambda={lambda}"),
            LearnerSpec::Knn { k } => write!(f, "knn:k={k}"),
            LearnerSpec::Forest(p) => write!(
                f,
                "forest:trees={},max_depth={},min_leaf={},mtry={}",
                p.trees, p.max_depth, p.min_leaf, p.mtry
            ),
        }
    }
}

/// Parses `ridge:lambda=1`, `knn:k=10`, `forest:trees=100,max_depth=8,...`.
/// Omitted parameters take their defaults.
impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut pairs = Vec::new();
        for item in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in learner spec, got {item:?}")))?;
            pairs.push((k.trim(), v.trim()));
        }
        let bad = |key: &str, v: &str| Error::Config(format!("bad value {v:?} for {kind} parameter {key}"));
        let spec = match kind.trim() {
            "ridge" => {
                let mut lambda = 1.0;
                for (k, v) in pairs {
                    match k {
                        "lambda" => lambda = v.parse().map_err(|_| bad(k, v))?,
                        _ => return Err(Error::Config(format!("unknown ridge parameter {k}"))),
                    }
                }
                LearnerSpec::Ridge { lambda }
            }
            "knn" => {
                let mut k_nn = 10;
                for (k, v) in pairs {
                    match k {
                        "k" => k_nn = v.parse().map_err(|_| bad(k, v))?,
                        _ => return Err(Error::Config(format!("unknown knn parameter {k}"))),
                    }
                }
                LearnerSpec::Knn { k: k_nn }
            }
            "forest" => {
                let mut p = ForestParams::default();
                for (k, v) in pairs {
                    let n: usize = v.parse().map_err(|_| bad(k, v))?;
                    match k {
                        "trees" => p.trees = n,
                        "max_depth" => p.max_depth = n,
                        "min_leaf" => p.min_leaf = n,
                        "mtry" => p.mtry = n,
                        _ => return Err(Error::Config(format!("unknown forest parameter {k}"))),
                    }
                }
                LearnerSpec::Forest(p)
            }
            other => return Err(Error::Config(format!("unknown learner kind {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
enum Model {
    Ridge(Ridge),
    Knn(Knn),
    Forest(Forest),
}

/// A built-in learner fitted on a training multiset.
#[derive(Debug, Clone)]
pub struct FittedLearner {
    model: Model,
    training_hash: u64,
}

impl FittedLearner {
    pub fn kind(&self) -> &'static str {
        match self.model {
            Model::Ridge(_) => "ridge",
            Model::Knn(_) => "knn",
            Model::Forest(_) => "forest",
        }
    }

    pub fn training_hash(&self) -> u64 {
        self.training_hash
    }
}

impl Predictor for FittedLearner {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        match &self.model {
            Model::Ridge(m) => m.predict(x),
            Model::Knn(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
        }
    }
}
