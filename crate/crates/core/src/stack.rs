//! The two-level stack: cross-fitted base-learner predictions for training
//! units and full-sample base learners for new units.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::folding::FoldScheme;
use crate::learners::{symmetric_hash, Learner, Predictor};
use crate::linalg::Matrix;

/// Features `X` (n×d) with responses `y` and column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if x.cols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if x.rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: y.len(),
            });
        }
        if names.len() != x.cols() {
            return Err(Error::LengthMismatch {
                left: x.cols(),
                right: names.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { x, y, names })
    }

    /// Dataset with default column names `x1..xd`.
    pub fn unnamed(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let names = (1..=x.cols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Rows at `indices`, in that order. An empty selection is an error.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.n(),
            });
        }
        Self::new(
            self.x.select_rows(indices),
            indices.iter().map(|&i| self.y[i]).collect(),
            self.names.clone(),
        )
    }

    /// Order-invariant fingerprint of the rows.
    pub fn fingerprint(&self) -> u64 {
        symmetric_hash(&self.x, &self.y).expect("dataset is nonempty")
    }
}

/// Out-of-fold base-learner predictions `Z` (n×M) paired with responses.
#[derive(Debug, Clone)]
pub struct SecondLevelData {
    pub z: Matrix,
    pub y: Vec<f64>,
    pub scheme: FoldScheme,
}

/// Checks that every fold leaves enough training rows for every learner.
fn check_folds<L: Learner>(scheme: &FoldScheme, learners: &[L]) -> Result<()> {
    let needed = learners.iter().map(Learner::min_train_size).max().unwrap_or(1);
    let largest_fold = scheme.fold_sizes().into_iter().max().unwrap_or(0);
    let size = scheme.n() - largest_fold;
    if size < needed {
        return Err(Error::FoldTooSmall { size, needed });
    }
    Ok(())
}

/// Cross-fits every learner: `Z[i][m]` is learner `m`, trained on all units
/// outside unit `i`'s fold, evaluated at `Xᵢ`. Performs exactly `K·M` fits.
pub fn cross_fit<L: Learner>(data: &Dataset, learners: &[L], scheme: &FoldScheme) -> Result<SecondLevelData> {
    if learners.is_empty() {
        return Err(Error::Config("at least one base learner is required".into()));
    }
    if scheme.n() != data.n() {
        return Err(Error::LengthMismatch {
            left: scheme.n(),
            right: data.n(),
        });
    }
    check_folds(scheme, learners)?;

    let m = learners.len();
    let grid: Vec<(usize, usize)> = (0..scheme.folds())
        .flat_map(|k| (0..m).map(move |j| (k, j)))
        .collect();
    let columns = grid
        .par_iter()
        .map(|&(k, j)| -> Result<(usize, usize, Vec<(usize, f64)>)> {
            let train = data.subset(&scheme.exclusion_indices(k)?)?;
            let model = learners[j].fit(train.x(), train.y())?;
            let preds = scheme
                .members(k)?
                .into_iter()
                .map(|i| Ok((i, model.predict(data.x().row(i))?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((k, j, preds))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut z = Matrix::zeros(data.n(), m);
    for (_, j, preds) in columns {
        for (i, v) in preds {
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
            z.set(i, j, v);
        }
    }
    Ok(SecondLevelData {
        z,
        y: data.y().to_vec(),
        scheme: scheme.clone(),
    })
}

/// Base learners fitted on the whole training sample.
#[derive(Debug, Clone)]
pub struct StackModel<P> {
    models: Vec<P>,
    d: usize,
    fingerprint: u64,
}

/// Fits each learner once on all of `data`.
pub fn fit_full<L: Learner>(data: &Dataset, learners: &[L]) -> Result<StackModel<L::Model>> {
    if learners.is_empty() {
        return Err(Error::Config("at least one base learner is required".into()));
    }
    let models = learners
        .par_iter()
        .map(|l| l.fit(data.x(), data.y()))
        .collect::<Result<Vec<_>>>()?;
    Ok(StackModel {
        models,
        d: data.d(),
        fingerprint: data.fingerprint(),
    })
}

impl<P: Predictor> StackModel<P> {
    pub fn learner_count(&self) -> usize {
        self.models.len()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn models(&self) -> &[P] {
        &self.models
    }

    /// Second-level feature vector `(μ̂₁(x), …, μ̂_M(x))`.
    pub fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| {
                let v = m.predict(x)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite)
                }
            })
            .collect()
    }

    /// Second-level features `Z₀` (m×M) for a batch of test rows.
    pub fn predict_features(&self, x_test: &Matrix) -> Result<Matrix> {
        if x_test.rows() > 0 && x_test.cols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x_test.cols(),
            });
        }
        let rows = (0..x_test.rows())
            .into_par_iter()
            .map(|i| self.predict_row(x_test.row(i)))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.models.len()));
        }
        Matrix::from_rows(&rows)
    }
}
