//! End-to-end stacked conformal regressor: cross-fit, meta fit, full fit.

use rayon::prelude::*;

use crate::conformal::{full_cp_interval, ConformalConfig, MetaState, PredictionInterval};
use crate::error::Result;
use crate::folding::FoldScheme;
use crate::learners::{Learner, Predictor};
use crate::linalg::Matrix;
use crate::stack::{cross_fit, fit_full, Dataset, StackModel};

/// Feasible stack plus its conformalized linear meta-learner.
#[derive(Debug, Clone)]
pub struct StackedRegressor<P> {
    stack: StackModel<P>,
    meta: MetaState,
}

impl<P: Predictor> StackedRegressor<P> {
    /// `K·M` cross-fits for the meta-learner's training features, then `M`
    /// full-sample fits for test features.
    pub fn fit<L>(data: &Dataset, learners: &[L], scheme: &FoldScheme) -> Result<Self>
    where
        L: Learner<Model = P>,
    {
        let second = cross_fit(data, learners, scheme)?;
        let meta = MetaState::fit(second.z, second.y)?;
        let stack = fit_full(data, learners)?;
        Ok(Self { stack, meta })
    }

    pub fn stack(&self) -> &StackModel<P> {
        &self.stack
    }

    pub fn meta(&self) -> &MetaState {
        &self.meta
    }

    pub fn features(&self, x_test: &Matrix) -> Result<Matrix> {
        self.stack.predict_features(x_test)
    }

    pub fn point(&self, x: &[f64]) -> Result<f64> {
        self.meta.point(&self.stack.predict_row(x)?)
    }

    pub fn interval(&self, x: &[f64], cfg: &ConformalConfig) -> Result<PredictionInterval> {
        full_cp_interval(&self.meta, &self.stack.predict_row(x)?, cfg)
    }

    pub fn intervals(&self, x_test: &Matrix, cfg: &ConformalConfig) -> Result<Vec<PredictionInterval>> {
        let z = self.features(x_test)?;
        (0..z.rows())
            .into_par_iter()
            .map(|i| full_cp_interval(&self.meta, z.row(i), cfg))
            .collect()
    }
}
