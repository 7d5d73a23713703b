//! Split-conformal baseline around the same stacked point predictor.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{conformal_rank, PredictionInterval};
use crate::error::{Error, Result};
use crate::folding::FoldScheme;
use crate::learners::{Learner, Predictor};
use crate::linalg::Matrix;
use crate::pipeline::StackedRegressor;
use crate::rng;
use crate::stack::Dataset;

/// Number of calibration units for `n` training units at `fraction`.
pub fn calibration_size(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1))
}

/// The rank-`⌈(1 − α)(n_cal + 1)⌉` value of `residuals`.
pub fn split_quantile(residuals: &[f64], alpha: f64) -> Result<f64> {
    let rank = conformal_rank(alpha, residuals.len()).map_err(|e| match e {
        Error::RankOutOfRange { .. } => Error::CalibrationTooSmall {
            size: residuals.len(),
            alpha,
        },
        other => other,
    })?;
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// Stacked point predictor fitted on a proper training subset, with absolute
/// residuals on a held-out calibration subset. Intervals are `ŷ(x) ± q`.
#[derive(Debug, Clone)]
pub struct SplitConformal<P> {
    model: StackedRegressor<P>,
    residuals: Vec<f64>,
}

impl<P: Predictor> SplitConformal<P> {
    pub fn fit<L>(train: &Dataset, learners: &[L], folds: usize, calib_fraction: f64, seed: u64) -> Result<Self>
    where
        L: Learner<Model = P>,
    {
        if !(calib_fraction > 0.0 && calib_fraction < 1.0) {
            return Err(Error::Config(format!(
                "calibration fraction must lie in (0, 1), got {calib_fraction}"
            )));
        }
        let n_cal = calibration_size(train.n(), calib_fraction);
        if n_cal == 0 {
            return Err(Error::CalibrationTooSmall {
                size: 0,
                alpha: f64::NAN,
            });
        }
        let mut order: Vec<usize> = (0..train.n()).collect();
        order.shuffle(&mut rng::child(seed, "calibration"));
        let (cal_idx, proper_idx) = order.split_at(n_cal);
        let proper = train.subset(proper_idx)?;
        let calib = train.subset(cal_idx)?;

        let scheme = FoldScheme::sample(proper.n(), folds, rng::child_seed(seed, "folds"))?;
        let model = StackedRegressor::fit(&proper, learners, &scheme)?;
        let residuals = (0..calib.n())
            .map(|i| Ok((calib.y()[i] - model.point(calib.x().row(i))?).abs()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, residuals })
    }

    pub fn calibration_size(&self) -> usize {
        self.residuals.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        split_quantile(&self.residuals, alpha)
    }

    pub fn interval(&self, x: &[f64], alpha: f64) -> Result<PredictionInterval> {
        let q = self.quantile(alpha)?;
        let point = self.model.point(x)?;
        Ok(symmetric_interval(point, q))
    }

    pub fn intervals(&self, x_test: &Matrix, alpha: f64) -> Result<Vec<PredictionInterval>> {
        let q = self.quantile(alpha)?;
        let z = self.model.features(x_test)?;
        (0..z.rows())
            .into_par_iter()
            .map(|i| Ok(symmetric_interval(self.model.meta().point(z.row(i))?, q)))
            .collect()
    }
}

fn symmetric_interval(point: f64, q: f64) -> PredictionInterval {
    PredictionInterval {
        lower: point - q,
        upper: point + q,
        point,
        truncated_low: false,
        truncated_high: false,
        floor_events: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_rank_for_nineteen_residuals() {
        let residuals: Vec<f64> = (1..=19).rev().map(f64::from).collect();
        // ⌈0.9 · 20⌉ = 18.
        assert_eq!(split_quantile(&residuals, 0.1).unwrap(), 18.0);
    }

    #[test]
    fn too_few_residuals() {
        assert!(matches!(
            split_quantile(&[1.0, 2.0, 3.0], 0.1),
            Err(Error::CalibrationTooSmall { size: 3, .. })
        ));
    }

    #[test]
    fn calibration_split_sizes() {
        assert_eq!(calibration_size(100, 0.3), 30);
        assert_eq!(calibration_size(3, 0.99), 2);
    }
}
