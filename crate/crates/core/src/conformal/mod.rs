//! Full conformal prediction for a linear meta-learner.
//!
//! The meta-learner is least squares without intercept on the second-level
//! features `Z`. For a candidate response `y₀` at a test point `z₀`, both the
//! augmented fit and the residual-scale fit on `n + 1` rows are obtained from
//! `A = (ZᵀZ)⁻¹` through one Sherman–Morrison update `B`, computed once per test
//! point. Conformity scores are absolute residuals divided by `1 + δ̂`, where
//! `δ̂` is the fitted residual scale. Interval limits are found by bisection
//! from the point prediction outwards.

mod oracle;
mod probe;
mod split;

pub use oracle::{
    augmented_scores, brute_force_interval, run_oracle_check, uniform_grid, OracleCheckConfig, OracleSummary,
};
pub use probe::{stability_probe, ProbeConfig, StabilityReport};
pub use split::{calibration_size, split_quantile, SplitConformal};

use crate::error::{Error, Result};
use crate::linalg::{dot, gram_inverse, matvec, matvec_transposed, rank_one_inverse_update, Matrix};

/// Relative tolerance used when no absolute `epsilon` is configured.
pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-3;
pub const DEFAULT_BRACKET_MULTIPLE: f64 = 10.0;
pub const DEFAULT_DENOM_FLOOR: f64 = 1e-6;
/// Bracket doublings attempted when `expand_bracket` is on.
pub const MAX_BRACKET_EXPANSIONS: usize = 8;

/// Settings for one conformal interval computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalConfig {
    /// Miscoverage level in (0, 1).
    pub alpha: f64,
    /// Bisection tolerance in response units; `None` means `1e-3 · sd(y)`.
    pub epsilon: Option<f64>,
    /// Search bracket half-width in standard deviations of `y`.
    pub u: f64,
    /// Lower bound applied to every score denominator `1 + δ̂`.
    pub denom_floor: f64,
    /// Retry with a doubled bracket while its edge is still conformal.
    pub expand_bracket: bool,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: None,
            u: DEFAULT_BRACKET_MULTIPLE,
            denom_floor: DEFAULT_DENOM_FLOOR,
            expand_bracket: false,
        }
    }
}

impl ConformalConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
            }
        }
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(Error::Config(format!("u must be positive, got {}", self.u)));
        }
        if !(self.denom_floor > 0.0 && self.denom_floor.is_finite()) {
            return Err(Error::Config(format!(
                "denom_floor must be positive, got {}",
                self.denom_floor
            )));
        }
        Ok(())
    }

    /// Absolute bisection tolerance for responses with standard deviation `sd`.
    pub fn tolerance(&self, sd: f64) -> f64 {
        self.epsilon.unwrap_or(DEFAULT_RELATIVE_EPSILON * sd)
    }
}

/// Writes `alpha` as `p / 10^j` when it is a short decimal.
fn decimal_fraction(alpha: f64) -> Option<(u128, u128)> {
    let mut q: u128 = 1;
    for _ in 0..=12 {
        let p = (alpha * q as f64).round();
        if (alpha - p / q as f64).abs() <= 1e-15 {
            return Some((p as u128, q));
        }
        q *= 10;
    }
    None
}

/// Order-statistic rank `⌈(1 − α)(n + 1)⌉` (1-based).
///
/// Decimal `α` values are handled in exact integer arithmetic; anything else
/// is nudged down by `1e-12` before taking the ceiling.
pub fn conformal_rank(alpha: f64, n: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n1 = n as u128 + 1;
    let rank = match decimal_fraction(alpha) {
        Some((p, q)) => ((q - p) * n1).div_ceil(q),
        None => ((1.0 - alpha) * n1 as f64 - 1e-12).ceil().max(1.0) as u128,
    } as usize;
    if rank > n {
        return Err(Error::RankOutOfRange { rank, n });
    }
    Ok(rank)
}

/// The `k`-th smallest value (1-based) of `values`, reordering it in place.
pub(crate) fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Fitted meta-learner: `A = (ZᵀZ)⁻¹`, `β̂ = A Zᵀ y`, and `sd(y)`.
#[derive(Debug, Clone)]
pub struct MetaState {
    a: Matrix,
    beta: Vec<f64>,
    sd: f64,
    z: Matrix,
    y: Vec<f64>,
}

impl MetaState {
    pub fn fit(z: Matrix, y: Vec<f64>) -> Result<Self> {
        if z.rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: z.rows(),
                right: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if z.rows() <= z.cols() {
            return Err(Error::SingularGram {
                condition: f64::INFINITY,
            });
        }
        let a = gram_inverse(&z)?;
        let beta = matvec(&a, &matvec_transposed(&z, &y)?)?;
        Ok(Self {
            a,
            beta,
            sd: sample_sd(&y),
            z,
            y,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn m(&self) -> usize {
        self.beta.len()
    }

    pub fn inverse_gram(&self) -> &Matrix {
        &self.a
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn response_sd(&self) -> f64 {
        self.sd
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Point prediction `z₀ᵀβ̂`.
    pub fn point(&self, z0: &[f64]) -> Result<f64> {
        if z0.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: z0.len(),
            });
        }
        Ok(dot(z0, &self.beta))
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for a single value.
pub fn sample_sd(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Conformity score of the candidate pair and the rank-`k` training score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub r0: f64,
    pub r_hat: f64,
    /// Denominators raised to the floor while computing this pair.
    pub floored: usize,
}

impl ScorePair {
    pub fn accepts(&self) -> bool {
        self.r0 <= self.r_hat
    }
}

/// Per-test-point scorer holding `B z₀` and the conformal rank.
struct QueryScorer<'a> {
    state: &'a MetaState,
    z0: &'a [f64],
    b_z0: Vec<f64>,
    rank: usize,
    floor: f64,
}

impl<'a> QueryScorer<'a> {
    fn new(state: &'a MetaState, z0: &'a [f64], b: &Matrix, alpha: f64, floor: f64) -> Result<Self> {
        if z0.len() != state.m() {
            return Err(Error::DimensionMismatch {
                expected: state.m(),
                got: z0.len(),
            });
        }
        Ok(Self {
            state,
            z0,
            b_z0: matvec(b, z0)?,
            rank: conformal_rank(alpha, state.n())?,
            floor,
        })
    }

    /// `β + (target − z₀ᵀβ) B z₀`: coefficients after appending `(z₀, target)`.
    fn augmented(&self, beta: &[f64], target: f64) -> Vec<f64> {
        let step = target - dot(self.z0, beta);
        beta.iter().zip(&self.b_z0).map(|(b, bz)| b + step * bz).collect()
    }

    fn scores(&self, y0: f64) -> ScorePair {
        let st = self.state;
        let n = st.n();

        let beta0 = self.augmented(&st.beta, y0);
        let mut res: Vec<f64> = st
            .z
            .row_iter()
            .zip(&st.y)
            .map(|(zi, yi)| (yi - dot(zi, &beta0)).abs())
            .collect();
        let res0 = (y0 - dot(self.z0, &beta0)).abs();

        let beta_res = matvec(&st.a, &matvec_transposed(&st.z, &res).expect("n rows")).expect("M×M");
        let beta_res0 = self.augmented(&beta_res, res0);

        let mut floored = 0;
        let mut denom = |delta: f64| {
            let d = 1.0 + delta;
            if d >= self.floor {
                d
            } else {
                floored += 1;
                self.floor
            }
        };
        for (r, zi) in res.iter_mut().zip(st.z.row_iter()) {
            *r /= denom(dot(zi, &beta_res0));
        }
        let r0 = res0 / denom(dot(self.z0, &beta_res0));
        debug_assert_eq!(res.len(), n);
        let r_hat = kth_smallest(&mut res, self.rank);
        ScorePair { r0, r_hat, floored }
    }
}

/// Scores `(r₀, r̂)` for candidate response `y0` at `z0`, given
/// `B = rank_one_inverse_update(A, z0)`.
pub fn conformity_scores(
    state: &MetaState,
    z0: &[f64],
    y0: f64,
    b: &Matrix,
    cfg: &ConformalConfig,
) -> Result<ScorePair> {
    cfg.validate()?;
    Ok(QueryScorer::new(state, z0, b, cfg.alpha, cfg.denom_floor)?.scores(y0))
}

/// A prediction interval in response units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    /// The lower bracket edge itself was conformal.
    pub truncated_low: bool,
    /// The upper bracket edge itself was conformal.
    pub truncated_high: bool,
    /// Floored score denominators seen during the search.
    pub floor_events: usize,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated_low || self.truncated_high
    }
}

/// Moves `inside` (conformal) towards `outside` until they are within `eps`.
fn bisect(mut inside: f64, mut outside: f64, eps: f64, mut accept: impl FnMut(f64) -> bool) -> f64 {
    while (inside - outside).abs() > eps {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if accept(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Full conformal interval at `z0` by bisection on `[point − u·sd, point]`
/// and `[point, point + u·sd]`.
pub fn full_cp_interval(state: &MetaState, z0: &[f64], cfg: &ConformalConfig) -> Result<PredictionInterval> {
    cfg.validate()?;
    let b = rank_one_inverse_update(&state.a, z0)?;
    let scorer = QueryScorer::new(state, z0, &b, cfg.alpha, cfg.denom_floor)?;
    let point = state.point(z0)?;
    let eps = cfg.tolerance(state.sd);

    let mut floor_events = 0;
    let mut accept = |y0: f64| {
        let s = scorer.scores(y0);
        floor_events += s.floored;
        s.accepts()
    };

    let mut side = |direction: f64| -> (f64, bool) {
        let mut u = cfg.u;
        let mut attempts = 0;
        loop {
            let edge = point + direction * u * state.sd;
            let limit = bisect(point, edge, eps, &mut accept);
            let truncated = edge != point && accept(edge);
            if truncated && cfg.expand_bracket && attempts < MAX_BRACKET_EXPANSIONS {
                u *= 2.0;
                attempts += 1;
                continue;
            }
            return (limit, truncated);
        }
    };
    let (lower, truncated_low) = side(-1.0);
    let (upper, truncated_high) = side(1.0);

    Ok(PredictionInterval {
        lower,
        upper,
        point,
        truncated_low,
        truncated_high,
        floor_events,
    })
}

/// Intervals for every row of `z_test`, computed independently per row.
pub fn full_cp_intervals(state: &MetaState, z_test: &Matrix, cfg: &ConformalConfig) -> Result<Vec<PredictionInterval>> {
    use rayon::prelude::*;
    (0..z_test.rows())
        .into_par_iter()
        .map(|i| full_cp_interval(state, z_test.row(i), cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_fit() -> MetaState {
        let rows: Vec<[f64; 2]> = (0..12).map(|i| [1.0, i as f64 * 0.5]).collect();
        let y = rows.iter().map(|r| 3.0 * r[0] - 2.0 * r[1]).collect();
        MetaState::fit(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn rank_arithmetic() {
        assert_eq!(conformal_rank(0.1, 9).unwrap(), 9);
        assert_eq!(conformal_rank(0.1, 19).unwrap(), 18);
        assert_eq!(conformal_rank(0.2, 19).unwrap(), 16);
        assert_eq!(conformal_rank(0.15, 99).unwrap(), 85);
        assert!(matches!(
            conformal_rank(0.1, 5),
            Err(Error::RankOutOfRange { rank: 6, n: 5 })
        ));
        assert!(conformal_rank(0.0, 5).is_err());
        assert!(conformal_rank(1.0, 5).is_err());
        // 1/3 is not a short decimal: (2/3)·12 = 8 exactly.
        assert_eq!(conformal_rank(1.0 / 3.0, 11).unwrap(), 8);
    }

    #[test]
    fn intercept_only_meta_is_the_mean() {
        let y = vec![1.0, 4.0, 2.5, 8.5];
        let st = MetaState::fit(Matrix::column(&[1.0; 4]).unwrap(), y).unwrap();
        assert!((st.coefficients()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_recovers_coefficients() {
        let st = exact_fit();
        assert!((st.coefficients()[0] - 3.0).abs() < 1e-8);
        assert!((st.coefficients()[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_noise_scores_vanish() {
        let st = exact_fit();
        let z0 = [1.0, 2.2];
        let b = rank_one_inverse_update(st.inverse_gram(), &z0).unwrap();
        let y0 = 3.0 - 2.0 * 2.2;
        let s = conformity_scores(&st, &z0, y0, &b, &ConformalConfig::with_alpha(0.2)).unwrap();
        assert!(s.r0.abs() < 1e-10 && s.r_hat.abs() < 1e-10);
    }

    #[test]
    fn zero_noise_interval_collapses() {
        let st = exact_fit();
        let cfg = ConformalConfig::with_alpha(0.2);
        let iv = full_cp_interval(&st, &[1.0, 1.7], &cfg).unwrap();
        let eps = cfg.tolerance(st.response_sd());
        assert!(iv.lower <= iv.point && iv.point <= iv.upper);
        assert!(iv.width() <= 2.0 * eps, "width {}", iv.width());
    }

    #[test]
    fn rank_precondition_is_enforced() {
        let st = exact_fit();
        let z0 = [1.0, 0.0];
        let cfg = ConformalConfig::with_alpha(0.05); // ⌈0.95·13⌉ = 13 > 12
        assert!(matches!(
            full_cp_interval(&st, &z0, &cfg),
            Err(Error::RankOutOfRange { rank: 13, n: 12 })
        ));
    }

    #[test]
    fn meta_fit_needs_more_rows_than_columns() {
        let z = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(MetaState::fit(z, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = [
            ConformalConfig { alpha: 1.5, ..Default::default() },
            ConformalConfig { epsilon: Some(0.0), ..Default::default() },
            ConformalConfig { u: -1.0, ..Default::default() },
            ConformalConfig { denom_floor: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn bisection_stops_within_tolerance() {
        // Accept region y ≥ -1.234 inside a bracket [-10, 0].
        let got = bisect(0.0, -10.0, 1e-6, |y| y >= -1.234);
        assert!(got >= -1.234 && got - (-1.234) <= 1e-6);
    }

    #[test]
    fn kth_smallest_with_ties() {
        let mut v = vec![3.0, 1.0, 2.0, 2.0, 5.0];
        assert_eq!(kth_smallest(&mut v, 3), 2.0);
        assert_eq!(kth_smallest(&mut v, 4), 3.0);
        assert_eq!(kth_smallest(&mut v, 5), 5.0);
    }
}
