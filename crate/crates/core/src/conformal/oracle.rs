//! Brute-force reference for the conformal interval.
//!
//! Every candidate response triggers two least-squares fits on the augmented
//! `(n + 1)`-row design, using a fresh Cholesky inverse of the augmented Gram
//! matrix instead of the rank-one update.

use rand::Rng as _;

use super::{conformal_rank, full_cp_interval, kth_smallest, ConformalConfig, MetaState, PredictionInterval, ScorePair};
use crate::error::{Error, Result};
use crate::linalg::{dot, gram, gram_inverse, inverse_residual, matvec, matvec_transposed, rank_one_inverse_update, Matrix};
use crate::rng;
use crate::synth::gaussian_meta_sample;

/// Augmented design `[Z; z₀ᵀ]` and the inverse of its Gram matrix.
struct AugmentedDesign {
    z: Matrix,
    a: Matrix,
    y: Vec<f64>,
}

impl AugmentedDesign {
    fn new(z: &Matrix, y: &[f64], z0: &[f64]) -> Result<Self> {
        if z.rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: z.rows(),
                right: y.len(),
            });
        }
        let mut aug = z.clone();
        aug.push_row(z0)?;
        let a = gram_inverse(&aug)?;
        let mut y = y.to_vec();
        y.push(0.0);
        Ok(Self { z: aug, a, y })
    }

    fn fit(&self, target: &[f64]) -> Vec<f64> {
        matvec(&self.a, &matvec_transposed(&self.z, target).expect("rows")).expect("square")
    }

    fn scores(&mut self, y0: f64, rank: usize, floor: f64) -> ScorePair {
        let n = self.z.rows() - 1;
        self.y[n] = y0;
        let beta = self.fit(&self.y);
        let res: Vec<f64> = self
            .z
            .row_iter()
            .zip(&self.y)
            .map(|(zi, yi)| (yi - dot(zi, &beta)).abs())
            .collect();
        let beta_res = self.fit(&res);
        let mut floored = 0;
        let mut scores: Vec<f64> = self
            .z
            .row_iter()
            .zip(&res)
            .map(|(zi, r)| {
                let d = 1.0 + dot(zi, &beta_res);
                if d < floor {
                    floored += 1;
                    r / floor
                } else {
                    r / d
                }
            })
            .collect();
        let r0 = scores[n];
        let r_hat = kth_smallest(&mut scores[..n], rank);
        ScorePair { r0, r_hat, floored }
    }
}

/// Scores for candidate `y0` from two from-scratch fits on the augmented design.
pub fn augmented_scores(z: &Matrix, y: &[f64], z0: &[f64], y0: f64, alpha: f64, denom_floor: f64) -> Result<ScorePair> {
    let rank = conformal_rank(alpha, y.len())?;
    Ok(AugmentedDesign::new(z, y, z0)?.scores(y0, rank, denom_floor))
}

/// `points` evenly spaced values covering `[center − half_width, center + half_width]`.
pub fn uniform_grid(center: f64, half_width: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![center],
        _ => {
            let lo = center - half_width;
            let step = 2.0 * half_width / (points - 1) as f64;
            (0..points).map(|i| lo + step * i as f64).collect()
        }
    }
}

/// Smallest and largest grid values accepted by the conformal test, or `None`
/// when no grid value is accepted.
pub fn brute_force_interval(
    z: &Matrix,
    y: &[f64],
    z0: &[f64],
    alpha: f64,
    grid: &[f64],
    denom_floor: f64,
) -> Result<Option<PredictionInterval>> {
    let rank = conformal_rank(alpha, y.len())?;
    let point = dot(z0, &matvec(&gram_inverse(z)?, &matvec_transposed(z, y)?)?);
    let mut design = AugmentedDesign::new(z, y, z0)?;
    let mut floor_events = 0;
    let accepted: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&y0| {
            let s = design.scores(y0, rank, denom_floor);
            floor_events += s.floored;
            s.accepts()
        })
        .collect();
    if accepted.is_empty() {
        return Ok(None);
    }
    let span = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| (a.min(g), b.max(g)))
    };
    let (lo, hi) = span(grid);
    let (lower, upper) = span(&accepted);
    Ok(Some(PredictionInterval {
        lower,
        upper,
        point,
        truncated_low: lower == lo,
        truncated_high: upper == hi,
        floor_events,
    }))
}

/// Parameters for [`run_oracle_check`].
#[derive(Debug, Clone)]
pub struct OracleCheckConfig {
    pub instances: usize,
    /// Inclusive range of training sizes.
    pub n_range: (usize, usize),
    /// Inclusive range of meta-feature counts.
    pub m_range: (usize, usize),
    pub grid_points: usize,
    pub alpha: f64,
    pub rank_one_instances: usize,
    pub seed: u64,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self {
            instances: 50,
            n_range: (30, 80),
            m_range: (1, 4),
            grid_points: 2000,
            alpha: 0.1,
            rank_one_instances: 1000,
            seed: 0,
        }
    }
}

/// Outcome of [`run_oracle_check`].
#[derive(Debug, Clone, Default)]
pub struct OracleSummary {
    pub instances: usize,
    pub interval_failures: Vec<String>,
    /// Largest endpoint gap divided by its tolerance `2ε + grid step`.
    pub worst_gap_ratio: f64,
    pub rank_one_instances: usize,
    pub rank_one_worst_residual: f64,
}

impl OracleSummary {
    pub fn passed(&self) -> bool {
        self.interval_failures.is_empty() && self.rank_one_worst_residual <= 1e-8
    }
}

/// Random SPD matrix `G = WᵀW + I` of size `m`.
fn random_spd(m: usize, rng: &mut rng::Rng) -> Matrix {
    let w: Vec<f64> = (0..(m + 2) * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = gram(&Matrix::new(m + 2, m, w).expect("finite"));
    for i in 0..m {
        g.set(i, i, g.get(i, i) + 1.0);
    }
    g
}

/// Compares [`full_cp_interval`] with [`brute_force_interval`] on random
/// Gaussian instances and checks Sherman–Morrison updates on random SPD
/// matrices.
pub fn run_oracle_check(cfg: &OracleCheckConfig) -> Result<OracleSummary> {
    let mut summary = OracleSummary {
        instances: cfg.instances,
        rank_one_instances: cfg.rank_one_instances,
        ..Default::default()
    };
    let ccfg = ConformalConfig::with_alpha(cfg.alpha);
    let mut rng = rng::child(cfg.seed, "oracle-check");
    for t in 0..cfg.instances {
        let n = rng.random_range(cfg.n_range.0..=cfg.n_range.1);
        let m = rng.random_range(cfg.m_range.0..=cfg.m_range.1);
        let (z_all, y_all) = gaussian_meta_sample(n + 1, m, &mut rng);
        let z = z_all.select_rows(&(0..n).collect::<Vec<_>>());
        let y = y_all[..n].to_vec();
        let z0 = z_all.row(n).to_vec();

        let state = MetaState::fit(z.clone(), y.clone())?;
        let fast = full_cp_interval(&state, &z0, &ccfg)?;
        let sd = state.response_sd();
        let grid = uniform_grid(fast.point, ccfg.u * sd, cfg.grid_points);
        let step = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
        let tol = 2.0 * ccfg.tolerance(sd) + step;
        let Some(slow) = brute_force_interval(&z, &y, &z0, cfg.alpha, &grid, ccfg.denom_floor)? else {
            summary
                .interval_failures
                .push(format!("instance {t} (n={n}, M={m}): no grid value accepted"));
            continue;
        };
        let gap = (fast.lower - slow.lower).abs().max((fast.upper - slow.upper).abs());
        summary.worst_gap_ratio = summary.worst_gap_ratio.max(gap / tol);
        if gap > tol {
            summary.interval_failures.push(format!(
                "instance {t} (n={n}, M={m}): bisection [{:.6}, {:.6}] vs grid [{:.6}, {:.6}], tolerance {tol:.3e}",
                fast.lower, fast.upper, slow.lower, slow.upper
            ));
        }
    }
    for _ in 0..cfg.rank_one_instances {
        let m = rng.random_range(1..=6);
        let g = random_spd(m, &mut rng);
        let z0: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = gram_inverse_of_spd(&g)?;
        let b = rank_one_inverse_update(&a, &z0)?;
        let mut updated = g.clone();
        for i in 0..m {
            for j in 0..m {
                updated.set(i, j, updated.get(i, j) + z0[i] * z0[j]);
            }
        }
        let r = inverse_residual(&b, &updated)?;
        summary.rank_one_worst_residual = summary.rank_one_worst_residual.max(r);
    }
    Ok(summary)
}

fn gram_inverse_of_spd(g: &Matrix) -> Result<Matrix> {
    Ok(crate::linalg::Cholesky::factor(g)?.inverse())
}
