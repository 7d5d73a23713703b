//! Test-only oracles, written independently of the library's numerics.
#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use stacked_cp::learners::{Learner, Predictor};
use stacked_cp::linalg::Matrix;
use stacked_cp::Result;

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn naive_matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

pub fn naive_matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..x.len() {
                s += row[j] * x[j];
            }
            s
        })
        .collect()
}

pub fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Gauss–Jordan inversion with full pivoting.
pub fn gauss_jordan_inverse(a: &Dense) -> Option<Dense> {
    let n = a.len();
    let mut m = a.clone();
    let mut inv: Dense = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                if m[i][j].abs() > best {
                    (pr, pc, best) = (i, j, m[i][j].abs());
                }
            }
        }
        if best < 1e-300 {
            return None;
        }
        m.swap(k, pr);
        inv.swap(k, pr);
        if pc != k {
            for row in m.iter_mut() {
                row.swap(k, pc);
            }
            col_perm.swap(k, pc);
        }
        let p = m[k][k];
        for j in 0..n {
            m[k][j] /= p;
            inv[k][j] /= p;
        }
        for i in 0..n {
            if i != k {
                let f = m[i][k];
                if f != 0.0 {
                    for j in 0..n {
                        m[i][j] -= f * m[k][j];
                        inv[i][j] -= f * inv[k][j];
                    }
                }
            }
        }
    }
    // Column swaps of the input permute the rows of its inverse.
    let mut out = vec![Vec::new(); n];
    for (k, &orig) in col_perm.iter().enumerate() {
        out[orig] = inv[k].clone();
    }
    Some(out)
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Least squares by explicit normal equations and Gauss–Jordan.
pub fn ols(z: &Dense, y: &[f64]) -> Vec<f64> {
    let zt = transpose(z);
    let g = naive_matmul(&zt, z);
    let inv = gauss_jordan_inverse(&g).expect("invertible Gram");
    naive_matvec(&inv, &naive_matvec(&zt, y))
}

/// `⌈(1 − α)(n + 1)⌉`, computed in exact integer arithmetic from `alpha`
/// given as `num / den`.
pub fn rank_exact(num: u64, den: u64, n: u64) -> u64 {
    let top = (den - num) * (n + 1);
    top.div_ceil(den)
}

/// Conformity scores for candidate `y0` by refitting both regressions on the
/// augmented design from scratch.
pub fn dual_regression_scores(z: &Dense, y: &[f64], z0: &[f64], y0: f64, rank: usize, floor: f64) -> (f64, f64) {
    let mut za = z.clone();
    za.push(z0.to_vec());
    let mut ya = y.to_vec();
    ya.push(y0);
    let beta = ols(&za, &ya);
    let fitted = naive_matvec(&za, &beta);
    let res: Vec<f64> = ya.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).collect();
    let gamma = ols(&za, &res);
    let delta = naive_matvec(&za, &gamma);
    let scores: Vec<f64> = res
        .iter()
        .zip(&delta)
        .map(|(r, d)| r / (1.0 + d).max(floor))
        .collect();
    let n = y.len();
    let mut train = scores[..n].to_vec();
    train.sort_by(f64::total_cmp);
    (scores[n], train[rank - 1])
}

/// Learner whose rows carry their unit id in feature 0. Every fit records the
/// ids it saw; predictions are `1` when the queried id was among them.
#[derive(Default)]
pub struct SpyLearner {
    pub fits: AtomicUsize,
    pub seen: Mutex<Vec<Vec<usize>>>,
}

pub struct SpyModel {
    ids: Vec<usize>,
}

impl Predictor for SpyModel {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        let id = x[0] as usize;
        Ok(if self.ids.binary_search(&id).is_ok() { 1.0 } else { 0.0 })
    }
}

impl Learner for SpyLearner {
    type Model = SpyModel;

    fn fit(&self, x: &Matrix, _y: &[f64]) -> Result<SpyModel> {
        self.fits.fetch_add(1, Ordering::SeqCst);
        let mut ids: Vec<usize> = (0..x.rows()).map(|i| x.get(i, 0) as usize).collect();
        ids.sort_unstable();
        self.seen.lock().unwrap().push(ids.clone());
        Ok(SpyModel { ids })
    }
}
