use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

use super::{canonicalize, check_dim};

/// Ridge regression with an unpenalized intercept.
///
/// Solves `(XcᵀXc + λI) β = Xcᵀyc` on centered data. When the penalized Gram
/// matrix is numerically singular (e.g. `λ = 0` with collinear columns) a
/// small diagonal jitter is added, growing by 100× until the factorization
/// succeeds.
#[derive(Debug, Clone)]
pub struct Ridge {
    intercept: f64,
    coef: Vec<f64>,
}

impl Ridge {
    pub fn fit(x: &Matrix, y: &[f64], lambda: f64) -> Result<Self> {
        let (x, y) = canonicalize(x, y)?;
        let n = x.rows() as f64;
        let d = x.cols();

        let mut x_mean = vec![0.0; d];
        for r in x.row_iter() {
            for (m, v) in x_mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        x_mean.iter_mut().for_each(|m| *m /= n);
        let y_mean = y.iter().sum::<f64>() / n;

        let mut g = Matrix::zeros(d, d);
        let mut rhs = vec![0.0; d];
        let mut xc = vec![0.0; d];
        for (r, &yi) in x.row_iter().zip(&y) {
            for j in 0..d {
                xc[j] = r[j] - x_mean[j];
            }
            let yc = yi - y_mean;
            for i in 0..d {
                rhs[i] += xc[i] * yc;
                for j in 0..=i {
                    g.set(i, j, g.get(i, j) + xc[i] * xc[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                g.set(j, i, g.get(i, j));
            }
        }

        let coef = if rhs.iter().all(|&v| v == 0.0) {
            vec![0.0; d]
        } else {
            solve_penalized(&g, &rhs, lambda)?
        };
        let intercept = y_mean - coef.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self { intercept, coef })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.coef.len(), x)?;
        Ok(self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }
}

fn solve_penalized(g: &Matrix, rhs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let d = g.rows();
    let mean_diag = (0..d).map(|i| g.get(i, i)).sum::<f64>() / d as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = 0.0;
    for attempt in 0..8 {
        let mut gp = g.clone();
        for i in 0..d {
            gp.set(i, i, gp.get(i, i) + lambda + jitter);
        }
        match Cholesky::factor(&gp) {
            Ok(chol) => return chol.solve(rhs),
            Err(Error::SingularGram { .. }) => {
                jitter = scale * 1e-12 * 100f64.powi(attempt);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::SingularGram {
        condition: f64::INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [4.0]]).unwrap();
        let y = vec![0.0, 2.0, 4.0, 8.0];
        let m = Ridge::fit(&x, &y, 0.0).unwrap();
        assert!((m.predict(&[3.0]).unwrap() - 6.0).abs() < 1e-8);
    }

    #[test]
    fn interpolates_consistent_linear_system() {
        let rows: Vec<[f64; 3]> = (0..12)
            .map(|i| {
                let t = i as f64;
                [t.sin(), (0.7 * t).cos(), 0.1 * t]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 2.0 * r[0] - r[1] + 0.5 * r[2]).collect();
        let m = Ridge::fit(&x, &y, 0.0).unwrap();
        for (r, yi) in rows.iter().zip(&y) {
            assert!((m.predict(r).unwrap() - yi).abs() < 1e-8);
        }
    }

    #[test]
    fn penalty_shrinks_slope() {
        let x = Matrix::from_rows(&[[-1.0], [0.0], [1.0]]).unwrap();
        let y = vec![-1.0, 0.0, 1.0];
        // Centered: XcᵀXc = 2, Xcᵀyc = 2, so β = 2 / (2 + λ).
        let m = Ridge::fit(&x, &y, 2.0).unwrap();
        assert!((m.coefficients()[0] - 0.5).abs() < 1e-15);
        assert!(m.intercept().abs() < 1e-15);
    }

    #[test]
    fn duplicated_columns_fall_back_to_jitter() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let y = vec![2.0, 4.0, 6.0];
        let m = Ridge::fit(&x, &y, 0.0).unwrap();
        assert!((m.predict(&[4.0, 4.0]).unwrap() - 8.0).abs() < 1e-6);
    }
}
