use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{canonicalize, check_dim};

/// k-nearest-neighbours regression.
///
/// Features are standardized with the training mean and standard deviation
/// (zero-variance columns are left unscaled). Distance ties are broken by the
/// canonical row order, so the prediction depends only on the training multiset.
#[derive(Debug, Clone)]
pub struct Knn {
    k: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    x: Matrix,
    y: Vec<f64>,
}

impl Knn {
    pub fn fit(x: &Matrix, y: &[f64], k: usize) -> Result<Self> {
        let (x, y) = canonicalize(x, y)?;
        if k == 0 || k > x.rows() {
            return Err(Error::BadHyperparameter(format!(
                "knn k = {k} must be in 1..={}",
                x.rows()
            )));
        }
        let n = x.rows() as f64;
        let d = x.cols();
        let mut center = vec![0.0; d];
        for r in x.row_iter() {
            for (c, v) in center.iter_mut().zip(r) {
                *c += v;
            }
        }
        center.iter_mut().for_each(|c| *c /= n);
        let mut scale = vec![0.0; d];
        for r in x.row_iter() {
            for j in 0..d {
                scale[j] += (r[j] - center[j]).powi(2);
            }
        }
        for s in &mut scale {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        let mut z = Vec::with_capacity(x.rows() * d);
        for r in x.row_iter() {
            z.extend(r.iter().zip(&center).zip(&scale).map(|((v, c), s)| (v - c) / s));
        }
        let x = Matrix::new(x.rows(), d, z)?;
        Ok(Self {
            k,
            center,
            scale,
            x,
            y,
        })
    }

    pub fn predict(&self, q: &[f64]) -> Result<f64> {
        check_dim(self.center.len(), q)?;
        let zq: Vec<f64> = q
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((v, c), s)| (v - c) / s)
            .collect();
        let mut dist: Vec<(f64, usize)> = self
            .x
            .row_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&zq).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering { a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) };
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        Ok(dist.iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.k as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_neighbourhood_is_the_mean() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [3.0, 1.0], [1.0, -2.0], [8.0, 4.0]]).unwrap();
        let y = vec![1.0, 2.0, 4.0, 9.0];
        let m = Knn::fit(&x, &y, 4).unwrap();
        for q in [[0.0, 0.0], [100.0, -50.0], [3.0, 1.0]] {
            assert!((m.predict(&q).unwrap() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_neighbour_returns_own_response() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.5], [7.0]]).unwrap();
        let y = vec![10.0, -1.0, 3.0, 0.5];
        let m = Knn::fit(&x, &y, 1).unwrap();
        for (i, yi) in y.iter().enumerate() {
            assert_eq!(m.predict(x.row(i)).unwrap(), *yi);
        }
    }

    #[test]
    fn bad_k() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(Knn::fit(&x, &[1.0, 2.0], 0).is_err());
        assert!(Knn::fit(&x, &[1.0, 2.0], 3).is_err());
    }
}
