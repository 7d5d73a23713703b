//! Small dense linear algebra for the meta-learner.
//!
//! The number of base learners `M` is tiny, so everything here is a plain
//! row-major `Vec<f64>` with naive loops. The only factorization is Cholesky,
//! used to invert the Gram matrix `ZᵀZ`; subsequent per-query inverses come from
//! the Sherman–Morrison rank-one update.

use crate::error::{Error, Result};

/// Condition-number estimate above which a Gram matrix is treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Sherman–Morrison denominators smaller than this in magnitude are rejected.
pub const MIN_UPDATE_DENOMINATOR: f64 = 1e-12;

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a list of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// A single column of values.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, and a zero-column matrix still has rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col_values(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Appends one row; the row length must equal `cols` (or define it when empty).
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.data.is_empty() {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn matvec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.cols != x.len() {
        return Err(Error::DimensionMismatch {
            expected: a.cols,
            got: x.len(),
        });
    }
    Ok(a.row_iter().map(|r| dot(r, x)).collect())
}

/// `Aᵀx` without materializing the transpose.
pub fn matvec_transposed(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if a.rows != x.len() {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            got: x.len(),
        });
    }
    let mut out = vec![0.0; a.cols];
    for (r, &xi) in a.row_iter().zip(x) {
        for (o, &v) in out.iter_mut().zip(r) {
            *o += v * xi;
        }
    }
    Ok(out)
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            expected: a.cols,
            got: b.rows,
        });
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let crow = &mut c.data[i * b.cols..(i + 1) * b.cols];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// `ZᵀZ`.
pub fn gram(z: &Matrix) -> Matrix {
    let m = z.cols;
    let mut g = Matrix::zeros(m, m);
    for r in z.row_iter() {
        for i in 0..m {
            let ri = r[i];
            for j in 0..=i {
                g.data[i * m + j] += ri * r[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            g.data[j * m + i] = g.data[i * m + j];
        }
    }
    g
}

/// Lower-triangular Cholesky factor `L` with `G = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factorizes a symmetric positive definite matrix.
    ///
    /// Fails with [`Error::SingularGram`] when a pivot is not positive or the
    /// diagonal-ratio condition estimate exceeds [`MAX_GRAM_CONDITION`].
    pub fn factor(g: &Matrix) -> Result<Self> {
        let n = g.rows;
        if n != g.cols {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.cols,
            });
        }
        let scale = (0..n).map(|i| g.get(i, i).abs()).fold(0.0, f64::max);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = g.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > scale * f64::EPSILON) {
                return Err(Error::SingularGram {
                    condition: f64::INFINITY,
                });
            }
            let ljj = d.sqrt();
            l.set(j, j, ljj);
            for i in j + 1..n {
                let mut s = g.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        let chol = Self { l };
        let condition = chol.condition_estimate();
        if condition > MAX_GRAM_CONDITION {
            return Err(Error::SingularGram { condition });
        }
        Ok(chol)
    }

    pub fn factor_matrix(&self) -> &Matrix {
        &self.l
    }

    /// `(max Lᵢᵢ / min Lᵢᵢ)²`, a cheap lower bound on the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.l.rows;
        if n == 0 {
            return 1.0;
        }
        let diag = (0..n).map(|i| self.l.get(i, i));
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        (hi / lo).powi(2)
    }

    /// Solves `G x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.rows;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l.get(i, k) * y[k];
            }
            y[i] /= self.l.get(i, i);
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l.get(k, i) * y[k];
            }
            y[i] /= self.l.get(i, i);
        }
        Ok(y)
    }

    /// `G⁻¹`, symmetrized.
    pub fn inverse(&self) -> Matrix {
        let n = self.l.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("square factor");
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv.symmetrize();
        inv
    }
}

/// `A = (ZᵀZ)⁻¹` via Cholesky.
pub fn gram_inverse(z: &Matrix) -> Result<Matrix> {
    if z.cols == 0 || z.rows < z.cols {
        return Err(Error::SingularGram {
            condition: f64::INFINITY,
        });
    }
    Ok(Cholesky::factor(&gram(z))?.inverse())
}

/// Sherman–Morrison: given `A = G⁻¹`, returns `(G + z₀z₀ᵀ)⁻¹ = A − A z₀ z₀ᵀ A / (1 + z₀ᵀ A z₀)`.
///
/// The result is re-symmetrized.
pub fn rank_one_inverse_update(a: &Matrix, z0: &[f64]) -> Result<Matrix> {
    let az = matvec(a, z0)?;
    let denom = 1.0 + dot(z0, &az);
    if denom.abs() < MIN_UPDATE_DENOMINATOR {
        return Err(Error::DenominatorNearZero { value: denom });
    }
    let m = a.rows;
    let mut b = a.clone();
    for i in 0..m {
        for j in 0..m {
            b.data[i * m + j] -= az[i] * az[j] / denom;
        }
    }
    b.symmetrize();
    Ok(b)
}

/// `‖A·B − I‖_∞`, used to check inverses.
pub fn inverse_residual(a: &Matrix, b: &Matrix) -> Result<f64> {
    let mut p = matmul(a, b)?;
    for i in 0..p.rows.min(p.cols) {
        p.data[i * p.cols + i] -= 1.0;
    }
    Ok(p.norm_inf())
}
