//! Dense containers and the small set of factorizations the pipeline needs.
//!
//! Matrices are row-major with explicit dimensions. Nothing broadcasts: every
//! operation checks shapes and fails with [`FscreError::ShapeMismatch`].

use crate::error::{FscreError, Result};
use serde::{Deserialize, Serialize};

/// A pivot is treated as zero when it falls below this fraction of the
/// largest diagonal magnitude.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FscreError::shape("at least 1x1", format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(FscreError::shape(
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(FscreError::shape(
                    format!("row {i} with {p} entries"),
                    r.len(),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, p, data)
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let p = cols.len();
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return Err(FscreError::shape("columns of equal length", "ragged columns"));
        }
        let mut data = vec![0.0; n * p];
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                data[i * p + j] = v;
            }
        }
        Self::new(n, p, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    /// All columns as contiguous vectors.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.rows); self.cols];
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                out[j].push(v);
            }
        }
        out
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = v;
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(FscreError::shape(self.cols, v.len()));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(FscreError::shape(
                format!("{} rows", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Matrix::new(self.rows, idx.len(), data)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(self.cols * idx.len());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data)
    }

    /// Principal submatrix on `idx` (rows and columns).
    pub fn submatrix(&self, idx: &[usize]) -> Matrix {
        let k = idx.len();
        let mut m = Matrix::zeros(k.max(1), k.max(1));
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                m[(a, b)] = self[(i, j)];
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)].abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(FscreError::shape("square matrix", format!("{}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        let tol = PIVOT_TOLERANCE * a.max_abs_diag();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > tol) {
                return Err(FscreError::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> Matrix {
        Matrix::new(self.n, self.n, self.l.clone()).expect("square factor")
    }

    /// `L z` for a vector `z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| dot(&self.l[i * n..i * n + i + 1], &z[..=i]))
            .collect()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(FscreError::shape(n, b.len()));
        }
        let mut x = b.to_vec();
        for i in 0..n {
            let s = x[i] - dot(&self.l[i * n..i * n + i], &x[..i]);
            x[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        Ok(x)
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(FscreError::shape(a.rows(), b.len()));
    }
    Cholesky::factor(a)?.solve(b)
}

/// Coefficients and intercept of a linear least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, row)
    }
}

/// Ordinary least squares of `y` on the columns of `x`, optionally with an
/// intercept.
pub fn ols_fit(x: &Matrix, y: &[f64], intercept: bool) -> Result<LinearFit> {
    if x.rows() != y.len() {
        return Err(FscreError::shape(x.rows(), y.len()));
    }
    let cols = x.columns();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    weighted_least_squares(&refs, y, None, intercept)
}

/// Weighted least squares on column-major predictors. Zero columns are
/// allowed: the fit is then the (weighted) mean, or nothing without an
/// intercept.
///
/// Columns are centered (when fitting an intercept) and scaled to unit
/// weighted norm before the normal equations are formed, so the pivot
/// tolerance is relative to a unit-diagonal Gram matrix.
pub fn weighted_least_squares(
    cols: &[&[f64]],
    y: &[f64],
    weights: Option<&[f64]>,
    intercept: bool,
) -> Result<LinearFit> {
    let n = y.len();
    if cols.iter().any(|c| c.len() != n) || weights.is_some_and(|w| w.len() != n) {
        return Err(FscreError::shape(n, "mismatched column length"));
    }
    let q = cols.len() + usize::from(intercept);
    let wsum: f64 = weights.map_or(n as f64, |w| w.iter().sum());
    let active_rows = weights.map_or(n, |w| w.iter().filter(|&&v| v > 0.0).count());
    if q > active_rows || !(wsum > 0.0) {
        return Err(FscreError::RankDeficient);
    }
    let w_at = |i: usize| weights.map_or(1.0, |w| w[i]);

    let wmean = |v: &[f64]| -> f64 {
        v.iter().enumerate().map(|(i, x)| w_at(i) * x).sum::<f64>() / wsum
    };
    let ybar = if intercept { wmean(y) } else { 0.0 };
    let p = cols.len();
    if p == 0 {
        return Ok(LinearFit {
            coefficients: Vec::new(),
            intercept: ybar,
        });
    }

    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut means = Vec::with_capacity(p);
    let mut norms = Vec::with_capacity(p);
    for c in cols {
        let m = if intercept { wmean(c) } else { 0.0 };
        let v: Vec<f64> = c.iter().map(|x| x - m).collect();
        let nrm = v
            .iter()
            .enumerate()
            .map(|(i, x)| w_at(i) * x * x)
            .sum::<f64>()
            .sqrt();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(FscreError::RankDeficient);
        }
        means.push(m);
        norms.push(nrm);
        centered.push(v.into_iter().map(|x| x / nrm).collect());
    }

    let mut gram = Matrix::zeros(p, p);
    let mut rhs = vec![0.0; p];
    for a in 0..p {
        for b in a..p {
            let g: f64 = (0..n).map(|i| w_at(i) * centered[a][i] * centered[b][i]).sum();
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
        rhs[a] = (0..n)
            .map(|i| w_at(i) * centered[a][i] * (y[i] - ybar))
            .sum();
    }
    let scaled = match Cholesky::factor(&gram) {
        Ok(ch) => ch.solve(&rhs)?,
        Err(FscreError::NotPositiveDefinite { .. }) => return Err(FscreError::RankDeficient),
        Err(e) => return Err(e),
    };
    let coefficients: Vec<f64> = scaled.iter().zip(&norms).map(|(b, s)| b / s).collect();
    let intercept_value = if intercept {
        ybar - dot(&coefficients, &means)
    } else {
        0.0
    };
    Ok(LinearFit {
        coefficients,
        intercept: intercept_value,
    })
}

/// Eigen-decomposition of a symmetric matrix. Eigenvalues ascend; column `k`
/// of the returned matrix is the unit eigenvector for eigenvalue `k`, with its
/// largest-magnitude component made positive.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if a.rows() != a.cols() {
        return Err(FscreError::shape("square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    let n = a.rows();
    let m = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &k) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let pivot = (0..n)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()))
            .unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    Ok((values, vectors))
}

/// Unit eigenvector of the smallest eigenvalue.
pub fn min_eigenvector(a: &Matrix) -> Result<(f64, Vec<f64>)> {
    let (vals, vecs) = symmetric_eigen(a)?;
    Ok((vals[0], vecs.column(0)))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    median_in_place(&mut v)
}

/// Median of `v`, reordering it. Returns NaN for an empty slice.
pub fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    let mid = n / 2;
    let (lo, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}
