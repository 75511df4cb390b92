//! Dense real matrices and the symmetric factorizations the rest of the crate
//! is built on.
//!
//! Dimensions in this problem are small (FIR orders of a few dozen, data
//! lengths of a few hundred), so everything here is plain row-major storage
//! with textbook algorithms: Cholesky for positive definite solves, cyclic
//! Jacobi for symmetric eigenproblems and pivoted Gram-Schmidt for numerical
//! rank.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// General dense matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`, symmetric by construction.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::from_fn(self.cols, |i, j| {
            (0..self.rows).map(|t| self[(t, i)] * self[(t, j)]).sum()
        })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Symmetric matrix. Entries are mirrored on construction, so
/// `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    inner: Matrix,
}

impl SymMatrix {
    pub fn identity(n: usize) -> Self {
        SymMatrix {
            inner: Matrix::identity(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            inner: Matrix::zeros(n, n),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Evaluates `f` on the lower triangle (`j <= i`) and mirrors it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut inner = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        SymMatrix { inner }
    }

    /// Accepts a square matrix whose asymmetry is at rounding level and
    /// stores the symmetric part.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                got: m.cols(),
            });
        }
        let n = m.rows();
        let scale = m.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(&Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.inner.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.inner.row(i)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner.matvec(x)
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        (0..n).map(|i| x[i] * dot(self.row(i), x)).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self[(i, i)]).sum()
    }

    pub fn scaled(&self, k: f64) -> SymMatrix {
        SymMatrix::from_fn(self.dim(), |i, j| k * self[(i, j)])
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(SymMatrix::from_fn(self.dim(), |i, j| {
            self[(i, j)] + other[(i, j)]
        }))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.add(&other.scaled(-1.0))
    }

    pub fn add_diagonal(&self, shift: f64) -> SymMatrix {
        SymMatrix::from_fn(self.dim(), |i, j| {
            self[(i, j)] + if i == j { shift } else { 0.0 }
        })
    }

    /// Product of two symmetric matrices; the result is general.
    pub fn matmul(&self, other: &SymMatrix) -> Result<Matrix> {
        self.inner.matmul(&other.inner)
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.inner[idx]
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.inner)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = m`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        Ok(x)
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            self.forward(&mut e);
            self.backward(&mut e);
            cols.push(e);
        }
        SymMatrix::from_fn(n, |i, j| 0.5 * (cols[j][i] + cols[i][j]))
    }

    pub fn logdet(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.l[(i, i)].ln()).sum()
    }

    /// `Tr(m⁻¹) = ‖L⁻¹‖²_F`, one forward solve per unit vector.
    pub fn trace_of_inverse(&self) -> f64 {
        let n = self.dim();
        let mut total = 0.0;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            self.forward(&mut e);
            total += dot(&e, &e);
        }
        total
    }
}

pub fn cholesky(m: &SymMatrix) -> Result<Cholesky> {
    let n = m.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { l })
}

/// Cholesky with an escalating diagonal jitter `ε·I`, starting from
/// `ε = 1e-12·trace/dim`. Returns the factor and the jitter actually used.
pub fn cholesky_jittered(m: &SymMatrix) -> Result<(Cholesky, f64)> {
    match cholesky(m) {
        Ok(c) => Ok((c, 0.0)),
        Err(first) => {
            let base = (m.trace() / m.dim() as f64).abs().max(f64::MIN_POSITIVE);
            let mut eps = 1e-12 * base;
            for _ in 0..7 {
                if let Ok(c) = cholesky(&m.add_diagonal(eps)) {
                    return Ok((c, eps));
                }
                eps *= 10.0;
            }
            Err(first)
        }
    }
}

pub fn logdet(m: &SymMatrix) -> Result<f64> {
    Ok(cholesky(m)?.logdet())
}

pub fn trace_of_inverse(m: &SymMatrix) -> Result<f64> {
    Ok(cholesky(m)?.trace_of_inverse())
}

pub fn solve(m: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    cholesky(m)?.solve(b)
}

pub fn inverse(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(cholesky(m)?.inverse())
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in ascending order; column `k` of the returned
/// matrix is the unit eigenvector for eigenvalue `k`.
pub fn sym_eigen(m: &SymMatrix) -> Result<(Vec<f64>, Matrix)> {
    const MAX_SWEEPS: usize = 100;
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            iterations: MAX_SWEEPS,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok((values, vectors))
}

/// Smallest eigenvalue and a unit eigenvector.
///
/// Jacobi supplies the starting pair; two steps of shifted inverse
/// iteration followed by a Rayleigh quotient polish it.
pub fn min_eigpair(m: &SymMatrix) -> Result<(f64, Vec<f64>)> {
    let (values, vectors) = sym_eigen(m)?;
    let mut lambda = values[0];
    let mut v = vectors.column(0);

    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let shift = lambda - 1e-10 * scale;
    if let Ok(chol) = cholesky(&m.add_diagonal(-shift)) {
        for _ in 0..2 {
            let w = chol.solve(&v)?;
            let nw = norm2(&w);
            if !(nw.is_finite() && nw > 0.0) {
                break;
            }
            v = w.iter().map(|x| x / nw).collect();
        }
        lambda = m.quad_form(&v);
    }
    // Deterministic orientation: largest-magnitude component positive.
    let pivot = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i);
    if v.get(pivot).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((lambda, v))
}

/// Numerical rank by Gram-Schmidt with column pivoting. A column counts
/// when its residual norm exceeds `rel_tol` times the largest column norm.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> usize {
    let mut cols: Vec<Vec<f64>> = (0..m.cols()).map(|j| m.column(j)).collect();
    let reference = cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    if reference == 0.0 {
        return 0;
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    loop {
        let (best, best_norm) = cols
            .iter()
            .enumerate()
            .map(|(i, c)| (i, norm2(c)))
            .fold((usize::MAX, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || best_norm <= rel_tol * reference {
            return basis.len();
        }
        let q: Vec<f64> = cols[best].iter().map(|x| x / best_norm).collect();
        cols.swap_remove(best);
        // Two passes keep the residuals orthogonal to working precision.
        for _ in 0..2 {
            for c in cols.iter_mut() {
                let p = dot(&q, c);
                c.iter_mut().zip(&q).for_each(|(x, qi)| *x -= p * qi);
            }
        }
        basis.push(q);
        if basis.len() == m.rows() {
            return basis.len();
        }
    }
}
