//! Dense linear algebra: row-major matrices, Cholesky, least-norm solves,
//! a cyclic Jacobi symmetric eigensolver, the generalized symmetric-definite
//! eigenproblem and the oversampled DCT sensing matrix.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use thiserror::Error;

use crate::vector::{all_finite, dot};

/// Smallest pivot accepted by [`Cholesky::factor`].
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-14;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix does not have full row rank")]
    RankDeficient,
    #[error("Jacobi sweeps did not converge (off-diagonal norm {0:e})")]
    NoConvergence(f64),
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds a matrix from row-major entries; rejects wrong lengths and non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(
                "entries length != rows * cols",
            ));
        }
        if !all_finite(&data) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows"));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_t dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `AᵀA`, computed so that the result is exactly symmetric.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..self.rows).map(|k| self[(k, i)] * self[(k, j)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// `A Aᵀ`, exactly symmetric.
    pub fn outer_gram(&self) -> Self {
        let m = self.rows;
        let mut out = Self::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let s = dot(self.row(i), self.row(j));
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn add_diag(&mut self, value: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += value;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(dot(&self.data, &self.data))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest `|a_ij − a_ji|`; infinite for non-square input.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    fn check_symmetric(&self) -> Result<(), LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::DimensionMismatch("matrix must be square"));
        }
        let asym = self.asymmetry();
        if asym > SYMMETRY_TOL * self.max_abs().max(1.0) {
            return Err(LinalgError::NotSymmetric(asym));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ` (no pivoting).
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch(
                "cholesky needs a square matrix",
            ));
        }
        let n = a.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.data[j * n..j * n + j];
            let d = a[(j, j)] - dot(lj, lj);
            if !(d > CHOLESKY_PIVOT_TOL) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = libm::sqrt(d);
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let s = a[(i, j)] - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = &self.l.data[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l.data[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let xi = b[i] / self.l.data[i * n + i];
            b[i] = xi;
            let row = &self.l.data[i * n..i * n + i];
            for (bk, lik) in b[..i].iter_mut().zip(row) {
                *bk -= lik * xi;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Minimum-norm solution `x = Aᵀ(AAᵀ)⁻¹b` of an underdetermined full-row-rank system,
/// with one step of iterative refinement.
pub fn least_norm_solution(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch("rhs length != rows"));
    }
    if a.rows() > a.cols() {
        return Err(LinalgError::RankDeficient);
    }
    let chol = Cholesky::factor(&a.outer_gram()).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { .. } => LinalgError::RankDeficient,
        other => other,
    })?;
    let mut x = a.matvec_t(&chol.solve(b));
    let resid: Vec<f64> = b.iter().zip(a.matvec(&x)).map(|(bi, ai)| bi - ai).collect();
    let corr = a.matvec_t(&chol.solve(&resid));
    for (xi, ci) in x.iter_mut().zip(corr) {
        *xi += ci;
    }
    Ok(x)
}

/// Spectral decomposition `A = Q diag(λ) Qᵀ`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigenResult {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DenseMatrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps until the off-diagonal Frobenius norm falls below `1e-12 ‖A‖_F`.
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigenResult, LinalgError> {
    a.check_symmetric()?;
    if !all_finite(a.as_slice()) {
        return Err(LinalgError::NonFinite);
    }
    let n = a.rows();
    let mut m = a.clone();
    // symmetrize away sub-tolerance noise so rotations act on a symmetric matrix
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let target = JACOBI_REL_TOL * a.frobenius();

    let off_norm = |m: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        libm::sqrt(s)
    };

    let mut converged = off_norm(&m) <= target;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    let nkp = c * akp - s * akq;
                    let nkq = s * akp + c * akq;
                    m[(k, p)] = nkp;
                    m[(p, k)] = nkp;
                    m[(k, q)] = nkq;
                    m[(q, k)] = nkq;
                }
                m[(p, p)] -= t * apq;
                m[(q, q)] += t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        converged = off_norm(&m) <= target;
    }
    if !converged {
        return Err(LinalgError::NoConvergence(off_norm(&m)));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Full solution of `A v = λ B v` for symmetric `A` and symmetric positive definite `B`.
#[derive(Debug, Clone)]
pub struct GenEigenResult {
    /// Ascending generalized eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `B`-orthonormal eigenvectors stored as columns (`VᵀBV = I`).
    pub eigenvectors: DenseMatrix,
}

/// Reduces `A v = λ B v` to a standard problem through `B = L Lᵀ` and solves it with
/// [`sym_eigen`].
pub fn gen_eigen(a: &DenseMatrix, b: &DenseMatrix) -> Result<GenEigenResult, LinalgError> {
    a.check_symmetric()?;
    b.check_symmetric()?;
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch(
            "A and B must have equal size",
        ));
    }
    let n = a.rows();
    let chol = Cholesky::factor(b)?;
    // Y = L⁻¹ A, column by column
    let mut y = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = a.column(j);
        chol.solve_lower_in_place(&mut col);
        for i in 0..n {
            y[(i, j)] = col[i];
        }
    }
    // C = L⁻¹ Yᵀ = L⁻¹ A L⁻ᵀ
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = y.row(j).to_vec();
        chol.solve_lower_in_place(&mut col);
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    let eig = sym_eigen(&c)?;
    let mut vectors = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = eig.eigenvectors.column(j);
        chol.solve_upper_in_place(&mut col);
        for i in 0..n {
            vectors[(i, j)] = col[i];
        }
    }
    Ok(GenEigenResult {
        eigenvalues: eig.eigenvalues,
        eigenvectors: vectors,
    })
}

/// Smallest generalized eigenvalue of `(A, B)` with its `B`-normalized eigenvector.
pub fn gen_eigen_min(a: &DenseMatrix, b: &DenseMatrix) -> Result<(f64, Vec<f64>), LinalgError> {
    let res = gen_eigen(a, b)?;
    Ok((res.eigenvalues[0], res.eigenvectors.column(0)))
}

/// Oversampled DCT matrix: column `j` (1-based) is `cos(2π w j / F) / √P`.
pub fn oversampled_dct(p: usize, n: usize, f: f64, w: &[f64]) -> Result<DenseMatrix, LinalgError> {
    if w.len() != p {
        return Err(LinalgError::DimensionMismatch(
            "frequency vector length != P",
        ));
    }
    if !(f > 0.0) || !all_finite(w) {
        return Err(LinalgError::NonFinite);
    }
    let inv_sqrt_p = 1.0 / libm::sqrt(p as f64);
    let two_pi = 2.0 * core::f64::consts::PI;
    Ok(DenseMatrix::from_fn(p, n, |i, j| {
        inv_sqrt_p * libm::cos(two_pi * w[i] * (j + 1) as f64 / f)
    }))
}
