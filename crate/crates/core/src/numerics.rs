//! Dense real linear algebra for the manifold construction.
//!
//! Everything here works on small, dense, row-major `f64` matrices. The
//! only heavy routine is [`csvd_tall`], which factors `L Lᵀ` for a tall
//! `p × K` factor `L` without ever forming the `p × p` product.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Eigenvalues at or below this fraction of the largest one are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Allowed absolute asymmetry (scaled by the largest entry) for [`sym_eig`].
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("rank tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self, NumericsError> {
        if columns.iter().any(|c| c.len() != rows) {
            return Err(NumericsError::Dimension(format!(
                "every column must have length {rows}"
            )));
        }
        let m = Self::from_fn(rows, columns.len(), |r, c| columns[c][r]);
        Self::new(m.rows, m.cols, m.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
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

    /// `A v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if v.len() != self.cols {
            return Err(NumericsError::Dimension(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `Aᵀ v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if v.len() != self.rows {
            return Err(NumericsError::Dimension(format!(
                "vector of length {} against {} rows",
                v.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        Ok(out)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self::from_fn(self.rows, columns.len(), |r, c| self[(r, columns[c])])
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self, NumericsError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumericsError::Dimension("shape mismatch in subtraction".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `|a - b| / max(|a|, |b|, 1e-12)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

/// Flips each column so its largest-magnitude entry is positive.
fn canonicalize_signs(m: &mut DenseMatrix) {
    for c in 0..m.cols() {
        let mut pivot = 0.0_f64;
        for r in 0..m.rows() {
            let v = m[(r, c)];
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
        if pivot < 0.0 {
            for r in 0..m.rows() {
                m[(r, c)] = -m[(r, c)];
            }
        }
    }
}

pub fn sym_eig(a: &DenseMatrix) -> Result<EigenResult, NumericsError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(NumericsError::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if let Some(pos) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite {
            row: pos / n,
            col: pos % n,
        });
    }
    let scale = a.max_abs().max(1.0);
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(NumericsError::NotSymmetric(asym));
    }

    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DenseMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    canonicalize_signs(&mut eigenvectors);
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Compact factorization `L Lᵀ = U diag(λ) Uᵀ` restricted to strictly positive `λ`.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    /// `p × r` with orthonormal columns.
    pub basis: DenseMatrix,
    /// Length `r`, strictly positive, descending.
    pub eigenvalues: Vec<f64>,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }
}

/// Compact eigendecomposition of `L Lᵀ` through the `K × K` Gram matrix `Lᵀ L`.
///
/// Gram eigenvectors `v` map to `L v / √μ`, which are re-orthonormalized
/// with modified Gram-Schmidt to remove rounding drift.
pub fn csvd_tall(l: &DenseMatrix, tol: f64) -> Result<CompactSvd, NumericsError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(NumericsError::InvalidTolerance(tol));
    }
    let (p, k) = (l.rows(), l.cols());
    if p == 0 || k == 0 {
        return Err(NumericsError::Dimension(format!(
            "factor must be non-empty, got {p}x{k}"
        )));
    }

    let mut gram = DenseMatrix::zeros(k, k);
    for r in 0..p {
        let row = l.row(r);
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..k {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }

    let eig = sym_eig(&gram)?;
    let largest = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return Ok(CompactSvd {
            basis: DenseMatrix::zeros(p, 0),
            eigenvalues: Vec::new(),
        });
    }
    let retained = eig
        .eigenvalues
        .iter()
        .take_while(|&&mu| mu > tol * largest)
        .count()
        .min(p);

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(retained);
    for c in 0..retained {
        let v = eig.eigenvectors.column(c);
        let scale = eig.eigenvalues[c].sqrt();
        let mut u: Vec<f64> = l.matvec(&v)?.into_iter().map(|x| x / scale).collect();
        for prev in &columns {
            let proj = dot(prev, &u);
            for (ui, pi) in u.iter_mut().zip(prev) {
                *ui -= proj * pi;
            }
        }
        let len = norm(&u);
        for ui in &mut u {
            *ui /= len;
        }
        columns.push(u);
    }

    let mut basis = DenseMatrix::from_columns(p, &columns)?;
    canonicalize_signs(&mut basis);
    Ok(CompactSvd {
        basis,
        eigenvalues: eig.eigenvalues[..retained].to_vec(),
    })
}

/// Applies `U diag(1/λ) Uᵀ` to `v`.
pub fn pinv_apply(svd: &CompactSvd, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let coords = svd.basis.tr_matvec(v)?;
    let scaled: Vec<f64> = coords
        .iter()
        .zip(&svd.eigenvalues)
        .map(|(c, lambda)| c / lambda)
        .collect();
    if scaled.is_empty() {
        return Ok(vec![0.0; svd.dim()]);
    }
    svd.basis.matvec(&scaled)
}
