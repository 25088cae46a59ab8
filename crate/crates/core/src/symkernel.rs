//! Dense symmetric and positive-definite matrix kernel.
//!
//! Every covariance, information and weight matrix in the crate is a
//! [`SymMatrix`]: only the upper triangle is stored, so a symmetric value can
//! never drift out of symmetry. [`SpdMatrix`] additionally carries a cached
//! Cholesky factor that certifies positive definiteness.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest Cholesky pivot accepted by [`SpdMatrix::new`].
pub const DEFAULT_PIVOT_FLOOR: f64 = 1e-12;

/// Symmetric matrix stored as a packed upper triangle (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    r * dim - r * r.saturating_sub(1) / 2 + (c - r)
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix { dim, data: vec![0.0; dim * (dim + 1) / 2] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from a packed upper triangle (row-major).
    pub fn from_packed(dim: usize, data: Vec<f64>) -> Result<Self> {
        let expected = dim * (dim + 1) / 2;
        if data.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: data.len() });
        }
        Ok(SymMatrix { dim, data })
    }

    /// Symmetric part `(m + mᵀ)/2` of a square dense matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        let n = m.nrows();
        let mut s = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                s.set(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        s
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                s.set(i, j, f(i, j));
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[packed_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.dim, i, j);
        self.data[k] = v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix { dim: self.dim, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        SymMatrix { dim: self.dim, data }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        SymMatrix { dim: self.dim, data }
    }

    /// Frobenius inner product `Tr(self · other)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                let p = self.get(i, j) * other.get(i, j);
                acc += if i == j { p } else { 2.0 * p };
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// `A · self · Aᵀ` for a rectangular `A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::from_dense(&(a * self.to_dense() * a.transpose()))
    }
}

/// Lower-triangular Cholesky factor of `m`.
///
/// Fails with [`Error::NotPositiveDefinite`] carrying the first pivot whose
/// value (before the square root) is `<= pivot_floor`.
pub fn cholesky(m: &SymMatrix, pivot_floor: f64) -> Result<DMatrix<f64>> {
    cholesky_dense(&m.to_dense(), pivot_floor)
}

pub(crate) fn cholesky_dense(m: &DMatrix<f64>, pivot_floor: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > pivot_floor) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Symmetric positive-definite matrix with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    base: SymMatrix,
    chol: DMatrix<f64>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
    }
}

impl SpdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        Self::with_floor(base, DEFAULT_PIVOT_FLOOR)
    }

    pub fn with_floor(base: SymMatrix, pivot_floor: f64) -> Result<Self> {
        let chol = cholesky(&base, pivot_floor)?;
        Ok(SpdMatrix { base, chol })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(SymMatrix::identity(dim)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag))
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn into_sym(self) -> SymMatrix {
        self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Lower-triangular factor `L` with `L·Lᵀ = self`.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.base.to_dense()
    }

    pub fn logdet(&self) -> f64 {
        logdet(self)
    }

    pub fn inverse(&self) -> SpdMatrix {
        inverse(self)
    }

    /// Dense inverse, without re-factorizing.
    pub fn inverse_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let linv = self
            .chol
            .clone()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal");
        linv.transpose() * linv
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.chol.solve_lower_triangular(b).expect("positive diagonal");
        self.chol.tr_solve_lower_triangular(&y).expect("positive diagonal")
    }
}

/// Natural-log determinant `2·Σ ln L_ii`.
pub fn logdet(m: &SpdMatrix) -> f64 {
    2.0 * m.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn inverse(m: &SpdMatrix) -> SpdMatrix {
    let inv = SymMatrix::from_dense(&m.inverse_dense());
    // The inverse of an SPD matrix is SPD; only a pathological condition
    // number could defeat the default floor, so fall back to an unfloored check.
    SpdMatrix::new(inv.clone())
        .or_else(|_| SpdMatrix::with_floor(inv, 0.0))
        .expect("inverse of an SPD matrix is SPD")
}

/// Half-vectorization with `√2` scaling of the off-diagonal entries, so that
/// `⟨svec(a), svec(b)⟩ = Tr(a·b)`. Ordering follows the packed upper triangle.
pub fn svec(m: &SymMatrix) -> DVector<f64> {
    let n = m.dim();
    let mut v = DVector::zeros(n * (n + 1) / 2);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            v[k] = if i == j { m.get(i, j) } else { std::f64::consts::SQRT_2 * m.get(i, j) };
            k += 1;
        }
    }
    v
}

/// Inverse of [`svec`] for a matrix of the given dimension.
pub fn smat(v: &DVector<f64>, dim: usize) -> Result<SymMatrix> {
    let expected = dim * (dim + 1) / 2;
    if v.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: v.len() });
    }
    let mut m = SymMatrix::zeros(dim);
    let mut k = 0;
    for i in 0..dim {
        for j in i..dim {
            m.set(i, j, if i == j { v[k] } else { v[k] / std::f64::consts::SQRT_2 });
            k += 1;
        }
    }
    Ok(m)
}

/// Dimension of `n` as recovered from an svec length, if it is triangular.
pub fn svec_dim(len: usize) -> Option<usize> {
    let n = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (n * (n + 1) / 2 == len).then_some(n)
}

pub fn min_eigenvalue(m: &SymMatrix) -> f64 {
    min_eigenvalue_dense(&m.to_dense())
}

pub(crate) fn min_eigenvalue_dense(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Unit basis matrix for svec coordinate `k`, dense.
pub(crate) fn svec_basis(dim: usize, k: usize) -> DMatrix<f64> {
    let mut idx = 0;
    let mut out = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            if idx == k {
                if i == j {
                    out[(i, i)] = 1.0;
                } else {
                    // same rounding as `smat`
                    let v = 1.0 / std::f64::consts::SQRT_2;
                    out[(i, j)] = v;
                    out[(j, i)] = v;
                }
                return out;
            }
            idx += 1;
        }
    }
    panic!("svec coordinate {k} out of range for dimension {dim}");
}

/// Principal square root of a symmetric PSD matrix (negative eigenvalues clipped).
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `Tr(a·b)` for dense square matrices.
#[inline]
pub(crate) fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
