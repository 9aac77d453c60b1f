//! Dense complex matrices and the small amount of numerical linear algebra
//! the rest of the crate is built on.
//!
//! Storage is row-major. Spectral routines hand the work to `nalgebra` and
//! convert back, so everything downstream only ever sees [`ComplexMatrix`].

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative Hermiticity tolerance accepted by [`eig_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("site {site} out of range for a chain of {len} sites")]
    SiteOutOfRange { site: usize, len: usize },
    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is singular")]
    Singular,
    #[error("invalid chain layout: {0}")]
    InvalidLayout(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

fn mismatch(expected: impl fmt::Display, found: impl fmt::Display) -> LinalgError {
    LinalgError::DimensionMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(mismatch(rows * cols, data.len()));
        }
        if let Some(k) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(LinalgError::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(mismatch(c, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    /// Real-entry convenience constructor for literals in tests and tables.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "from_real: wrong entry count");
        Self {
            rows,
            cols,
            data: data.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Rank-one operator |a⟩⟨b|.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<Complex64>]) -> Result<Self, LinalgError> {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        if let Some(bad) = cols.iter().find(|v| v.len() != r) {
            return Err(mismatch(r, bad.len()));
        }
        Ok(Self::from_fn(r, c, |i, j| cols[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self − other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Spectral norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        singular_values(self).into_iter().fold(0.0, f64::max)
    }

    /// ‖self − self†‖_F / max(‖self‖_F, 1).
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let diff = self - &self.adjoint();
        diff.frobenius_norm() / self.frobenius_norm().max(1.0)
    }

    /// ‖U†U − 𝟙‖ measured entrywise.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.adjoint() * self).max_abs_diff(&Self::identity(self.rows))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(
            v.len(),
            self.cols,
            "apply: vector length {} vs {} columns",
            v.len(),
            self.cols
        );
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Top-left `k×k` block.
    pub fn top_left(&self, k: usize) -> Self {
        Self::from_fn(k, k, |i, j| self[(i, j)])
    }

    /// Places `block` in the top-left corner of an `n×n` zero matrix.
    pub fn embed_top_left(block: &Self, n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..block.rows {
            for j in 0..block.cols {
                m[(i, j)] = block[(i, j)];
            }
        }
        m
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Serialized as row-major nested arrays of `[re, im]` pairs.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[Complex64]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<Complex64>>::deserialize(deserializer)?;
        ComplexMatrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self * &rhs
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "add: shape mismatch"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "sub: shape mismatch"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self + &rhs
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: ComplexMatrix) -> ComplexMatrix {
        &self - &rhs
    }
}

/// Pauli matrices and ladder operators in the basis (|↑⟩, |↓⟩).
pub mod pauli {
    use super::{ComplexMatrix, I, ONE, ZERO};

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]).expect("2x2")
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])
    }

    /// σ⁺ = |↑⟩⟨↓|.
    pub fn plus() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ZERO, ZERO]).expect("2x2")
    }

    /// σ⁻ = |↓⟩⟨↑|.
    pub fn minus() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, ZERO, ONE, ZERO]).expect("2x2")
    }

    /// r·σ for a real 3-vector r.
    pub fn dot(r: [f64; 3]) -> ComplexMatrix {
        &(&x().scale_real(r[0]) + &y().scale_real(r[1])) + &z().scale_real(r[2])
    }

    /// σ⃗⊗σ⃗ = σˣ⊗σˣ + σʸ⊗σʸ + σᶻ⊗σᶻ on two sites.
    pub fn heisenberg() -> ComplexMatrix {
        let xx = super::kron(&x(), &x());
        let yy = super::kron(&y(), &y());
        let zz = super::kron(&z(), &z());
        &(&xx + &yy) + &zz
    }
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len(), "inner: length mismatch");
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn scale_vec(v: &[Complex64], s: Complex64) -> Vec<Complex64> {
    v.iter().map(|z| z * s).collect()
}

pub fn add_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Standard basis vector e_k of length n.
pub fn basis_vector(n: usize, k: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; n];
    v[k] = ONE;
    v
}

/// Kronecker vector product, first factor most significant.
pub fn kron_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x * y))
        .collect()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (rb, cb) = (b.rows, b.cols);
    ComplexMatrix::from_fn(a.rows * rb, a.cols * cb, |r, c| {
        a[(r / rb, c / cb)] * b[(r % rb, c % cb)]
    })
}

pub fn kron_all(factors: &[ComplexMatrix]) -> ComplexMatrix {
    factors
        .iter()
        .fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    Left,
    Right,
}

/// Partial trace of an operator on ℂ^{d_left} ⊗ ℂ^{d_right}.
///
/// `Keep::Left` traces out the right factor: the result `S` satisfies
/// tr(S·A) = tr(t·(A⊗𝟙)) for every `A`.
pub fn partial_trace(
    t: &ComplexMatrix,
    d_left: usize,
    d_right: usize,
    keep: Keep,
) -> Result<ComplexMatrix, LinalgError> {
    let d = d_left * d_right;
    if t.rows != d || t.cols != d {
        return Err(mismatch(
            format!("{d}x{d}"),
            format!("{}x{}", t.rows, t.cols),
        ));
    }
    Ok(match keep {
        Keep::Left => ComplexMatrix::from_fn(d_left, d_left, |i, j| {
            (0..d_right)
                .map(|k| t[(i * d_right + k, j * d_right + k)])
                .sum()
        }),
        Keep::Right => ComplexMatrix::from_fn(d_right, d_right, |k, l| {
            (0..d_left)
                .map(|i| t[(i * d_right + k, i * d_right + l)])
                .sum()
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLayout {
    site_dims: Vec<usize>,
}

impl ChainLayout {
    pub fn new(site_dims: Vec<usize>) -> Result<Self, LinalgError> {
        if site_dims.is_empty() {
            return Err(LinalgError::InvalidLayout("no sites".into()));
        }
        if let Some(&d) = site_dims.iter().find(|&&d| d < 2) {
            return Err(LinalgError::InvalidLayout(format!(
                "local dimension {d} < 2"
            )));
        }
        Ok(Self { site_dims })
    }

    /// `n` spin-½ sites.
    pub fn qubits(n: usize) -> Self {
        Self::new(vec![2; n.max(1)]).expect("qubit layout")
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn len(&self) -> usize {
        self.site_dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.site_dims.iter().product()
    }

    /// Dimensions (left, local, right) around the block of `width` sites
    /// starting at `first`.
    fn split(&self, first: usize, width: usize) -> Result<(usize, usize, usize), LinalgError> {
        if width == 0 || first + width > self.len() {
            return Err(LinalgError::SiteOutOfRange {
                site: first + width.max(1) - 1,
                len: self.len(),
            });
        }
        let left = self.site_dims[..first].iter().product();
        let local = self.site_dims[first..first + width].iter().product();
        let right = self.site_dims[first + width..].iter().product();
        Ok((left, local, right))
    }
}

/// 𝟙 ⊗ … ⊗ op ⊗ … ⊗ 𝟙 with `op` at position `site`.
pub fn embed_site_operator(
    op: &ComplexMatrix,
    site: usize,
    layout: &ChainLayout,
) -> Result<ComplexMatrix, LinalgError> {
    embed_block_operator(op, site, 1, layout)
}

/// Embeds an operator acting on `width` consecutive sites starting at `first`.
pub fn embed_block_operator(
    op: &ComplexMatrix,
    first: usize,
    width: usize,
    layout: &ChainLayout,
) -> Result<ComplexMatrix, LinalgError> {
    let (left, local, right) = layout.split(first, width)?;
    if op.rows != local || op.cols != local {
        return Err(mismatch(
            format!("{local}x{local}"),
            format!("{}x{}", op.rows, op.cols),
        ));
    }
    let a = kron(&ComplexMatrix::identity(left), op);
    Ok(kron(&a, &ComplexMatrix::identity(right)))
}

/// Left-multiplies `target` in place by `op` acting on the sites
/// `first..first + width`, without forming the embedded matrix.
pub fn apply_block_operator(
    op: &ComplexMatrix,
    first: usize,
    width: usize,
    layout: &ChainLayout,
    target: &mut ComplexMatrix,
) -> Result<(), LinalgError> {
    let (left, local, right) = layout.split(first, width)?;
    if op.rows != local || op.cols != local {
        return Err(mismatch(
            format!("{local}x{local}"),
            format!("{}x{}", op.rows, op.cols),
        ));
    }
    if target.rows != layout.total_dim() {
        return Err(mismatch(layout.total_dim(), target.rows));
    }
    let cols = target.cols;
    let mut buf = vec![ZERO; local];
    for l in 0..left {
        for r in 0..right {
            let base = l * local * right + r;
            for c in 0..cols {
                for (a, slot) in buf.iter_mut().enumerate() {
                    *slot = target.data[(base + a * right) * cols + c];
                }
                for a in 0..local {
                    let row = op.row(a);
                    let acc: Complex64 = row.iter().zip(&buf).map(|(x, y)| x * y).sum();
                    target.data[(base + a * right) * cols + c] = acc;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        self.vectors.column(k)
    }
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// The input is symmetrized as (h + h†)/2 first. Eigenvectors inside a
/// degenerate eigenspace are an arbitrary orthonormal basis of it.
pub fn eig_hermitian(h: &ComplexMatrix) -> Result<HermitianEigen, LinalgError> {
    if !h.is_square() {
        return Err(LinalgError::NotSquare {
            rows: h.rows,
            cols: h.cols,
        });
    }
    let deviation = h.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(LinalgError::NotHermitian { deviation });
    }
    let n = h.rows;
    if n == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let sym = (h + &h.adjoint()).scale_real(0.5);
    let eig = sym.to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.rows == 0 || m.cols == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Sum of singular values.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    singular_values(m).iter().sum()
}

pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    m.to_nalgebra()
        .try_inverse()
        .map(|inv| ComplexMatrix::from_nalgebra(&inv))
        .ok_or(LinalgError::Singular)
}

/// Closest unitary in the polar sense, used to strip accumulated roundoff
/// from long products of unitaries.
pub fn reunitarize(u: &ComplexMatrix) -> ComplexMatrix {
    let svd = u.to_nalgebra().svd(true, true);
    let (Some(left), Some(right)) = (svd.u, svd.v_t) else {
        return u.clone();
    };
    ComplexMatrix::from_nalgebra(&(left * right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kron_identities() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
        let zi = kron(&pauli::z(), &i2);
        assert_eq!(zi, ComplexMatrix::from_real_diag(&[1.0, 1.0, -1.0, -1.0]));
    }

    #[test]
    fn kron_xx_flips_both_spins() {
        let xx = kron(&pauli::x(), &pauli::x());
        let up_up = basis_vector(4, 0);
        assert_eq!(xx.apply(&up_up), basis_vector(4, 3));
    }

    #[test]
    fn kron_matches_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sample::matrix(&mut rng, 2, 3);
        let b = sample::matrix(&mut rng, 3, 2);
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..3 {
                for p in 0..3 {
                    for q in 0..2 {
                        assert_eq!(k[(i * 3 + p, j * 2 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = sample::matrix(&mut rng, 2, 2);
        let b = sample::matrix(&mut rng, 3, 3);
        let ab = kron(&a, &b);
        let left = partial_trace(&ab, 2, 3, Keep::Left).unwrap();
        assert!(left.max_abs_diff(&a.scale(b.trace())) < 1e-13);
        let right = partial_trace(&ab, 2, 3, Keep::Right).unwrap();
        assert!(right.max_abs_diff(&b.scale(a.trace())) < 1e-13);
    }

    #[test]
    fn partial_trace_defining_property_on_pauli_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = sample::matrix(&mut rng, 4, 4);
        let s = partial_trace(&t, 2, 2, Keep::Left).unwrap();
        let basis = [
            ComplexMatrix::identity(2),
            pauli::x(),
            pauli::y(),
            pauli::z(),
        ];
        for a in &basis {
            let lhs = (&s * a).trace();
            let rhs = (&t * &kron(a, &ComplexMatrix::identity(2))).trace();
            assert!((lhs - rhs).norm() < 1e-12);
        }
        let r = partial_trace(&t, 2, 2, Keep::Right).unwrap();
        for a in &basis {
            let lhs = (&r * a).trace();
            let rhs = (&t * &kron(&ComplexMatrix::identity(2), a)).trace();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_rejects_bad_shape() {
        let t = ComplexMatrix::identity(5);
        assert!(matches!(
            partial_trace(&t, 2, 2, Keep::Left),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embed_examples() {
        let layout = ChainLayout::qubits(2);
        let e = embed_site_operator(&pauli::z(), 0, &layout).unwrap();
        assert_eq!(e, kron(&pauli::z(), &ComplexMatrix::identity(2)));
        let layout3 = ChainLayout::qubits(3);
        for site in 0..3 {
            let id = embed_site_operator(&ComplexMatrix::identity(2), site, &layout3).unwrap();
            assert_eq!(id, ComplexMatrix::identity(8));
        }
        let x0 = embed_site_operator(&pauli::x(), 0, &layout).unwrap();
        let y1 = embed_site_operator(&pauli::y(), 1, &layout).unwrap();
        assert!(x0.commutator(&y1).max_abs() < 1e-14);
    }

    #[test]
    fn embed_errors() {
        let layout = ChainLayout::qubits(2);
        assert!(matches!(
            embed_site_operator(&pauli::z(), 2, &layout),
            Err(LinalgError::SiteOutOfRange { .. })
        ));
        assert!(matches!(
            embed_site_operator(&ComplexMatrix::identity(3), 0, &layout),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert!(ChainLayout::new(vec![2, 1]).is_err());
    }

    #[test]
    fn apply_block_matches_dense_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let layout = ChainLayout::new(vec![2, 3, 2, 2]).unwrap();
        let op = sample::matrix(&mut rng, 6, 6);
        let target = sample::matrix(&mut rng, layout.total_dim(), 3);
        let dense = &embed_block_operator(&op, 0, 2, &layout).unwrap() * &target;
        let mut fast = target.clone();
        apply_block_operator(&op, 0, 2, &layout, &mut fast).unwrap();
        assert!(dense.max_abs_diff(&fast) < 1e-12);

        let op2 = sample::matrix(&mut rng, 4, 4);
        let dense = &embed_block_operator(&op2, 2, 2, &layout).unwrap() * &target;
        let mut fast = target.clone();
        apply_block_operator(&op2, 2, 2, &layout, &mut fast).unwrap();
        assert!(dense.max_abs_diff(&fast) < 1e-12);
    }

    #[test]
    fn eig_examples() {
        let e = eig_hermitian(&pauli::z()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let r = sample::unit_real3(&mut rng);
            let e = eig_hermitian(&pauli::dot(r)).unwrap();
            assert!((e.values[0] + 1.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
        }

        let e = eig_hermitian(&pauli::heisenberg()).unwrap();
        let expected = [-3.0, 1.0, 1.0, 1.0];
        for (v, x) in e.values.iter().zip(expected) {
            assert!((v - x).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        assert!(matches!(
            eig_hermitian(&pauli::plus()),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn trace_norm_examples() {
        assert_eq!(trace_norm(&ComplexMatrix::zeros(3, 3)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = sample::density_matrix(&mut rng, 4);
        assert!((trace_norm(&rho) - 1.0).abs() < 1e-12);
        let d = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        assert!((trace_norm(&d) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_round_trip() {
        let m = ComplexMatrix::from_vec(
            2,
            2,
            vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0), c(3.0, 0.5)],
        )
        .unwrap();
        let inv = inverse(&m).unwrap();
        assert!((&m * &inv).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
        assert_eq!(
            inverse(&ComplexMatrix::zeros(2, 2)),
            Err(LinalgError::Singular)
        );
    }

    #[test]
    fn from_vec_validates() {
        assert!(ComplexMatrix::from_vec(2, 2, vec![ONE; 3]).is_err());
        assert!(matches!(
            ComplexMatrix::from_vec(1, 2, vec![ONE, c(f64::NAN, 0.0)]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn json_round_trip() {
        let m = ComplexMatrix::from_vec(2, 2, vec![c(1.0, -0.5), ZERO, c(0.25, 2.0), ONE]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, "[[[1.0,-0.5],[0.0,0.0]],[[0.25,2.0],[1.0,0.0]]]");
        let back: ComplexMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<ComplexMatrix>("[[[1,0]],[[1,0],[2,0]]]").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kron_is_associative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = sample::matrix(&mut rng, 2, 2);
            let b = sample::matrix(&mut rng, 3, 2);
            let c = sample::matrix(&mut rng, 2, 3);
            let lhs = kron(&kron(&a, &b), &c);
            let rhs = kron(&a, &kron(&b, &c));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        }

        #[test]
        fn partial_trace_is_linear_and_positive(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = sample::matrix(&mut rng, 6, 6);
            let b = sample::matrix(&mut rng, 6, 6);
            let alpha = sample::complex(&mut rng);
            let lhs = partial_trace(&(&a + &b.scale(alpha)), 2, 3, Keep::Left).unwrap();
            let rhs = &partial_trace(&a, 2, 3, Keep::Left).unwrap()
                + &partial_trace(&b, 2, 3, Keep::Left).unwrap().scale(alpha);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);

            let rho = sample::density_matrix(&mut rng, 6);
            for keep in [Keep::Left, Keep::Right] {
                let red = partial_trace(&rho, 2, 3, keep).unwrap();
                let e = eig_hermitian(&red).unwrap();
                prop_assert!(e.values[0] > -1e-12);
            }
        }

        #[test]
        fn eig_reconstructs(seed in any::<u64>(), n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = sample::hermitian(&mut rng, n);
            let e = eig_hermitian(&h).unwrap();
            let diag = ComplexMatrix::from_real_diag(&e.values);
            let rebuilt = &(&e.vectors * &diag) * &e.vectors.adjoint();
            let scale = h.frobenius_norm().max(1.0);
            prop_assert!(rebuilt.max_abs_diff(&h) <= 1e-9 * scale);
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(e.vectors.unitarity_defect() < 1e-10);
            for k in 0..n {
                let v = e.vector(k);
                let hv = h.apply(&v);
                let res = norm(&sub_vec(&hv, &scale_vec(&v, Complex64::new(e.values[k], 0.0))));
                prop_assert!(res <= 1e-10 * scale);
            }
        }

        #[test]
        fn embedded_operators_at_distinct_sites_commute(seed in any::<u64>(), a in 0usize..3, b in 0usize..3) {
            prop_assume!(a != b);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = ChainLayout::qubits(3);
            let x = embed_site_operator(&sample::matrix(&mut rng, 2, 2), a, &layout).unwrap();
            let y = embed_site_operator(&sample::matrix(&mut rng, 2, 2), b, &layout).unwrap();
            prop_assert!(x.commutator(&y).max_abs() < 1e-14);
        }
    }
}
