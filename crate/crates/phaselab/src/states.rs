//! States on full matrix algebras M_n(ℂ), represented by density matrices.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, LinalgError, ZERO};

/// Validation tolerance for Hermiticity, positivity and trace.
pub const STATE_TOL: f64 = 1e-10;
/// trace(ρ²) threshold for purity.
pub const PURITY_TOL: f64 = 1e-9;
/// Normalizers tr(aρa†) at or below this put `a` in the Gelfand ideal.
pub const GELFAND_TOL: f64 = 1e-12;
/// Relative cut separating the Gelfand ideal from the rest of the Gram spectrum.
pub const GNS_RANK_CUT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("density matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("density matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("density matrix has negative eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },
    #[error("density matrix has trace {trace:.12} instead of 1")]
    TraceNotOne { trace: f64 },
    #[error("zero vector has no state")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("operator lies in the Gelfand ideal of the state (normalizer {normalizer:.3e})")]
    GelfandIdeal { normalizer: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    rho: ComplexMatrix,
}

impl DensityState {
    /// Validates and stores ρ, symmetrized as (ρ + ρ†)/2.
    pub fn new(rho: ComplexMatrix) -> Result<Self, StateError> {
        Self::with_tolerance(rho, STATE_TOL)
    }

    pub fn with_tolerance(rho: ComplexMatrix, tol: f64) -> Result<Self, StateError> {
        if !rho.is_square() {
            return Err(StateError::NotSquare {
                rows: rho.rows(),
                cols: rho.cols(),
            });
        }
        let deviation = (&rho - &rho.adjoint()).max_abs();
        if deviation > tol {
            return Err(StateError::NotHermitian { deviation });
        }
        let trace = rho.trace().re;
        if (trace - 1.0).abs() > tol {
            return Err(StateError::TraceNotOne { trace });
        }
        let sym = (&rho + &rho.adjoint()).scale_real(0.5);
        let min_eigenvalue = linalg::eig_hermitian(&sym)?.values[0];
        if min_eigenvalue < -tol {
            return Err(StateError::NotPositive { min_eigenvalue });
        }
        Ok(Self { rho: sym })
    }

    /// For matrices that are states by construction; only symmetrizes.
    pub(crate) fn trusted(rho: ComplexMatrix) -> Self {
        let sym = (&rho + &rho.adjoint()).scale_real(0.5);
        Self { rho: sym }
    }

    /// ω₀ⁿ: the vector state of e₀ on M_n.
    pub fn basepoint(n: usize) -> Self {
        let mut rho = ComplexMatrix::zeros(n, n);
        rho[(0, 0)] = linalg::ONE;
        Self { rho }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            rho: ComplexMatrix::identity(n).scale_real(1.0 / n as f64),
        }
    }

    pub fn rho(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn into_rho(self) -> ComplexMatrix {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.rows()
    }

    /// ω(A) = tr(ρA).
    pub fn expectation(&self, a: &ComplexMatrix) -> Complex64 {
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.rho[(i, j)] * a[(j, i)];
            }
        }
        acc
    }
}

pub fn state_from_vector(v: &[Complex64]) -> Result<DensityState, StateError> {
    let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if !(n2.is_finite() && n2 > 0.0) {
        return Err(StateError::ZeroVector);
    }
    Ok(DensityState {
        rho: ComplexMatrix::outer(v, v).scale_real(1.0 / n2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Purity {
    pub pure: bool,
    pub trace_sq: f64,
}

pub fn purity(s: &DensityState) -> Purity {
    let trace_sq = (s.rho() * s.rho()).trace().re;
    Purity {
        pure: trace_sq >= 1.0 - PURITY_TOL,
        trace_sq,
    }
}

/// Trace-norm distance, i.e. the norm of ψ − ω as a functional.
pub fn state_distance(a: &DensityState, b: &DensityState) -> Result<f64, StateError> {
    if a.dim() != b.dim() {
        return Err(StateError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(linalg::trace_norm(&(a.rho() - b.rho())))
}

/// Von Neumann entropy in nats.
pub fn entropy(s: &DensityState) -> Result<f64, StateError> {
    let e = linalg::eig_hermitian(s.rho())?;
    Ok(e.values
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

/// A·ω: the state B ↦ ω(A†BA)/ω(A†A), with density matrix AρA†/tr(AρA†).
pub fn act(a: &ComplexMatrix, s: &DensityState) -> Result<DensityState, StateError> {
    if a.rows() != s.dim() || a.cols() != s.dim() {
        return Err(StateError::DimensionMismatch(a.rows(), s.dim()));
    }
    let num = &(a * s.rho()) * &a.adjoint();
    let normalizer = num.trace().re;
    if normalizer <= GELFAND_TOL {
        return Err(StateError::GelfandIdeal { normalizer });
    }
    Ok(DensityState::trusted(num.scale_real(1.0 / normalizer)))
}

/// ω(A†A), the quantity whose vanishing puts A in the Gelfand ideal.
pub fn normalizer(a: &ComplexMatrix, s: &DensityState) -> f64 {
    s.expectation(&(&a.adjoint() * a)).re
}

#[derive(Debug, Clone)]
pub struct GnsResult {
    /// Dimension of the GNS Hilbert space.
    pub dim: usize,
    /// Orthonormal basis of the quotient M_n/𝔑_ω, as representative matrices.
    pub basis: Vec<ComplexMatrix>,
    /// Coordinates of Ω_ω = [𝟙] in `basis`.
    pub cyclic: Vec<Complex64>,
    /// Basis of the Gelfand ideal 𝔑_ω.
    pub ideal_basis: Vec<ComplexMatrix>,
    rho: ComplexMatrix,
}

impl GnsResult {
    pub fn ideal_rank(&self) -> usize {
        self.ideal_basis.len()
    }

    /// π_ω(A) in the orthonormal basis: entries ω(F_m† A F_k).
    pub fn rep(&self, a: &ComplexMatrix) -> Result<ComplexMatrix, StateError> {
        let n = self.rho.rows();
        if a.rows() != n || a.cols() != n {
            return Err(StateError::DimensionMismatch(a.rows(), n));
        }
        let images: Vec<ComplexMatrix> = self.basis.iter().map(|f| &(a * f) * &self.rho).collect();
        Ok(ComplexMatrix::from_fn(self.dim, self.dim, |m, k| {
            hs_inner(&self.basis[m], &images[k])
        }))
    }
}

/// Hilbert–Schmidt inner product tr(a†b).
fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// GNS construction over the matrix-unit basis E_{ij} (index i·n + j).
///
/// The Gram form is G_{(ij),(kl)} = ω(E_{ij}† E_{kl}) = δ_{ik} ρ_{lj}. The
/// Gelfand ideal is its null space; the GNS basis is the Gram–Schmidt
/// orthonormalization of the matrix units in index order.
pub fn gns(omega: &DensityState) -> Result<GnsResult, StateError> {
    let n = omega.dim();
    let rho = omega.rho();
    let units = n * n;
    let gram = ComplexMatrix::from_fn(units, units, |a, b| {
        let (i, j) = (a / n, a % n);
        let (k, l) = (b / n, b % n);
        if i == k {
            rho[(l, j)]
        } else {
            ZERO
        }
    });
    let eig = linalg::eig_hermitian(&gram)?;
    let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let cut = GNS_RANK_CUT * top;

    let ideal_basis = (0..units)
        .filter(|&k| eig.values[k] <= cut)
        .map(|k| unit_combination(n, &eig.vector(k)))
        .collect();

    let g_inner = |c: &[Complex64], d: &[Complex64]| linalg::inner(c, &gram.apply(d));
    let mut coeffs: Vec<Vec<Complex64>> = Vec::new();
    for a in 0..units {
        let mut r = linalg::basis_vector(units, a);
        for f in &coeffs {
            let p = g_inner(f, &r);
            r = linalg::sub_vec(&r, &linalg::scale_vec(f, p));
        }
        let nr = g_inner(&r, &r).re;
        if nr > cut {
            coeffs.push(linalg::scale_vec(&r, Complex64::new(1.0 / nr.sqrt(), 0.0)));
        }
    }
    let basis: Vec<ComplexMatrix> = coeffs.iter().map(|c| unit_combination(n, c)).collect();
    // ⟨[F], [𝟙]⟩ = ω(F†) = tr(ρ F†)
    let cyclic = basis.iter().map(|f| hs_inner(f, rho)).collect();
    Ok(GnsResult {
        dim: basis.len(),
        basis,
        cyclic,
        ideal_basis,
        rho: rho.clone(),
    })
}

fn unit_combination(n: usize, c: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |i, j| c[i * n + j])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorStateDistance {
    /// 2√(1 − |⟨ψ,ω⟩|²)
    pub closed_form: f64,
    /// Trace-norm distance of the induced pure states.
    pub oracle: f64,
}

pub fn vector_state_distance(
    psi: &[Complex64],
    omega: &[Complex64],
) -> Result<VectorStateDistance, StateError> {
    if psi.len() != omega.len() {
        return Err(StateError::DimensionMismatch(psi.len(), omega.len()));
    }
    let a = state_from_vector(psi)?;
    let b = state_from_vector(omega)?;
    let p = linalg::inner(psi, omega).norm() / (linalg::norm(psi) * linalg::norm(omega));
    Ok(VectorStateDistance {
        closed_form: 2.0 * (1.0 - p * p).max(0.0).sqrt(),
        oracle: state_distance(&a, &b)?,
    })
}
