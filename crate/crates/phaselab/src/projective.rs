//! Geometry of projective Hilbert space: rays, the chord / Fubini–Study /
//! gap metrics, positive-phase sections and explicit unitary transports.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, LinalgError, I, ONE, ZERO};

/// Two rays are equal when their ray product is this close to 1.
pub const RAY_EQ_TOL: f64 = 1e-10;
/// Overlaps at or below this are treated as orthogonal.
pub const ORTHOGONAL_TOL: f64 = 1e-12;
/// Forward Cayley chart refuses unitaries with an eigenvalue this close to −1.
pub const CAYLEY_SINGULAR_TOL: f64 = 1e-8;

const UNIT_NORM_TOL: f64 = 1e-12;
const FRAME_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectiveError {
    #[error("zero vector has no ray")]
    ZeroVector,
    #[error("vector norm {norm} is not 1")]
    NotNormalized { norm: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("vectors are orthogonal (overlap {overlap:.3e})")]
    Orthogonal { overlap: f64 },
    #[error("frame is not orthonormal (Gram defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },
    #[error("frames need ambient dimension >= {needed}, have {have}")]
    AmbientTooSmall { needed: usize, have: usize },
    #[error("-1 is (numerically) in the spectrum: min |1 + lambda| = {distance:.3e}")]
    MinusOneInSpectrum { distance: f64 },
    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct Ray {
    rep: Vec<Complex64>,
}

impl Ray {
    /// The ray through a nonzero vector; the representative is normalized.
    pub fn new(v: Vec<Complex64>) -> Result<Self, ProjectiveError> {
        let n = linalg::norm(&v);
        if !(n.is_finite() && n > 0.0) {
            return Err(ProjectiveError::ZeroVector);
        }
        Ok(Self {
            rep: linalg::scale_vec(&v, Complex64::new(1.0 / n, 0.0)),
        })
    }

    /// Uses `v` as the representative verbatim; it must already be a unit vector.
    pub fn from_unit(v: Vec<Complex64>) -> Result<Self, ProjectiveError> {
        let n = linalg::norm(&v);
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(ProjectiveError::NotNormalized { norm: n });
        }
        Ok(Self { rep: v })
    }

    pub fn basis(n: usize, k: usize) -> Self {
        Self {
            rep: linalg::basis_vector(n, k),
        }
    }

    pub fn rep(&self) -> &[Complex64] {
        &self.rep
    }

    pub fn into_rep(self) -> Vec<Complex64> {
        self.rep
    }

    pub fn dim(&self) -> usize {
        self.rep.len()
    }

    /// Rank-one projector onto the ray.
    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.rep, &self.rep)
    }

    pub fn conj(&self) -> Self {
        Self {
            rep: self.rep.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Same ray, representative multiplied by `phase`.
    pub fn with_phase(&self, phase: Complex64) -> Self {
        Self {
            rep: linalg::scale_vec(&self.rep, phase / phase.norm()),
        }
    }
}

impl PartialEq for Ray {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && (1.0 - ray_product(self, other)).abs() <= RAY_EQ_TOL
    }
}

/// |⟨a, b⟩| of the unit representatives, clamped to [0, 1].
pub fn ray_product(a: &Ray, b: &Ray) -> f64 {
    linalg::inner(&a.rep, &b.rep).norm().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayDistances {
    pub chord: f64,
    pub fubini_study: f64,
    pub gap: f64,
}

/// Distances from the chord c = min_α ‖a − e^{iα}b‖, using
/// gap = c·√(1 − c²/4) and FS = 2·asin(c/2). These equal √(1 − p²) and
/// arccos p but keep full relative accuracy for nearly equal rays.
pub fn ray_distances(a: &Ray, b: &Ray) -> RayDistances {
    let ov = linalg::inner(&b.rep, &a.rep);
    let phase = if ov.norm() > 0.0 {
        ov / ov.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let chord =
        linalg::norm(&linalg::sub_vec(&a.rep, &linalg::scale_vec(&b.rep, phase))).min(SQRT_2);
    RayDistances {
        chord,
        fubini_study: 2.0 * (0.5 * chord).asin(),
        gap: chord * (1.0 - 0.25 * chord * chord).max(0.0).sqrt(),
    }
}

pub fn distances_from_product(p: f64) -> RayDistances {
    let p = p.clamp(0.0, 1.0);
    RayDistances {
        chord: (2.0 - 2.0 * p).max(0.0).sqrt(),
        fubini_study: p.acos(),
        gap: (1.0 - p * p).max(0.0).sqrt(),
    }
}

/// The representative of `target` whose overlap with `base` is real and positive.
pub fn section_positive(base: &Ray, target: &Ray) -> Result<Vec<Complex64>, ProjectiveError> {
    if base.dim() != target.dim() {
        return Err(ProjectiveError::DimensionMismatch(base.dim(), target.dim()));
    }
    let ov = linalg::inner(&base.rep, &target.rep);
    if ov.norm() <= ORTHOGONAL_TOL {
        return Err(ProjectiveError::Orthogonal { overlap: ov.norm() });
    }
    Ok(linalg::scale_vec(&target.rep, ov.conj() / ov.norm()))
}

fn check_unit(v: &[Complex64]) -> Result<(), ProjectiveError> {
    let n = linalg::norm(v);
    if (n - 1.0).abs() > 1e-10 {
        return Err(ProjectiveError::NotNormalized { norm: n });
    }
    Ok(())
}

/// Unitary sending `psi` to `omega`, acting on span{psi, omega}ᗮ as the
/// scalar ⟨omega, psi⟩/|⟨omega, psi⟩|.
pub fn rotator(psi: &[Complex64], omega: &[Complex64]) -> Result<ComplexMatrix, ProjectiveError> {
    if psi.len() != omega.len() {
        return Err(ProjectiveError::DimensionMismatch(psi.len(), omega.len()));
    }
    check_unit(psi)?;
    check_unit(omega)?;
    let ov = linalg::inner(omega, psi);
    let a = ov.norm();
    if a <= ORTHOGONAL_TOL {
        return Err(ProjectiveError::Orthogonal { overlap: a });
    }
    let lambda = ov / a;
    let mu = 1.0 / (1.0 + a);
    let n = psi.len();
    let mut u = ComplexMatrix::identity(n).scale(lambda);
    let terms = [
        (psi, omega, Complex64::new(-mu, 0.0)),
        (psi, psi, -lambda * mu),
        (omega, omega, -lambda * mu),
        (omega, psi, ONE + lambda * mu * ov),
    ];
    for (ket, bra, coeff) in terms {
        for i in 0..n {
            for j in 0..n {
                u[(i, j)] += coeff * ket[i] * bra[j].conj();
            }
        }
    }
    Ok(u)
}

/// Orthogonal projector onto span{x, y}, built by Gram–Schmidt.
fn span_projector(x: &[Complex64], y: &[Complex64]) -> ComplexMatrix {
    let mut p = ComplexMatrix::outer(x, x);
    let resid = linalg::sub_vec(y, &linalg::scale_vec(x, linalg::inner(x, y)));
    let r = linalg::norm(&resid);
    if r > 1e-14 {
        let e = linalg::scale_vec(&resid, Complex64::new(1.0 / r, 0.0));
        p = &p + &ComplexMatrix::outer(&e, &e);
    }
    p
}

/// U_{x,y}: z ↦ ⟨y,x⟩z − ⟨y,z⟩x + ⟨x,z⟩y on span{x, y}, identity on its
/// orthogonal complement.
pub fn elementary_transport(
    x: &[Complex64],
    y: &[Complex64],
) -> Result<ComplexMatrix, ProjectiveError> {
    if x.len() != y.len() {
        return Err(ProjectiveError::DimensionMismatch(x.len(), y.len()));
    }
    check_unit(x)?;
    check_unit(y)?;
    let n = x.len();
    let pk = span_projector(x, y);
    let yx = linalg::inner(y, x);
    let id = ComplexMatrix::identity(n);
    let mut u = &(&id - &pk) + &pk.scale(yx);
    u = &u - &ComplexMatrix::outer(x, y);
    u = &u + &ComplexMatrix::outer(y, x);
    Ok(u)
}

#[derive(Debug, Clone)]
pub struct FrameTransport {
    pub unitary: ComplexMatrix,
    /// ‖𝟙 − u‖ in operator norm.
    pub defect: f64,
}

fn check_frame(frame: &[Vec<Complex64>]) -> Result<(), ProjectiveError> {
    let mut defect: f64 = 0.0;
    for (i, a) in frame.iter().enumerate() {
        for (j, b) in frame.iter().enumerate() {
            let expect = if i == j { ONE } else { ZERO };
            defect = defect.max((linalg::inner(a, b) - expect).norm());
        }
    }
    if defect > FRAME_TOL {
        return Err(ProjectiveError::NotOrthonormal { defect });
    }
    Ok(())
}

/// Unitary u with u·xᵢ = yᵢ, built by the recursion
/// W₁ = U_{x₁,y₁}, W_{k+1} = U_{W_k x_{k+1}, y_{k+1}}·W_k.
pub fn frame_transport(
    xs: &[Vec<Complex64>],
    ys: &[Vec<Complex64>],
) -> Result<FrameTransport, ProjectiveError> {
    if xs.len() != ys.len() {
        return Err(ProjectiveError::DimensionMismatch(xs.len(), ys.len()));
    }
    let Some(dim) = xs.first().map(Vec::len) else {
        return Ok(FrameTransport {
            unitary: ComplexMatrix::identity(0),
            defect: 0.0,
        });
    };
    if let Some(v) = xs.iter().chain(ys).find(|v| v.len() != dim) {
        return Err(ProjectiveError::DimensionMismatch(dim, v.len()));
    }
    if dim < 2 * xs.len() {
        return Err(ProjectiveError::AmbientTooSmall {
            needed: 2 * xs.len(),
            have: dim,
        });
    }
    check_frame(xs)?;
    check_frame(ys)?;
    let mut w = ComplexMatrix::identity(dim);
    for (x, y) in xs.iter().zip(ys) {
        let wx = w.apply(x);
        let wx = linalg::scale_vec(&wx, Complex64::new(1.0 / linalg::norm(&wx), 0.0));
        w = &elementary_transport(&wx, y)? * &w;
    }
    let defect = (&ComplexMatrix::identity(dim) - &w).operator_norm();
    Ok(FrameTransport { unitary: w, defect })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CayleyDirection {
    /// U ↦ i(𝟙 − U)(𝟙 + U)⁻¹
    Forward,
    /// A ↦ (i𝟙 − A)(i𝟙 + A)⁻¹
    Inverse,
}

pub fn cayley_chart(
    m: &ComplexMatrix,
    direction: CayleyDirection,
) -> Result<ComplexMatrix, ProjectiveError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        }
        .into());
    }
    let id = ComplexMatrix::identity(m.rows());
    match direction {
        CayleyDirection::Forward => {
            let defect = m.unitarity_defect();
            if defect > 1e-9 {
                return Err(ProjectiveError::NotUnitary { defect });
            }
            let plus = &id + m;
            let distance = linalg::singular_values(&plus)
                .last()
                .copied()
                .unwrap_or(1.0);
            if distance < CAYLEY_SINGULAR_TOL {
                return Err(ProjectiveError::MinusOneInSpectrum { distance });
            }
            let a = (&(&id - m) * &linalg::inverse(&plus)?).scale(I);
            Ok((&a + &a.adjoint()).scale_real(0.5))
        }
        CayleyDirection::Inverse => {
            let deviation = m.hermitian_deviation();
            if deviation > linalg::HERMITIAN_TOL {
                return Err(LinalgError::NotHermitian { deviation }.into());
            }
            let i_id = id.scale(I);
            Ok(&(&i_id - m) * &linalg::inverse(&(&i_id + m))?)
        }
    }
}

/// |⟨φ₂,ψ⟩|/⟨φ₂,ψ⟩ · ⟨φ₁,ψ⟩/|⟨φ₁,ψ⟩|, the transition phase between the
/// positive sections over `phi1` and `phi2` evaluated at `psi`.
pub fn sector_transition_phase(
    phi1: &Ray,
    phi2: &Ray,
    psi: &Ray,
) -> Result<Complex64, ProjectiveError> {
    for phi in [phi1, phi2] {
        if phi.dim() != psi.dim() {
            return Err(ProjectiveError::DimensionMismatch(phi.dim(), psi.dim()));
        }
    }
    let a = linalg::inner(&phi1.rep, &psi.rep);
    let b = linalg::inner(&phi2.rep, &psi.rep);
    for ov in [a, b] {
        if ov.norm() <= ORTHOGONAL_TOL {
            return Err(ProjectiveError::Orthogonal { overlap: ov.norm() });
        }
    }
    Ok((b.norm() / b) * (a / a.norm()))
}
