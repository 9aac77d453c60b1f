//! The S³-parametrized dimer chain and its phase invariant.
//!
//! Sites carry spin ½ with |↑⟩ = e₀. Two-site operators act on the ordered
//! pair (left, right) with the left factor most significant, so the basis is
//! |↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩. The truncated right chain has sites 1..2N, stored
//! at tensor positions 0..2N−1.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cech::{self, CechError, DegreeOptions, SphereField, SphereGrid};
use crate::linalg::{self, pauli, ChainLayout, ComplexMatrix, LinalgError, ONE, ZERO};
use crate::projective::{self, ProjectiveError, Ray};

pub const PARAM_NORM_TOL: f64 = 1e-12;
/// Smallest admissible f = √(g² + ‖𝐰‖²).
pub const CHART_TOL: f64 = 1e-12;
pub const Y_OVERLAP_MIN: f64 = 0.9;
pub const PROJECTION_WEIGHT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimerError {
    #[error("parameter point has norm {norm}, expected 1")]
    NotUnit { norm: f64 },
    #[error("w4 = {w4} is outside the {hemisphere:?} chart (epsilon {epsilon})")]
    WrongHemisphere {
        w4: f64,
        hemisphere: Hemisphere,
        epsilon: f64,
    },
    #[error("f = {f:.3e} vanishes; point is outside the chart")]
    OutsideChart { f: f64 },
    #[error("w4 = {w4} is outside the band |w4| < {epsilon}")]
    OutsideBand { w4: f64, epsilon: f64 },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("boundary contamination: |<Omega_R, M Omega_R>| = {y_overlap:.4} < {min}")]
    BoundaryContamination { y_overlap: f64, min: f64 },
    #[error("projected state has weight {weight:.9} in span{{Omega_R, sx_1 Omega_R}}")]
    ProjectionDeficit { weight: f64 },
    #[error("site {site} is not a site of the {sites}-site chain")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Projective(#[from] ProjectiveError),
    #[error(transparent)]
    Cech(#[from] CechError),
}

/// A point w = (𝐰, w₄) of S³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    w: [f64; 4],
}

impl ParamPoint {
    pub fn new(w: [f64; 4]) -> Result<Self, DimerError> {
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > PARAM_NORM_TOL {
            return Err(DimerError::NotUnit { norm });
        }
        Ok(Self { w })
    }

    /// Rescales any nonzero 4-vector onto S³.
    pub fn normalized(w: [f64; 4]) -> Result<Self, DimerError> {
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(DimerError::NotUnit { norm });
        }
        Ok(Self {
            w: w.map(|x| x / norm),
        })
    }

    /// (√(1−w₄²)·n(θ,φ), w₄).
    pub fn from_angles(theta: f64, phi: f64, w4: f64) -> Result<Self, DimerError> {
        let rho = (1.0 - w4 * w4).max(0.0).sqrt();
        let n = unit_direction(theta, phi);
        Self::normalized([rho * n[0], rho * n[1], rho * n[2], w4])
    }

    /// The equator point (r, 0).
    pub fn equator(r: [f64; 3]) -> Result<Self, DimerError> {
        Self::normalized([r[0], r[1], r[2], 0.0])
    }

    pub fn w(&self) -> [f64; 4] {
        self.w
    }

    pub fn w4(&self) -> f64 {
        self.w[3]
    }

    pub fn wvec(&self) -> [f64; 3] {
        [self.w[0], self.w[1], self.w[2]]
    }

    pub fn wvec_norm(&self) -> f64 {
        let v = self.wvec();
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    /// (θ, φ) with θ ∈ [0, π], φ ∈ (−π, π]; `None` at the poles of S³ where
    /// 𝐰 = 0.
    pub fn angles(&self) -> Option<(f64, f64)> {
        let n = self.wvec_norm();
        if n <= PARAM_NORM_TOL {
            return None;
        }
        let [x, y, z] = self.wvec();
        Some(angles_of([x / n, y / n, z / n]))
    }

    pub fn negate(&self) -> Self {
        Self {
            w: self.w.map(|x| -x),
        }
    }
}

/// n(θ,φ) = (cos φ sin θ, sin φ sin θ, cos θ).
pub fn unit_direction(theta: f64, phi: f64) -> [f64; 3] {
    [
        phi.cos() * theta.sin(),
        phi.sin() * theta.sin(),
        theta.cos(),
    ]
}

fn angles_of(r: [f64; 3]) -> (f64, f64) {
    let theta = (r[0] * r[0] + r[1] * r[1]).sqrt().atan2(r[2]);
    let phi = if r[0] == 0.0 && r[1] == 0.0 {
        0.0
    } else {
        r[1].atan2(r[0])
    };
    (theta, phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hemisphere {
    Plus,
    Minus,
}

impl Hemisphere {
    pub fn sign(self) -> f64 {
        match self {
            Hemisphere::Plus => 1.0,
            Hemisphere::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub epsilon: f64,
    pub n_dimers: usize,
    pub grid: [usize; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.25,
            n_dimers: 2,
            grid: [32, 64],
        }
    }
}

impl ModelConfig {
    pub const MAX_DIMERS: usize = 6;

    pub fn validate(&self) -> Result<(), DimerError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DimerError::Config(format!(
                "epsilon {} not in (0,1)",
                self.epsilon
            )));
        }
        if self.n_dimers < 2 || self.n_dimers > Self::MAX_DIMERS {
            return Err(DimerError::Config(format!(
                "n_dimers {} not in 2..={}",
                self.n_dimers,
                Self::MAX_DIMERS
            )));
        }
        SphereGrid::new(self.grid[0], self.grid[1])?;
        Ok(())
    }

    /// Number of sites L = 2N of the truncated right chain.
    pub fn sites(&self) -> usize {
        2 * self.n_dimers
    }

    pub fn sphere_grid(&self) -> Result<SphereGrid, DimerError> {
        Ok(SphereGrid::new(self.grid[0], self.grid[1])?)
    }
}

/// g±(w) = max(0, (±w₄ − ε)/(1 − ε)).
pub fn bump(w: &ParamPoint, hemisphere: Hemisphere, eps: f64) -> f64 {
    ((hemisphere.sign() * w.w4() - eps) / (1.0 - eps)).max(0.0)
}

fn check_hemisphere(w: &ParamPoint, hemisphere: Hemisphere, eps: f64) -> Result<(), DimerError> {
    let ok = match hemisphere {
        Hemisphere::Plus => w.w4() > -eps,
        Hemisphere::Minus => w.w4() < eps,
    };
    if ok {
        Ok(())
    } else {
        Err(DimerError::WrongHemisphere {
            w4: w.w4(),
            hemisphere,
            epsilon: eps,
        })
    }
}

fn check_band(w: &ParamPoint, eps: f64) -> Result<(), DimerError> {
    if w.w4().abs() < eps {
        Ok(())
    } else {
        Err(DimerError::OutsideBand {
            w4: w.w4(),
            epsilon: eps,
        })
    }
}

fn swap_matrix() -> ComplexMatrix {
    ComplexMatrix::from_fn(4, 4, |i, j| {
        let swapped = [0, 2, 1, 3][j];
        if i == swapped {
            ONE
        } else {
            ZERO
        }
    })
}

/// Plus: g₊ σ⃗₀·σ⃗₁ + 𝐰·(σ⃗₀ − σ⃗₁) on sites (0, 1).
/// Minus: g₋ σ⃗₋₁·σ⃗₀ + 𝐰·(σ⃗₀ − σ⃗₋₁) on sites (−1, 0).
pub fn dimer_hamiltonian(
    w: &ParamPoint,
    hemisphere: Hemisphere,
    eps: f64,
) -> Result<ComplexMatrix, DimerError> {
    check_hemisphere(w, hemisphere, eps)?;
    let g = bump(w, hemisphere, eps);
    let field = pauli::dot(w.wvec());
    let id = ComplexMatrix::identity(2);
    let staggered = &linalg::kron(&field, &id) - &linalg::kron(&id, &field);
    let h = &pauli::heisenberg().scale_real(g) + &staggered;
    Ok(match hemisphere {
        Hemisphere::Plus => h,
        Hemisphere::Minus => {
            let s = swap_matrix();
            &(&s * &h) * &s
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimerClosedForm {
    pub g: f64,
    pub f: f64,
    pub c: f64,
    pub d: f64,
    /// Ascending: −g−2f, g, g, −g+2f.
    pub spectrum: [f64; 4],
    pub ground: Vec<Complex64>,
}

/// Closed-form spectrum and ground vector of [`dimer_hamiltonian`].
///
/// With κ = 1/(f(c+d)) the ground vector of the plus dimer is
/// −½κ(w₁−iw₂)|↑↑⟩ − ½((c+d)−κw₃)|↑↓⟩ + ½((c+d)+κw₃)|↓↑⟩ + ½κ(w₁+iw₂)|↓↓⟩,
/// which is smooth on the whole chart and unit-normalized for every ‖𝐰‖.
/// The minus dimer's vector is its image under the swap of the two sites.
pub fn dimer_closed_form(
    w: &ParamPoint,
    hemisphere: Hemisphere,
    eps: f64,
) -> Result<DimerClosedForm, DimerError> {
    check_hemisphere(w, hemisphere, eps)?;
    let g = bump(w, hemisphere, eps);
    let nw = w.wvec_norm();
    let f = (g * g + nw * nw).sqrt();
    if f < CHART_TOL {
        return Err(DimerError::OutsideChart { f });
    }
    let c = ((f + nw) / (2.0 * f)).sqrt();
    let d = ((f - nw) / (2.0 * f)).max(0.0).sqrt();
    let kappa = 1.0 / (f * (c + d));
    let [w1, w2, w3] = w.wvec();
    let s = c + d;
    let up_down = Complex64::new(-0.5 * (s - kappa * w3), 0.0);
    let down_up = Complex64::new(0.5 * (s + kappa * w3), 0.0);
    let (a, b) = match hemisphere {
        Hemisphere::Plus => (up_down, down_up),
        Hemisphere::Minus => (down_up, up_down),
    };
    let ground = vec![
        Complex64::new(w1, -w2) * (-0.5 * kappa),
        a,
        b,
        Complex64::new(w1, w2) * (0.5 * kappa),
    ];
    Ok(DimerClosedForm {
        g,
        f,
        c,
        d,
        spectrum: [-g - 2.0 * f, g, g, -g + 2.0 * f],
        ground,
    })
}

/// U(θ,φ) with U†σᶻU = n(θ,φ)·σ.
pub fn site_rotation(theta: f64, phi: f64) -> ComplexMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let e = Complex64::from_polar(1.0, phi / 2.0);
    let ec = e.conj();
    ComplexMatrix::from_rows(&[vec![e * c, ec * s], vec![-e * s, ec * c]]).expect("2x2")
}

/// diag(e^{−iφ/2}, e^{iφ/2})·U(θ,φ) = [[cos(θ/2), sin(θ/2)e^{−iφ}], [−sin(θ/2)e^{iφ}, cos(θ/2)]].
/// Same conjugation action as U(θ,φ), but unchanged under (θ,φ) → (−θ,φ+π).
pub fn balanced_rotation(theta: f64, phi: f64) -> ComplexMatrix {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let e = Complex64::from_polar(1.0, phi);
    ComplexMatrix::from_rows(&[
        vec![Complex64::new(c, 0.0), e.conj() * s],
        vec![-e * s, Complex64::new(c, 0.0)],
    ])
    .expect("2x2")
}

/// W = ½(1+1/√2)𝟙 + ½(1−1/√2)σᶻσᶻ − (1/√2)(σ⁺σ⁻ − σ⁻σ⁺).
pub fn dimer_swap_unitary() -> ComplexMatrix {
    let id = ComplexMatrix::identity(4);
    let zz = linalg::kron(&pauli::z(), &pauli::z());
    let pm = linalg::kron(&pauli::plus(), &pauli::minus());
    let mp = linalg::kron(&pauli::minus(), &pauli::plus());
    let diag =
        &id.scale_real(0.5 * (1.0 + FRAC_1_SQRT_2)) + &zz.scale_real(0.5 * (1.0 - FRAC_1_SQRT_2));
    &diag - &(&pm - &mp).scale_real(FRAC_1_SQRT_2)
}

/// Model variants used for orientation and sanity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    #[default]
    Standard,
    /// Every unitary complex-conjugated.
    Conjugated,
    /// U(θ,φ) frozen at 𝟙, so the invariant must vanish.
    ConstantField,
}

impl ModelVariant {
    fn apply(self, u: ComplexMatrix) -> ComplexMatrix {
        match self {
            ModelVariant::Standard => u,
            ModelVariant::Conjugated => u.conj(),
            ModelVariant::ConstantField => ComplexMatrix::identity(2),
        }
    }

    fn rotation(self, theta: f64, phi: f64) -> ComplexMatrix {
        self.apply(site_rotation(theta, phi))
    }

    fn balanced_rotation(self, theta: f64, phi: f64) -> ComplexMatrix {
        self.apply(balanced_rotation(theta, phi))
    }

    /// Degree expected relative to the Bloch oracle.
    pub fn degree_factor(self) -> i64 {
        match self {
            ModelVariant::Standard => 1,
            ModelVariant::Conjugated => -1,
            ModelVariant::ConstantField => 0,
        }
    }
}

fn band_angles(w: &ParamPoint, eps: f64) -> Result<(f64, f64), DimerError> {
    check_band(w, eps)?;
    w.angles()
        .ok_or(DimerError::OutsideChart { f: w.wvec_norm() })
}

/// V₊ = U₀₁*W*U₀₁W and V₋ = U₋₁₀*WU₋₁₀W* with U₀₁ = U(θ,φ)⊗U(θ,φ).
pub fn dimer_transport(
    w: &ParamPoint,
    hemisphere: Hemisphere,
    eps: f64,
) -> Result<ComplexMatrix, DimerError> {
    let (theta, phi) = band_angles(w, eps)?;
    let u = site_rotation(theta, phi);
    let uu = linalg::kron(&u, &u);
    let wm = dimer_swap_unitary();
    Ok(match hemisphere {
        Hemisphere::Plus => &(&(&uu.adjoint() * &wm.adjoint()) * &uu) * &wm,
        Hemisphere::Minus => &(&(&uu.adjoint() * &wm) * &uu) * &wm.adjoint(),
    })
}

/// How the far end of the truncated chain is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClosure {
    /// Append the adjoint of [`balanced_rotation`] on site 2N so the
    /// unpaired last site is rotated back; the reference overlap is then 1
    /// for every (θ,φ).
    #[default]
    Closed,
    /// Drop straddling terms only; the reference overlap is |cos(θ/2)|.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZOptions {
    pub closure: BoundaryClosure,
    pub variant: ModelVariant,
}

/// A local gate at tensor positions `first..first + op-width`.
#[derive(Debug, Clone)]
struct Gate {
    op: ComplexMatrix,
    first: usize,
    width: usize,
}

/// M = B₋ G† B₋† B₊† G B₊ U₁† (· R_{2N}† when closed), listed in the
/// order the factors act.
fn z_circuit(theta: f64, phi: f64, sites: usize, opts: &ZOptions) -> Vec<Gate> {
    let u = opts.variant.rotation(theta, phi);
    let ud = u.adjoint();
    let closure = opts.variant.balanced_rotation(theta, phi).adjoint();
    let wm = dimer_swap_unitary();
    let wd = wm.adjoint();
    let single = |op: &ComplexMatrix, first| Gate {
        op: op.clone(),
        first,
        width: 1,
    };
    let pair = |op: &ComplexMatrix, first| Gate {
        op: op.clone(),
        first,
        width: 2,
    };
    let minus_pairs: Vec<usize> = (0..sites - 1).step_by(2).collect();
    let plus_pairs: Vec<usize> = (1..sites.saturating_sub(2)).step_by(2).collect();

    let mut gates = Vec::new();
    if opts.closure == BoundaryClosure::Closed {
        gates.push(single(&closure, sites - 1));
    }
    gates.push(single(&ud, 0));
    gates.extend(plus_pairs.iter().map(|&i| pair(&wm, i)));
    gates.extend((0..sites).map(|i| single(&u, i)));
    gates.extend(plus_pairs.iter().map(|&i| pair(&wd, i)));
    gates.extend(minus_pairs.iter().map(|&i| pair(&wd, i)));
    gates.extend((0..sites).map(|i| single(&ud, i)));
    gates.extend(minus_pairs.iter().map(|&i| pair(&wm, i)));
    gates
}

fn apply_gates<'a>(
    gates: impl Iterator<Item = (&'a ComplexMatrix, usize, usize)>,
    layout: &ChainLayout,
    target: &mut ComplexMatrix,
) -> Result<(), DimerError> {
    for (op, first, width) in gates {
        linalg::apply_block_operator(op, first, width, layout, target)?;
    }
    Ok(())
}

/// Ω_R = |↑↓↑↓…⟩ on `sites` sites.
pub fn reference_state(sites: usize) -> Vec<Complex64> {
    (0..sites).fold(vec![ONE], |acc, i| {
        linalg::kron_vec(&acc, &linalg::basis_vector(2, i % 2))
    })
}

#[derive(Debug, Clone)]
pub struct TruncatedZ {
    pub z: ComplexMatrix,
    pub m: ComplexMatrix,
    /// |⟨Ω_R, MΩ_R⟩|
    pub y_overlap: f64,
    /// ⟨Ω_R, MΩ_R⟩ / |⟨Ω_R, MΩ_R⟩|
    pub phase: Complex64,
}

/// Y = phase⁻¹·M fixes Ω_R up to a positive factor and z = Y·U₁.
pub fn truncated_z(
    w: &ParamPoint,
    cfg: &ModelConfig,
    opts: &ZOptions,
) -> Result<TruncatedZ, DimerError> {
    cfg.validate()?;
    let (theta, phi) = band_angles(w, cfg.epsilon)?;
    let sites = cfg.sites();
    let layout = ChainLayout::qubits(sites);
    let gates = z_circuit(theta, phi, sites, opts);
    let mut m = ComplexMatrix::identity(layout.total_dim());
    apply_gates(
        gates.iter().map(|g| (&g.op, g.first, g.width)),
        &layout,
        &mut m,
    )?;
    let omega = reference_state(sites);
    let ov = linalg::inner(&omega, &m.apply(&omega));
    let y_overlap = ov.norm();
    if y_overlap < Y_OVERLAP_MIN {
        return Err(DimerError::BoundaryContamination {
            y_overlap,
            min: Y_OVERLAP_MIN,
        });
    }
    let phase = ov / y_overlap;
    let u1 = opts.variant.rotation(theta, phi);
    // z = conj(phase)·M·U₁, formed as (U₁†·M†)† to reuse the left action.
    let mut zt = m.adjoint();
    linalg::apply_block_operator(&u1.adjoint(), 0, 1, &layout, &mut zt)?;
    let z = zt.adjoint().scale(phase.conj());
    Ok(TruncatedZ {
        z,
        m,
        y_overlap,
        phase,
    })
}

#[derive(Debug, Clone)]
pub struct ProjectedRay {
    /// Coefficients in the basis {Ω_R, σˣ₁Ω_R}.
    pub ray: Ray,
    pub weight: f64,
    pub y_overlap: f64,
}

/// The ray of z†Ω_R inside span{Ω_R, σˣ₁Ω_R}. Evolves the single vector
/// M†Ω_R instead of forming z.
pub fn projected_equator_map(
    w: &ParamPoint,
    cfg: &ModelConfig,
    opts: &ZOptions,
) -> Result<ProjectedRay, DimerError> {
    cfg.validate()?;
    let (theta, phi) = band_angles(w, cfg.epsilon)?;
    let sites = cfg.sites();
    let layout = ChainLayout::qubits(sites);
    let gates = z_circuit(theta, phi, sites, opts);
    let omega = reference_state(sites);
    let mut v = ComplexMatrix::from_columns(std::slice::from_ref(&omega))?;
    let adjoints: Vec<ComplexMatrix> = gates.iter().rev().map(|g| g.op.adjoint()).collect();
    apply_gates(
        gates
            .iter()
            .rev()
            .zip(&adjoints)
            .map(|(g, a)| (a, g.first, g.width)),
        &layout,
        &mut v,
    )?;
    let ov = linalg::inner(&omega, &v.column(0)).conj();
    let y_overlap = ov.norm();
    if y_overlap < Y_OVERLAP_MIN {
        return Err(DimerError::BoundaryContamination {
            y_overlap,
            min: Y_OVERLAP_MIN,
        });
    }
    let phase = ov / y_overlap;
    let u1 = opts.variant.rotation(theta, phi);
    linalg::apply_block_operator(&u1.adjoint(), 0, 1, &layout, &mut v)?;
    let state = linalg::scale_vec(&v.column(0), phase);
    let flipped = linalg::embed_site_operator(&pauli::x(), 0, &layout)?.apply(&omega);
    let coeffs = vec![
        linalg::inner(&omega, &state),
        linalg::inner(&flipped, &state),
    ];
    let weight = linalg::norm(&coeffs).powi(2);
    if weight < 1.0 - PROJECTION_WEIGHT_TOL {
        return Err(DimerError::ProjectionDeficit { weight });
    }
    Ok(ProjectedRay {
        ray: Ray::new(coeffs)?,
        weight,
        y_overlap,
    })
}

/// Ground ray of −r·σ, represented by U(θ,φ)†|↑⟩ =
/// (cos(θ/2)e^{−iφ/2}, sin(θ/2)e^{iφ/2}).
pub fn bloch_ground_map(r: [f64; 3]) -> Ray {
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let (theta, phi) = if n > 0.0 {
        angles_of(r.map(|x| x / n))
    } else {
        (0.0, 0.0)
    };
    Ray::from_unit(site_rotation(theta, phi).adjoint().column(0))
        .expect("columns of a unitary are unit vectors")
}

/// Max over `ops` of ‖zAz† − α(A)‖, where α is the automorphism
/// Ad(B₋G†B₋†B₊†GB₊) assembled densely on a right chain of 2N+2 sites with
/// no closure. `ops` holds (single-site operator, site label in 1..=2N).
pub fn intertwiner_residual(
    w: &ParamPoint,
    cfg: &ModelConfig,
    opts: &ZOptions,
    ops: &[(ComplexMatrix, usize)],
) -> Result<f64, DimerError> {
    let tz = truncated_z(w, cfg, opts)?;
    let (theta, phi) = band_angles(w, cfg.epsilon)?;
    let sites = cfg.sites();
    let layout = ChainLayout::qubits(sites);
    let ext = ChainLayout::qubits(sites + 2);
    let u = opts.variant.rotation(theta, phi);
    let wm = dimer_swap_unitary();
    let n = ext.len();
    let g = linalg::kron_all(&vec![u; n]);
    let product = |first: usize, step_end: usize| -> Result<ComplexMatrix, DimerError> {
        let mut b = ComplexMatrix::identity(ext.total_dim());
        let mut i = first;
        while i + 1 < step_end {
            b = &b * &linalg::embed_block_operator(&wm, i, 2, &ext)?;
            i += 2;
        }
        Ok(b)
    };
    let b_minus = product(0, n)?;
    let b_plus = product(1, n - 1)?;
    let c =
        &(&(&(&(&b_minus * &g.adjoint()) * &b_minus.adjoint()) * &b_plus.adjoint()) * &g) * &b_plus;
    let pad = ComplexMatrix::identity(4);
    let mut worst: f64 = 0.0;
    for (a, site) in ops {
        if *site == 0 || *site > sites {
            return Err(DimerError::SiteOutOfRange { site: *site, sites });
        }
        let small = linalg::embed_site_operator(a, site - 1, &layout)?;
        let lhs = &(&tz.z * &small) * &tz.z.adjoint();
        let big = linalg::embed_site_operator(a, site - 1, &ext)?;
        let rhs = &(&c * &big) * &c.adjoint();
        worst = worst.max(linalg::kron(&lhs, &pad).max_abs_diff(&rhs));
    }
    Ok(worst)
}

/// σˣ₁, σᶻ₂, σʸ₃.
pub fn default_intertwiner_ops() -> Vec<(ComplexMatrix, usize)> {
    vec![(pauli::x(), 1), (pauli::z(), 2), (pauli::y(), 3)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// max (1 − weight) of z†Ω_R outside span{Ω_R, σˣ₁Ω_R}.
    pub projection: f64,
    /// max (1 − ray product) against the Bloch oracle.
    pub bloch: f64,
    /// max intertwiner residual over the sampled points.
    pub intertwiner: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub degree: i64,
    pub bloch_degree: i64,
    pub agreement: bool,
    pub max_flux: f64,
    pub y_overlap_min: f64,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantOptions {
    pub z: ZOptions,
    pub degree: DegreeOptions,
    /// Number of grid points checked for the intertwiner residual.
    pub intertwiner_samples: usize,
}

/// Lattice degree of the projected equator map over the configured S² grid,
/// compared with the degree of the Bloch oracle on the same grid.
pub fn invariant_degree(
    cfg: &ModelConfig,
    opts: &InvariantOptions,
) -> Result<InvariantReport, DimerError> {
    cfg.validate()?;
    let grid = cfg.sphere_grid()?;
    let samples = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid.m, idx % grid.m);
            let r = grid.point(i, j);
            let w = ParamPoint::equator(r)?;
            let p = projected_equator_map(&w, cfg, &opts.z)?;
            let agree = projective::ray_product(&p.ray, &bloch_ground_map(r));
            Ok((p, agree))
        })
        .collect::<Result<Vec<_>, DimerError>>()?;

    let mut y_overlap_min: f64 = 1.0;
    let mut projection: f64 = 0.0;
    let mut bloch: f64 = 0.0;
    let mut rays = Vec::with_capacity(samples.len());
    for (p, agree) in samples {
        y_overlap_min = y_overlap_min.min(p.y_overlap);
        projection = projection.max(1.0 - p.weight);
        bloch = bloch.max(1.0 - agree);
        rays.push(p.ray);
    }
    let field = SphereField::new(grid, rays)?;
    let report = cech::plaquette_degree(&field, &opts.degree)?;
    let bloch_field =
        SphereField::try_from_fn(grid, |_, _, r| Ok::<_, CechError>(bloch_ground_map(r)))?;
    let bloch_report = cech::plaquette_degree(&bloch_field, &opts.degree)?;

    let mut intertwiner: f64 = 0.0;
    let ops: Vec<_> = default_intertwiner_ops()
        .into_iter()
        .filter(|(_, s)| *s < cfg.sites())
        .collect();
    let count = opts.intertwiner_samples.min(grid.len());
    for s in 0..count {
        let idx = (s * grid.len()) / count.max(1) + grid.m / 3;
        let idx = idx % grid.len();
        let w = ParamPoint::equator(grid.point(idx / grid.m, idx % grid.m))?;
        intertwiner = intertwiner.max(intertwiner_residual(&w, cfg, &opts.z, &ops)?);
    }

    let expected = bloch_report.degree * opts.z.variant.degree_factor();
    Ok(InvariantReport {
        degree: report.degree,
        bloch_degree: bloch_report.degree,
        agreement: report.degree == expected,
        max_flux: report.max_flux,
        y_overlap_min,
        residuals: Residuals {
            projection,
            bloch,
            intertwiner,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductDistance {
    pub bound: f64,
    pub witness: f64,
    pub exact: f64,
}

fn bloch_density(r: [f64; 3]) -> ComplexMatrix {
    (&ComplexMatrix::identity(2) + &pauli::dot(r)).scale_real(0.5)
}

/// Distance between the N-site product states of Bloch vectors r and s:
/// the lower bound |1 − (r·s)^N|, the witness value of ⊗(r·σ), and the
/// exact trace-norm distance.
pub fn product_distance_bound(r: [f64; 3], s: [f64; 3], n_sites: usize) -> ProductDistance {
    let n = n_sites.max(1);
    let dot: f64 = r.iter().zip(&s).map(|(a, b)| a * b).sum();
    let bound = (1.0 - dot.powi(n as i32)).abs();
    let rho_r = linalg::kron_all(&vec![bloch_density(r); n]);
    let rho_s = linalg::kron_all(&vec![bloch_density(s); n]);
    let h = linalg::kron_all(&vec![pauli::dot(r); n]);
    let diff = &rho_r - &rho_s;
    let witness = (&diff * &h).trace().norm();
    let exact = linalg::trace_norm(&diff);
    ProductDistance {
        bound,
        witness,
        exact,
    }
}
