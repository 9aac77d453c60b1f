//! Contraction of based loops in the state space of M_n(ℂ).
//!
//! A loop t ↦ ω_t starting and ending at ω₀ⁿ (the vector state of e₀) is
//! deformed through rows H(t, s) = A_{t,s}·ω_t with A_{t,0} = 𝟙. Level k
//! works inside the compression P^n_k M_n P^n_k ≅ M_{n−k}: a unitary stage
//! moves weight off the last block coordinate without touching the Gelfand
//! ideal, then a projection stage removes that coordinate. After level n−2
//! every state is ω₀ⁿ.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, LinalgError, ONE, ZERO};
use crate::projective::{self, CayleyDirection, ProjectiveError};
use crate::sample;
use crate::states::{self, DensityState, StateError};

/// A sample is near-pure when its largest eigenvalue exceeds this.
pub const NEAR_PURE: f64 = 7.0 / 8.0;
/// Largest admissible trace-norm step of an input loop.
pub const MAX_INPUT_STEP: f64 = 0.02;
/// Output modulus as a multiple of the input step.
pub const MODULUS_FACTOR: f64 = 5.0;
pub const MIN_EIGEN_OVERLAP: f64 = 0.1;
pub const DISK_MAX_STEP: f64 = 0.1;
pub const INTERPOLATION_GRID: usize = 101;
pub const INTERPOLATION_TOL: f64 = 1e-10;
const BASEPOINT_TOL: f64 = 1e-10;
const ENDPOINT_TOL: f64 = 1e-8;
const STRUCTURE_TOL: f64 = 1e-9;
const PURE_ANCHOR: f64 = 1.0 - 1e-10;
/// Chart hysteresis of the disk lift: enter the boundary chart above
/// `CHART_ENTER`, return to the interior below `CHART_EXIT`.
const CHART_ENTER: f64 = 0.5;
const CHART_EXIT: f64 = 0.25;
const MAX_BISECTIONS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomotopyError {
    #[error("k = {k} out of range for n = {n}")]
    Range { n: usize, k: usize },
    #[error("loop has no samples")]
    Empty,
    #[error("sample {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("loop is not based at omega_0: sample {index} differs by {distance:.3e}")]
    NotBased { index: usize, distance: f64 },
    #[error("trace-norm step {step:.4} at sample {index} exceeds {max}")]
    StepTooLarge { index: usize, step: f64, max: f64 },
    #[error("top eigenvector continuation is ambiguous at sample {index} (overlap {overlap:.3e})")]
    EigenvectorAmbiguity { index: usize, overlap: f64 },
    #[error("disk path step {step:.4} at index {index} is too coarse")]
    DiskStepTooCoarse { index: usize, step: f64 },
    #[error("disk path leaves the closed unit disk at index {index} (|gamma| = {modulus})")]
    OutsideDisk { index: usize, modulus: f64 },
    #[error("operator is not a {kind:?} (defect {defect:.3e})")]
    NotOfKind {
        kind: InterpolationKind,
        defect: f64,
    },
    #[error(
        "linear interpolation meets the Gelfand ideal at sample {index}: min {min:.3e} at s = {s}"
    )]
    InterpolationUnsafe { index: usize, min: f64, s: f64 },
    #[error("s-refinement did not reach step {target:.3e} (stuck at {step:.3e})")]
    Refinement { target: f64, step: f64 },
    #[error("pure anchor at sample {index} is not reachable continuously")]
    Discontinuous { index: usize },
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("sample {index} is not a density matrix: {source}")]
    InvalidSample { index: usize, source: StateError },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Projective(#[from] ProjectiveError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// P^n_k = diag(1,…,1,0,…,0) with k trailing zeros.
pub fn projection_matrix(n: usize, k: usize) -> Result<ComplexMatrix, HomotopyError> {
    if n == 0 || k >= n {
        return Err(HomotopyError::Range { n, k });
    }
    let diag: Vec<f64> = (0..n).map(|i| if i < n - k { 1.0 } else { 0.0 }).collect();
    Ok(ComplexMatrix::from_real_diag(&diag))
}

/// A closed path of states based at ω₀ⁿ; the first and last samples are
/// both the basepoint.
#[derive(Debug, Clone)]
pub struct StateLoop {
    n: usize,
    samples: Vec<DensityState>,
}

impl StateLoop {
    pub fn new(n: usize, samples: Vec<DensityState>) -> Result<Self, HomotopyError> {
        if samples.len() < 2 {
            return Err(HomotopyError::Empty);
        }
        for (index, s) in samples.iter().enumerate() {
            if s.dim() != n {
                return Err(HomotopyError::Dimension {
                    index,
                    expected: n,
                    found: s.dim(),
                });
            }
        }
        let base = DensityState::basepoint(n);
        for index in [0, samples.len() - 1] {
            let distance = states::state_distance(&samples[index], &base)?;
            if distance > BASEPOINT_TOL {
                return Err(HomotopyError::NotBased { index, distance });
            }
        }
        Ok(Self { n, samples })
    }

    /// Loop of vector states; vectors need not be normalized.
    pub fn from_vectors(n: usize, vectors: &[Vec<Complex64>]) -> Result<Self, HomotopyError> {
        let samples = vectors
            .iter()
            .map(|v| states::state_from_vector(v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(n, samples)
    }

    pub fn constant(n: usize, len: usize) -> Self {
        Self {
            n,
            samples: vec![DensityState::basepoint(n); len.max(2)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[DensityState] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest trace-norm distance between consecutive samples.
    pub fn max_step(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| states::state_distance(&w[0], &w[1]).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    fn check_steps(&self, max: f64) -> Result<(), HomotopyError> {
        for (index, w) in self.samples.windows(2).enumerate() {
            let step = states::state_distance(&w[0], &w[1])?;
            if step > max {
                return Err(HomotopyError::StepTooLarge {
                    index: index + 1,
                    step,
                    max,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = LoopDoc {
            n: self.n,
            samples: self.samples.iter().map(|s| s.rho().clone()).collect(),
        };
        serde_json::to_string(&doc).expect("loop serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HomotopyError> {
        let doc: LoopDoc =
            serde_json::from_str(text).map_err(|e| HomotopyError::Parse(e.to_string()))?;
        let samples = doc
            .samples
            .into_iter()
            .enumerate()
            .map(|(index, m)| {
                DensityState::new(m)
                    .map_err(|source| HomotopyError::InvalidSample { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(doc.n, samples)
    }
}

#[derive(Serialize, Deserialize)]
struct LoopDoc {
    n: usize,
    samples: Vec<ComplexMatrix>,
}

/// Phases λ_t along a sampled path γ in the closed unit disk with
/// λ_tγ_t = 1 whenever |γ_t| = 1.
///
/// Inside radius ½ the phase is held. Crossing outward through ½ at w₀ with
/// current phase μ₀ switches to the chart
/// μ(w) = μ₀·(w₀/|w₀|)·(|w|/w)·exp(−iθ(|w| − |w₀|)/(1 − |w₀|)), e^{iθ} = μ₀w₀/|w₀|,
/// which equals μ₀ at w₀ and 1/w on the circle. The chart is kept until
/// |γ| drops below ¼.
pub fn disk_phase_lift(gamma: &[Complex64]) -> Result<Vec<Complex64>, HomotopyError> {
    for (index, g) in gamma.iter().enumerate() {
        let modulus = g.norm();
        if !modulus.is_finite() || modulus > 1.0 + 1e-9 {
            return Err(HomotopyError::OutsideDisk { index, modulus });
        }
        if index > 0 {
            let step = (g - gamma[index - 1]).norm();
            if step >= DISK_MAX_STEP {
                return Err(HomotopyError::DiskStepTooCoarse { index, step });
            }
        }
    }
    struct Chart {
        prefactor: Complex64,
        r0: f64,
        theta: f64,
    }
    impl Chart {
        fn new(mu0: Complex64, w0: Complex64) -> Self {
            let r0 = w0.norm();
            let unit = w0 / r0;
            let theta = if r0 >= 1.0 - 1e-9 {
                0.0
            } else {
                (mu0 * unit).arg()
            };
            Self {
                prefactor: mu0 * unit,
                r0,
                theta,
            }
        }

        fn eval(&self, w: Complex64) -> Complex64 {
            let r = w.norm().min(1.0);
            let ramp = if self.theta == 0.0 {
                0.0
            } else {
                (r - self.r0) / (1.0 - self.r0)
            };
            self.prefactor * (w / w.norm()).conj() * Complex64::from_polar(1.0, -self.theta * ramp)
        }
    }

    let mut out = Vec::with_capacity(gamma.len());
    let Some(&first) = gamma.first() else {
        return Ok(out);
    };
    let mut lambda = if first.norm() > 0.0 {
        first.conj() / first.norm()
    } else {
        ONE
    };
    let mut chart: Option<Chart> = None;
    for &g in gamma {
        let r = g.norm();
        match &chart {
            Some(_) if r < CHART_EXIT => chart = None,
            None if r > CHART_ENTER => chart = Some(Chart::new(lambda, g)),
            _ => {}
        }
        if let Some(c) = &chart {
            lambda = c.eval(g);
        }
        out.push(lambda);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationKind {
    Unitary,
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationCheck {
    pub safe: bool,
    /// min over the s-grid of ω(A_s†A_s), A_s = sA + (1−s)𝟙.
    pub min_value: f64,
    pub argmin: f64,
}

/// Samples s ↦ ω((sA + (1−s)𝟙)†(sA + (1−s)𝟙)) on a 101-point grid.
pub fn interpolation_safe(
    a: &ComplexMatrix,
    omega: &DensityState,
    kind: InterpolationKind,
) -> Result<InterpolationCheck, HomotopyError> {
    let defect = match kind {
        InterpolationKind::Unitary => a.unitarity_defect(),
        InterpolationKind::Projection => (a * a).max_abs_diff(a).max(a.hermitian_deviation()),
    };
    if defect > 1e-8 {
        return Err(HomotopyError::NotOfKind { kind, defect });
    }
    // ω(A_s†A_s) = s²ω(A†A) + (1−s)² + 2s(1−s)Re ω(A).
    let aa = states::normalizer(a, omega);
    let wa = omega.expectation(a).re;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..INTERPOLATION_GRID {
        let s = i as f64 / (INTERPOLATION_GRID - 1) as f64;
        let v = s * s * aa + (1.0 - s) * (1.0 - s) + 2.0 * s * (1.0 - s) * wa;
        if v < best.0 {
            best = (v, s);
        }
    }
    Ok(InterpolationCheck {
        safe: best.0 > INTERPOLATION_TOL,
        min_value: best.0,
        argmin: best.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Unitary,
    Projection,
}

/// Rows `base_row + i` of a sheet are A_{t,s_i}·(row `base_row`)_t with
/// A_{t,s} = s·operators[t] + (1−s)𝟙.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub level: usize,
    pub kind: StageKind,
    pub base_row: usize,
    pub s_values: Vec<f64>,
    pub operators: Vec<ComplexMatrix>,
}

/// Grid of density matrices: `rows[s][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopySheet {
    pub n: usize,
    pub rows: Vec<Vec<ComplexMatrix>>,
    #[serde(default)]
    pub stages: Vec<StageMeta>,
}

impl HomotopySheet {
    fn from_loop(l: &StateLoop) -> Self {
        Self {
            n: l.n,
            rows: vec![l.samples.iter().map(|s| s.rho().clone()).collect()],
            stages: Vec::new(),
        }
    }

    pub fn final_row(&self) -> &[ComplexMatrix] {
        self.rows.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sheet serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HomotopyError> {
        serde_json::from_str(text).map_err(|e| HomotopyError::Parse(e.to_string()))
    }
}

fn interpolate(op: &ComplexMatrix, s: f64) -> ComplexMatrix {
    &op.scale_real(s) + &ComplexMatrix::identity(op.rows()).scale_real(1.0 - s)
}

fn stage_row(
    base: &[DensityState],
    ops: &[ComplexMatrix],
    s: f64,
) -> Result<Vec<DensityState>, HomotopyError> {
    base.par_iter()
        .zip(ops)
        .map(|(w, a)| Ok(states::act(&interpolate(a, s), w)?))
        .collect()
}

fn row_distance(a: &[DensityState], b: &[DensityState]) -> Result<f64, HomotopyError> {
    let steps = a
        .par_iter()
        .zip(b)
        .map(|(x, y)| states::state_distance(x, y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(steps.into_iter().fold(0.0, f64::max))
}

/// Builds the rows of one stage by bisecting s ∈ [0, 1] until neighbouring
/// rows are within `target`. Returns (s values, rows) with the s = 0 row
/// omitted.
fn run_stage(
    base: &[DensityState],
    ops: &[ComplexMatrix],
    target: f64,
) -> Result<(Vec<f64>, Vec<Vec<DensityState>>), HomotopyError> {
    let mut done: Vec<(f64, Vec<DensityState>)> = Vec::new();
    let mut pending = vec![(1.0, stage_row(base, ops, 1.0)?)];
    let mut left = (0.0, base.to_vec());
    let mut depth = 0;
    while let Some((s, row)) = pending.pop() {
        let step = row_distance(&left.1, &row)?;
        if step > target && depth < MAX_BISECTIONS * 64 && s - left.0 > 1e-9 {
            let mid = 0.5 * (left.0 + s);
            let mid_row = stage_row(base, ops, mid)?;
            pending.push((s, row));
            pending.push((mid, mid_row));
            depth += 1;
            continue;
        }
        if step > target {
            return Err(HomotopyError::Refinement { target, step });
        }
        done.push((s, row.clone()));
        left = (s, row);
    }
    Ok(done.into_iter().unzip())
}

#[derive(Clone, Copy, PartialEq)]
enum Anchor {
    Pure,
    Mixed { entropy: f64 },
}

struct Run {
    anchor: Anchor,
    u0: ComplexMatrix,
    /// Cayley image of the transport v_a ↦ y for mixed anchors.
    cayley: Option<ComplexMatrix>,
    q: ComplexMatrix,
    v_prev: Vec<Complex64>,
}

/// Unitaries U_t on ℂ^m with (U_t·ω_t)(P^m_1) > 0 and U_0 = 𝟙, U_T e₀ ∝ e₀.
///
/// Near-pure runs transport the top eigenvector cumulatively,
/// Q_t = Q_{t−1}·R(v_t → v_{t−1}), so that Q_t v_t = v_a. A run anchored at a
/// pure sample uses U_t = u₀Q_t. A run anchored at a mixed sample blends
/// toward the transport X: v_a ↦ u₀†e₀ through its Cayley image K,
/// U_t = u₀·C⁻¹((1 − x_t)K)·Q_t with x_t = min(S_t/S_a, 1), so purer samples
/// are sent closer to e₀. Samples that are not near-pure hold U.
fn transport_unitaries(block: &[DensityState]) -> Result<Vec<ComplexMatrix>, HomotopyError> {
    let m = block.first().map(DensityState::dim).unwrap_or(1);
    let e0 = linalg::basis_vector(m, 0);
    let mut out = Vec::with_capacity(block.len());
    let mut u_prev = ComplexMatrix::identity(m);
    let mut run: Option<Run> = None;
    for (index, rho) in block.iter().enumerate() {
        let eig = linalg::eig_hermitian(rho.rho())?;
        let p = eig.values[m - 1];
        if p <= NEAR_PURE {
            run = None;
            out.push(u_prev.clone());
            continue;
        }
        let mut v = eig.vector(m - 1);
        let u = match run.as_mut() {
            Some(r) => {
                let ov = linalg::inner(&r.v_prev, &v);
                if ov.norm() < MIN_EIGEN_OVERLAP || ov == ZERO {
                    return Err(HomotopyError::EigenvectorAmbiguity {
                        index,
                        overlap: ov.norm(),
                    });
                }
                v = linalg::scale_vec(&v, ov.conj() / ov.norm());
                r.q = &r.q * &projective::rotator(&v, &r.v_prev)?;
                r.v_prev = v.clone();
                match (r.anchor, &r.cayley) {
                    (Anchor::Mixed { entropy }, Some(k)) => {
                        let x = (states::entropy(rho)? / entropy).min(1.0);
                        let c = projective::cayley_chart(
                            &k.scale_real(1.0 - x),
                            CayleyDirection::Inverse,
                        )?;
                        &(&r.u0 * &c) * &r.q
                    }
                    _ => &r.u0 * &r.q,
                }
            }
            None => {
                let anchor = if index == 0 {
                    let ov = linalg::inner(&e0, &v);
                    if ov.norm() > 0.0 {
                        v = linalg::scale_vec(&v, ov.conj() / ov.norm());
                    }
                    Anchor::Pure
                } else if p >= PURE_ANCHOR {
                    return Err(HomotopyError::Discontinuous { index });
                } else {
                    Anchor::Mixed {
                        entropy: states::entropy(rho)?,
                    }
                };
                let cayley = match anchor {
                    Anchor::Pure => None,
                    Anchor::Mixed { .. } => {
                        let mut y = u_prev.adjoint().apply(&e0);
                        let ov = linalg::inner(&v, &y);
                        if ov.norm() > 0.0 {
                            y = linalg::scale_vec(&y, ov.conj() / ov.norm());
                        }
                        let x = projective::elementary_transport(&v, &y)?;
                        Some(projective::cayley_chart(&x, CayleyDirection::Forward)?)
                    }
                };
                run = Some(Run {
                    anchor,
                    u0: u_prev.clone(),
                    cayley,
                    q: ComplexMatrix::identity(m),
                    v_prev: v,
                });
                u_prev.clone()
            }
        };
        u_prev = u.clone();
        out.push(u);
    }
    Ok(out)
}

/// Block operators λ_tU_t for the unitary stage on states of M_m.
fn unitary_stage_ops(block: &[DensityState]) -> Result<Vec<ComplexMatrix>, HomotopyError> {
    let us = transport_unitaries(block)?;
    let gamma: Vec<Complex64> = block
        .iter()
        .zip(&us)
        .map(|(w, u)| w.expectation(u))
        .collect();
    let lambda = disk_phase_lift(&gamma)?;
    let ops: Vec<ComplexMatrix> = us.iter().zip(&lambda).map(|(u, l)| u.scale(*l)).collect();
    for (index, (a, w)) in ops.iter().zip(block).enumerate() {
        let check = interpolation_safe(a, w, InterpolationKind::Unitary)?;
        if !check.safe {
            return Err(HomotopyError::InterpolationUnsafe {
                index,
                min: check.min_value,
                s: check.argmin,
            });
        }
    }
    Ok(ops)
}

/// (𝟙 − P^n_k) + B placed in the top-left block.
fn push_forward(block_op: &ComplexMatrix, n: usize, k: usize) -> ComplexMatrix {
    let m = n - k;
    let tail = ComplexMatrix::from_real_diag(
        &(0..n)
            .map(|i| if i < m { 0.0 } else { 1.0 })
            .collect::<Vec<_>>(),
    );
    &tail + &ComplexMatrix::embed_top_left(block_op, n)
}

fn block_states(row: &[DensityState], m: usize) -> Result<Vec<DensityState>, HomotopyError> {
    row.iter()
        .map(|s| {
            let b = s.rho().top_left(m);
            let tr = b.trace().re;
            Ok(DensityState::with_tolerance(b.scale_real(1.0 / tr), 1e-8)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractOptions {
    pub max_input_step: f64,
    pub modulus_factor: f64,
}

impl Default for ContractOptions {
    fn default() -> Self {
        Self {
            max_input_step: MAX_INPUT_STEP,
            modulus_factor: MODULUS_FACTOR,
        }
    }
}

impl ContractOptions {
    pub fn modulus(&self, l: &StateLoop) -> f64 {
        self.modulus_factor * l.max_step()
    }
}

fn push_stage(
    sheet: &mut HomotopySheet,
    current: &mut Vec<DensityState>,
    level: usize,
    kind: StageKind,
    operators: Vec<ComplexMatrix>,
    target: f64,
) -> Result<(), HomotopyError> {
    let (mut s_values, rows) = run_stage(current, &operators, target)?;
    s_values.insert(0, 0.0);
    let base_row = sheet.rows.len() - 1;
    for r in &rows {
        sheet.rows.push(r.iter().map(|s| s.rho().clone()).collect());
    }
    if let Some(last) = rows.into_iter().last() {
        *current = last;
    }
    sheet.stages.push(StageMeta {
        level,
        kind,
        base_row,
        s_values,
        operators,
    });
    Ok(())
}

/// Appends level k (unitary stage, then projection stage) to `sheet`.
fn rectify_level(
    sheet: &mut HomotopySheet,
    current: &mut Vec<DensityState>,
    k: usize,
    target: f64,
) -> Result<(), HomotopyError> {
    let n = sheet.n;
    let m = n - k;
    let next = projection_matrix(n, k + 1)?;
    if current
        .iter()
        .all(|s| s.expectation(&next).re >= 1.0 - 1e-12)
    {
        return Ok(());
    }
    let block = block_states(current, m)?;
    let ops = unitary_stage_ops(&block)?;
    let full: Vec<ComplexMatrix> = ops.iter().map(|b| push_forward(b, n, k)).collect();
    push_stage(sheet, current, k, StageKind::Unitary, full, target)?;

    let p = push_forward(&projection_matrix(m, 1)?, n, k);
    let block = block_states(current, m)?;
    let pm = projection_matrix(m, 1)?;
    for (index, w) in block.iter().enumerate() {
        let check = interpolation_safe(&pm, w, InterpolationKind::Projection)?;
        if !check.safe {
            return Err(HomotopyError::InterpolationUnsafe {
                index,
                min: check.min_value,
                s: check.argmin,
            });
        }
    }
    push_stage(
        sheet,
        current,
        k,
        StageKind::Projection,
        vec![p; current.len()],
        target,
    )
}

/// First level only: deforms the loop into one with ψ_t(P^n_1) = 1.
pub fn rectify_to_projection(
    l: &StateLoop,
    opts: &ContractOptions,
) -> Result<(HomotopySheet, StateLoop), HomotopyError> {
    l.check_steps(opts.max_input_step)?;
    let mut sheet = HomotopySheet::from_loop(l);
    let mut current = l.samples.clone();
    if l.n > 1 {
        rectify_level(&mut sheet, &mut current, 0, opts.modulus(l))?;
    }
    let out = StateLoop::new(l.n, current)?;
    Ok((sheet, out))
}

/// Full contraction: levels k = 0..n−2, ending at the constant loop ω₀ⁿ.
pub fn contract_loop(
    l: &StateLoop,
    opts: &ContractOptions,
) -> Result<HomotopySheet, HomotopyError> {
    l.check_steps(opts.max_input_step)?;
    let target = opts.modulus(l);
    let mut sheet = HomotopySheet::from_loop(l);
    let mut current = l.samples.clone();
    for k in 0..l.n.saturating_sub(1) {
        rectify_level(&mut sheet, &mut current, k, target)?;
    }
    Ok(sheet)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    InvalidState,
    RowZero,
    EndpointColumn,
    FinalRow,
    Step,
    Structure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} at (s={}, t={}): {:.3e}",
            self.kind, self.row, self.col, self.value
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub rows: usize,
    pub cols: usize,
    pub max_step: f64,
    pub violations: Vec<Violation>,
}

fn cell_violations(
    sheet: &HomotopySheet,
    input: &StateLoop,
    modulus: f64,
    r: usize,
    parsed: &[Vec<Option<DensityState>>],
) -> (Vec<Violation>, f64) {
    let mut v = Vec::new();
    let mut max_step: f64 = 0.0;
    let base = DensityState::basepoint(sheet.n);
    let row = &parsed[r];
    let cols = row.len();
    let last_row = r + 1 == parsed.len();
    for (c, cell) in row.iter().enumerate() {
        let Some(cell) = cell else {
            v.push(Violation {
                kind: ViolationKind::InvalidState,
                row: r,
                col: c,
                value: f64::NAN,
            });
            continue;
        };
        let dist = |a: &DensityState, b: &DensityState| {
            states::state_distance(a, b).unwrap_or(f64::INFINITY)
        };
        if r == 0 {
            let d = input
                .samples
                .get(c)
                .map_or(f64::INFINITY, |s| dist(cell, s));
            if d > 1e-12 {
                v.push(Violation {
                    kind: ViolationKind::RowZero,
                    row: r,
                    col: c,
                    value: d,
                });
            }
        }
        if c == 0 || c + 1 == cols {
            let d = dist(cell, &base);
            if d > ENDPOINT_TOL {
                v.push(Violation {
                    kind: ViolationKind::EndpointColumn,
                    row: r,
                    col: c,
                    value: d,
                });
            }
        }
        if last_row {
            let d = dist(cell, &base);
            if d > ENDPOINT_TOL {
                v.push(Violation {
                    kind: ViolationKind::FinalRow,
                    row: r,
                    col: c,
                    value: d,
                });
            }
        }
        let mut neighbours = Vec::new();
        if c + 1 < cols {
            neighbours.push(&row[c + 1]);
        }
        if let Some(next) = parsed.get(r + 1) {
            neighbours.push(&next[c]);
        }
        for other in neighbours.into_iter().flatten() {
            let d = dist(cell, other);
            max_step = max_step.max(d);
            if d > modulus {
                v.push(Violation {
                    kind: ViolationKind::Step,
                    row: r,
                    col: c,
                    value: d,
                });
            }
        }
    }
    (v, max_step)
}

fn structure_violations(
    sheet: &HomotopySheet,
    parsed: &[Vec<Option<DensityState>>],
) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut covered = 1;
    for stage in &sheet.stages {
        let bad = |row: usize, col: usize| Violation {
            kind: ViolationKind::Structure,
            row,
            col,
            value: f64::INFINITY,
        };
        if stage.base_row + 1 != covered || stage.s_values.first() != Some(&0.0) {
            v.push(bad(stage.base_row, 0));
        }
        let Some(base) = parsed.get(stage.base_row) else {
            v.push(bad(stage.base_row, 0));
            continue;
        };
        let found: Vec<Violation> = stage
            .s_values
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, &s)| {
                let r = stage.base_row + i;
                let mut out = Vec::new();
                let Some(row) = parsed.get(r) else {
                    out.push(bad(r, 0));
                    return out;
                };
                for (c, (cell, (b, op))) in row
                    .iter()
                    .zip(base.iter().zip(&stage.operators))
                    .enumerate()
                {
                    let (Some(cell), Some(b)) = (cell, b) else {
                        continue;
                    };
                    let d = states::act(&interpolate(op, s), b)
                        .map(|e| e.rho().max_abs_diff(cell.rho()))
                        .unwrap_or(f64::INFINITY);
                    if d > STRUCTURE_TOL {
                        out.push(Violation {
                            kind: ViolationKind::Structure,
                            row: r,
                            col: c,
                            value: d,
                        });
                    }
                }
                out
            })
            .collect();
        v.extend(found);
        covered = stage.base_row + stage.s_values.len();
    }
    if covered != sheet.rows.len() && !sheet.stages.is_empty() {
        v.push(Violation {
            kind: ViolationKind::Structure,
            row: covered,
            col: 0,
            value: f64::INFINITY,
        });
    }
    v
}

/// Checks every postcondition of a contraction sheet and lists violations.
pub fn verify_homotopy(sheet: &HomotopySheet, input: &StateLoop, modulus: f64) -> VerifyReport {
    let parsed: Vec<Vec<Option<DensityState>>> = sheet
        .rows
        .par_iter()
        .map(|row| {
            row.iter()
                .map(|m| {
                    if m.rows() == sheet.n {
                        DensityState::new(m.clone()).ok()
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    let cols = input.len();
    let mut violations = Vec::new();
    for (r, row) in sheet.rows.iter().enumerate() {
        if row.len() != cols {
            violations.push(Violation {
                kind: ViolationKind::InvalidState,
                row: r,
                col: row.len(),
                value: f64::NAN,
            });
        }
    }
    let per_row: Vec<(Vec<Violation>, f64)> = (0..parsed.len())
        .into_par_iter()
        .map(|r| cell_violations(sheet, input, modulus, r, &parsed))
        .collect();
    let mut max_step: f64 = 0.0;
    for (v, s) in per_row {
        violations.extend(v);
        max_step = max_step.max(s);
    }
    violations.extend(structure_violations(sheet, &parsed));
    VerifyReport {
        pass: violations.is_empty() && !sheet.rows.is_empty(),
        rows: sheet.rows.len(),
        cols,
        max_step,
        violations,
    }
}

/// Loops shipped with the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundledLoop {
    /// Pure states cos(πt)e₀ + sin(πt)e₁ on 401 samples.
    N2,
    /// e₀ mixed halfway into e₂, a rank-2 plateau whose e₀ component
    /// rotates through e₁ to −e₀, then unmixed.
    N3,
}

pub fn bundled_loop(which: BundledLoop) -> StateLoop {
    match which {
        BundledLoop::N2 => {
            let t_steps = 400;
            let vs: Vec<Vec<Complex64>> = (0..=t_steps)
                .map(|j| {
                    let a = PI * j as f64 / t_steps as f64;
                    vec![Complex64::new(a.cos(), 0.0), Complex64::new(a.sin(), 0.0)]
                })
                .collect();
            StateLoop::from_vectors(2, &vs).expect("bundled loop is based")
        }
        BundledLoop::N3 => {
            let e = |k| linalg::basis_vector(3, k);
            let mix = |v: &[Complex64], weight: f64| {
                let a = ComplexMatrix::outer(v, v).scale_real(1.0 - weight);
                let b = ComplexMatrix::outer(&e(2), &e(2)).scale_real(weight);
                DensityState::new(&a + &b).expect("convex combination of states")
            };
            let ramp = 60;
            let plateau = 400;
            let mut samples = Vec::new();
            for j in 0..ramp {
                samples.push(mix(&e(0), 0.5 * j as f64 / ramp as f64));
            }
            for j in 0..plateau {
                let tau = PI * j as f64 / plateau as f64;
                let v = vec![
                    Complex64::new(tau.cos(), 0.0),
                    Complex64::new(tau.sin(), 0.0),
                    ZERO,
                ];
                samples.push(mix(&v, 0.5));
            }
            for j in (0..=ramp).rev() {
                samples.push(mix(&e(0), 0.5 * j as f64 / ramp as f64));
            }
            // The plateau ends at −e₀, the same state as e₀.
            StateLoop::new(3, samples).expect("bundled loop is based")
        }
    }
}

/// A smooth based loop in 𝒮(M_n): a vector loop e₀ + Σ aₖ sin(πkt)cₖ mixed
/// with a random full-rank state by weight c·sin²(πt), sampled finely
/// enough that every step is at most `max_step`.
pub fn random_smooth_loop<R: Rng + ?Sized>(rng: &mut R, n: usize, max_step: f64) -> StateLoop {
    let modes: Vec<Vec<Complex64>> = (0..3).map(|_| sample::unit_vector(rng, n)).collect();
    let amps: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let sigma = sample::density_matrix(rng, n);
    let mix_weight = rng.gen_range(0.0..0.6);
    let e0 = linalg::basis_vector(n, 0);
    let at = |t: f64| -> DensityState {
        let mut v = e0.clone();
        for (k, (c, a)) in modes.iter().zip(&amps).enumerate() {
            let f = a * (PI * (k + 1) as f64 * t).sin();
            v = linalg::add_vec(&v, &linalg::scale_vec(c, Complex64::new(f, 0.0)));
        }
        let pure = states::state_from_vector(&v).expect("nonzero at generic t");
        let w = mix_weight * (PI * t).sin().powi(2);
        let rho = &pure.rho().scale_real(1.0 - w) + &sigma.scale_real(w);
        let rho = (&rho + &rho.adjoint()).scale_real(0.5);
        DensityState::with_tolerance(rho, 1e-9).expect("convex combination")
    };
    let mut len = 64;
    loop {
        let mut samples: Vec<DensityState> = (0..=len).map(|j| at(j as f64 / len as f64)).collect();
        samples[0] = DensityState::basepoint(n);
        samples[len] = DensityState::basepoint(n);
        let l = StateLoop::new(n, samples).expect("based by construction");
        if l.max_step() <= max_step || len > 1 << 16 {
            return l;
        }
        len *= 2;
    }
}
