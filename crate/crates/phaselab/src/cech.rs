//! Čech data on finitely sampled covers: 1-cochains valued in U(1) or in
//! unitaries taken modulo phase, cocycle and coboundary tests, refinement,
//! the δ₁ scalar extraction, winding numbers and the lattice degree of a
//! ray field on S².

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, ComplexMatrix, ONE};
use crate::projective::Ray;

pub const COCYCLE_TOL: f64 = 1e-8;
pub const SCALAR_TOL: f64 = 1e-8;
/// Coordinates closer than this identify the same sample point.
pub const POINT_TOL: f64 = 1e-12;
const UNIT_TOL: f64 = 1e-10;

pub type Point = Vec<f64>;
pub type Pair = (usize, usize);
pub type Triple = (usize, usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CechError {
    #[error("chart {chart} out of range ({charts} charts)")]
    ChartOutOfRange { chart: usize, charts: usize },
    #[error("no samples for overlap {pair:?}")]
    MissingSamples { pair: Pair },
    #[error("point {point:?} of overlap {pair:?} has no cochain value")]
    MissingPoint { pair: Pair, point: Point },
    #[error("cochain has {found} values on overlap {pair:?}, cover has {expected} points")]
    LengthMismatch {
        pair: Pair,
        expected: usize,
        found: usize,
    },
    #[error("value on {pair:?} at index {index} is not unit/unitary (defect {defect:.3e})")]
    NotUnitary {
        pair: Pair,
        index: usize,
        defect: f64,
    },
    #[error("g_ji is not the inverse of g_ij on {pair:?} at index {index} (defect {defect:.3e})")]
    NotInverse {
        pair: Pair,
        index: usize,
        defect: f64,
    },
    #[error("triple point {point:?} of {triple:?} is missing from a pairwise overlap")]
    TripleNotInOverlaps { triple: Triple, point: Point },
    #[error("triple product on {triple:?} at {point:?} is not a scalar (defect {defect:.3e})")]
    NotScalar {
        triple: Triple,
        point: Point,
        defect: f64,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("phase loop is too coarsely sampled: step {step:.4} at index {index}")]
    CoarseSampling { index: usize, step: f64 },
    #[error("phase sample {index} has modulus {modulus:.3e}, expected 1")]
    NotUnitPhase { index: usize, modulus: f64 },
    #[error("vanishing link overlap {overlap:.3e} between grid points {a:?} and {b:?}")]
    VanishingOverlap {
        a: (usize, usize),
        b: (usize, usize),
        overlap: f64,
    },
    #[error(
        "plaquette {plaquette} has flux {flux:.4} beyond the limit {limit:.4}; grid too coarse"
    )]
    FluxTooLarge {
        plaquette: usize,
        flux: f64,
        limit: f64,
    },
    #[error("total flux / 2pi = {total:.9} is not an integer (defect {defect:.3e})")]
    NonInteger { total: f64, defect: f64 },
    #[error("grid must have K >= 1 and M >= 3, got {k}x{m}")]
    BadGrid { k: usize, m: usize },
    #[error("malformed document: {0}")]
    Parse(String),
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= POINT_TOL)
}

fn find_point(list: &[Point], p: &[f64]) -> Option<usize> {
    list.iter().position(|q| same_point(q, p))
}

/// A finite nerve: charts `0..charts`, sampled pairwise overlaps for every
/// ordered pair (the two orders share one point list) and sampled triple
/// overlaps keyed by sorted triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCover {
    charts: usize,
    overlaps: BTreeMap<Pair, Vec<Point>>,
    triples: BTreeMap<Triple, Vec<Point>>,
}

impl SampledCover {
    /// `overlaps` and `triples` may use any index order; they are normalized
    /// to sorted keys and mirrored to both pair orders.
    pub fn new(
        charts: usize,
        overlaps: impl IntoIterator<Item = (Pair, Vec<Point>)>,
        triples: impl IntoIterator<Item = (Triple, Vec<Point>)>,
    ) -> Result<Self, CechError> {
        let check = |c: usize| {
            if c >= charts {
                Err(CechError::ChartOutOfRange { chart: c, charts })
            } else {
                Ok(())
            }
        };
        let mut pairs = BTreeMap::new();
        for ((i, j), pts) in overlaps {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(CechError::Invalid(format!("self-overlap ({i},{i}) listed")));
            }
            let key = (i.min(j), i.max(j));
            if pairs.insert(key, pts).is_some() {
                return Err(CechError::Invalid(format!("overlap {key:?} listed twice")));
            }
        }
        let mut overlaps = BTreeMap::new();
        for ((i, j), pts) in pairs {
            overlaps.insert((j, i), pts.clone());
            overlaps.insert((i, j), pts);
        }
        let mut tri = BTreeMap::new();
        for ((i, j, k), pts) in triples {
            for c in [i, j, k] {
                check(c)?;
            }
            let mut key = [i, j, k];
            key.sort_unstable();
            if key[0] == key[1] || key[1] == key[2] {
                return Err(CechError::Invalid(format!("degenerate triple {key:?}")));
            }
            let key = (key[0], key[1], key[2]);
            for p in &pts {
                for pair in [(key.0, key.1), (key.1, key.2), (key.0, key.2)] {
                    let ok = overlaps
                        .get(&pair)
                        .is_some_and(|l| find_point(l, p).is_some());
                    if !ok {
                        return Err(CechError::TripleNotInOverlaps {
                            triple: key,
                            point: p.clone(),
                        });
                    }
                }
            }
            tri.insert(key, pts);
        }
        Ok(Self {
            charts,
            overlaps,
            triples: tri,
        })
    }

    pub fn charts(&self) -> usize {
        self.charts
    }

    /// Ordered pairs with sample points, both orders included.
    pub fn pairs(&self) -> impl Iterator<Item = (&Pair, &Vec<Point>)> {
        self.overlaps.iter()
    }

    pub fn overlap(&self, i: usize, j: usize) -> Option<&[Point]> {
        self.overlaps.get(&(i, j)).map(Vec::as_slice)
    }

    pub fn triples(&self) -> impl Iterator<Item = (&Triple, &Vec<Point>)> {
        self.triples.iter()
    }

    pub fn has_triples(&self) -> bool {
        self.triples.values().any(|p| !p.is_empty())
    }

    pub fn to_json(&self) -> String {
        let doc = CoverDoc {
            charts: self.charts,
            overlaps: self
                .overlaps
                .iter()
                .filter(|((i, j), _)| i < j)
                .map(|((i, j), p)| (format!("{i},{j}"), p.clone()))
                .collect(),
            triples: self
                .triples
                .iter()
                .map(|((i, j, k), p)| (format!("{i},{j},{k}"), p.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("cover serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CechError> {
        let doc: CoverDoc =
            serde_json::from_str(text).map_err(|e| CechError::Parse(e.to_string()))?;
        let overlaps = doc
            .overlaps
            .into_iter()
            .map(|(k, v)| parse_pair(&k).map(|p| (p, v)))
            .collect::<Result<Vec<_>, _>>()?;
        let triples = doc
            .triples
            .into_iter()
            .map(|(k, v)| parse_triple(&k).map(|t| (t, v)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(doc.charts, overlaps, triples)
    }
}

#[derive(Serialize, Deserialize)]
struct CoverDoc {
    charts: usize,
    overlaps: BTreeMap<String, Vec<Point>>,
    #[serde(default)]
    triples: BTreeMap<String, Vec<Point>>,
}

fn parse_indices(key: &str, want: usize) -> Result<Vec<usize>, CechError> {
    let parts: Result<Vec<usize>, _> = key.split(',').map(|s| s.trim().parse()).collect();
    match parts {
        Ok(v) if v.len() == want => Ok(v),
        _ => Err(CechError::Parse(format!("bad index key {key:?}"))),
    }
}

fn parse_pair(key: &str) -> Result<Pair, CechError> {
    let v = parse_indices(key, 2)?;
    Ok((v[0], v[1]))
}

fn parse_triple(key: &str) -> Result<Triple, CechError> {
    let v = parse_indices(key, 3)?;
    Ok((v[0], v[1], v[2]))
}

/// Group structure needed by the generic cochain operations.
pub trait CochainValue: Clone + Send + Sync {
    /// Identity element shaped like `self`.
    fn identity_like(&self) -> Self;
    fn inverse(&self) -> Self;
    /// Distance of `self` from the group (unit circle / unitaries).
    fn group_defect(&self) -> f64;
    fn distance(&self, other: &Self) -> f64;
}

impl CochainValue for Complex64 {
    fn identity_like(&self) -> Self {
        ONE
    }
    fn inverse(&self) -> Self {
        self.conj()
    }
    fn group_defect(&self) -> f64 {
        (self.norm() - 1.0).abs()
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

impl CochainValue for ComplexMatrix {
    fn identity_like(&self) -> Self {
        ComplexMatrix::identity(self.rows())
    }
    fn inverse(&self) -> Self {
        self.adjoint()
    }
    fn group_defect(&self) -> f64 {
        self.unitarity_defect()
    }
    fn distance(&self, other: &Self) -> f64 {
        self.max_abs_diff(other)
    }
}

/// Values of a 1-cochain on every ordered overlap, aligned with the cover's
/// point lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain1<T> {
    values: BTreeMap<Pair, Vec<T>>,
}

pub type U1Cochain1 = Cochain1<Complex64>;
/// Unitary lifts of a PU-valued cochain; compared modulo phase.
pub type PUCochain1 = Cochain1<ComplexMatrix>;

impl<T: CochainValue> Cochain1<T> {
    /// Evaluates `f(i, j, point)` for i < j and fills (j, i) with inverses.
    pub fn from_fn(cover: &SampledCover, mut f: impl FnMut(usize, usize, &[f64]) -> T) -> Self {
        let mut values = BTreeMap::new();
        for (&(i, j), pts) in cover.pairs() {
            if i < j {
                let v: Vec<T> = pts.iter().map(|p| f(i, j, p)).collect();
                values.insert((j, i), v.iter().map(T::inverse).collect());
                values.insert((i, j), v);
            }
        }
        Self { values }
    }

    /// Takes values as given for every ordered pair; see [`Cochain1::validate`].
    pub fn from_values(values: BTreeMap<Pair, Vec<T>>) -> Self {
        Self { values }
    }

    pub fn values(&self, i: usize, j: usize) -> Option<&[T]> {
        self.values.get(&(i, j)).map(Vec::as_slice)
    }

    pub fn values_mut(&mut self, i: usize, j: usize) -> Option<&mut Vec<T>> {
        self.values.get_mut(&(i, j))
    }

    /// Checks coverage of the cover, group membership and g_ji = g_ij⁻¹.
    pub fn validate(&self, cover: &SampledCover) -> Result<(), CechError> {
        for (&pair, pts) in cover.pairs() {
            let vals = self.lookup_all(pair, pts.len())?;
            for (index, v) in vals.iter().enumerate() {
                let defect = v.group_defect();
                if defect > UNIT_TOL.max(1e-9) {
                    return Err(CechError::NotUnitary {
                        pair,
                        index,
                        defect,
                    });
                }
            }
            let back = self.lookup_all((pair.1, pair.0), pts.len())?;
            for (index, (a, b)) in vals.iter().zip(back).enumerate() {
                let defect = a.inverse().distance(b);
                if defect > 1e-9 {
                    return Err(CechError::NotInverse {
                        pair,
                        index,
                        defect,
                    });
                }
            }
        }
        Ok(())
    }

    fn lookup_all(&self, pair: Pair, expected: usize) -> Result<&[T], CechError> {
        let vals = self
            .values
            .get(&pair)
            .ok_or(CechError::MissingSamples { pair })?;
        if vals.len() != expected {
            return Err(CechError::LengthMismatch {
                pair,
                expected,
                found: vals.len(),
            });
        }
        Ok(vals)
    }

    fn at(&self, cover: &SampledCover, pair: Pair, p: &[f64]) -> Result<&T, CechError> {
        let pts = cover
            .overlap(pair.0, pair.1)
            .ok_or(CechError::MissingSamples { pair })?;
        let vals = self.lookup_all(pair, pts.len())?;
        let idx = find_point(pts, p).ok_or_else(|| CechError::MissingPoint {
            pair,
            point: p.to_vec(),
        })?;
        Ok(&vals[idx])
    }
}

/// Pullback g^r_{ab} = g_{r(a) r(b)} along a refinement map `r` from the
/// charts of `new_cover` to those of `old_cover`. Pairs with r(a) = r(b)
/// receive the identity.
pub fn refine<T: CochainValue>(
    c: &Cochain1<T>,
    old_cover: &SampledCover,
    r: &[usize],
    new_cover: &SampledCover,
) -> Result<Cochain1<T>, CechError> {
    if r.len() != new_cover.charts() {
        return Err(CechError::Invalid(format!(
            "refinement map has {} entries for {} charts",
            r.len(),
            new_cover.charts()
        )));
    }
    if let Some(&bad) = r.iter().find(|&&x| x >= old_cover.charts()) {
        return Err(CechError::ChartOutOfRange {
            chart: bad,
            charts: old_cover.charts(),
        });
    }
    let sample = c.values.values().flat_map(|v| v.first()).next().cloned();
    let mut values = BTreeMap::new();
    for (&(a, b), pts) in new_cover.pairs() {
        let (ra, rb) = (r[a], r[b]);
        let v = if ra == rb {
            match &sample {
                Some(s) => vec![s.identity_like(); pts.len()],
                None if pts.is_empty() => vec![],
                None => return Err(CechError::MissingSamples { pair: (ra, rb) }),
            }
        } else {
            pts.iter()
                .map(|p| c.at(old_cover, (ra, rb), p).cloned())
                .collect::<Result<Vec<T>, _>>()?
        };
        values.insert((a, b), v);
    }
    Ok(Cochain1 { values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocycleWitness {
    pub triple: Triple,
    pub point: Point,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CocycleReport {
    pub pass: bool,
    /// No triple overlaps, so the condition holds trivially.
    pub vacuous: bool,
    pub max_defect: f64,
    pub checked: usize,
    /// The worst triple point when the check fails.
    pub witness: Option<CocycleWitness>,
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// max |g_ij g_jk − g_ik| over all triple points and index orders.
pub fn check_cocycle_u1(
    c: &U1Cochain1,
    cover: &SampledCover,
    tol: f64,
) -> Result<CocycleReport, CechError> {
    let mut worst: Option<CocycleWitness> = None;
    let mut checked = 0;
    for (&(a, b, d), pts) in cover.triples() {
        let idx = [a, b, d];
        for perm in PERMUTATIONS {
            let (i, j, k) = (idx[perm[0]], idx[perm[1]], idx[perm[2]]);
            for p in pts {
                let gij = c.at(cover, (i, j), p)?;
                let gjk = c.at(cover, (j, k), p)?;
                let gik = c.at(cover, (i, k), p)?;
                let defect = (gij * gjk - gik).norm();
                checked += 1;
                if worst.as_ref().is_none_or(|w| defect > w.defect) {
                    worst = Some(CocycleWitness {
                        triple: (i, j, k),
                        point: p.clone(),
                        defect,
                    });
                }
            }
        }
    }
    let max_defect = worst.as_ref().map_or(0.0, |w| w.defect);
    let pass = max_defect <= tol;
    Ok(CocycleReport {
        pass,
        vacuous: checked == 0,
        max_defect,
        checked,
        witness: if pass { None } else { worst },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Winding {
    pub winding: i64,
    /// |Σ increments / 2π − winding|
    pub integrality_defect: f64,
}

/// Winding number of a closed loop of unit scalars. The loop closes from
/// the last sample back to the first; repeating the first sample at the end
/// is allowed.
pub fn winding_number(phases: &[Complex64]) -> Result<Winding, CechError> {
    for (index, z) in phases.iter().enumerate() {
        let modulus = z.norm();
        if (modulus - 1.0).abs() > 1e-8 {
            return Err(CechError::NotUnitPhase { index, modulus });
        }
    }
    let n = phases.len();
    let mut total = 0.0;
    for index in 0..n {
        let step = (phases[(index + 1) % n] / phases[index]).arg();
        if step.abs() >= PI - 1e-9 {
            return Err(CechError::CoarseSampling { index, step });
        }
        total += step;
    }
    let turns = total / (2.0 * PI);
    let winding = turns.round() as i64;
    Ok(Winding {
        winding,
        integrality_defect: (turns - winding as f64).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoChartClass {
    pub coboundary: bool,
    pub winding: i64,
}

/// Decides whether a cochain on a two-chart cover with contractible charts
/// is a coboundary by the winding of g₀₁ around the overlap loop.
pub fn is_coboundary_two_chart(
    c: &U1Cochain1,
    cover: &SampledCover,
) -> Result<TwoChartClass, CechError> {
    if cover.charts() != 2 {
        return Err(CechError::Invalid(format!(
            "two-chart test needs 2 charts, cover has {}",
            cover.charts()
        )));
    }
    let pts = cover
        .overlap(0, 1)
        .ok_or(CechError::MissingSamples { pair: (0, 1) })?;
    let vals = c.lookup_all((0, 1), pts.len())?;
    let w = winding_number(vals)?;
    Ok(TwoChartClass {
        coboundary: w.winding == 0,
        winding: w.winding,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delta1Report {
    /// f_ijk at each triple point, for sorted triples.
    pub phases: BTreeMap<Triple, Vec<Complex64>>,
    /// The nerve has no triple overlaps.
    pub empty: bool,
    pub max_scalar_defect: f64,
}

/// f_ijk = g_ik⁻¹ g_ij g_jk on every triple point, checked to be a scalar
/// multiple of 𝟙 within `tol`.
pub fn delta1_lift(
    c: &PUCochain1,
    cover: &SampledCover,
    tol: f64,
) -> Result<Delta1Report, CechError> {
    let mut phases = BTreeMap::new();
    let mut max_scalar_defect: f64 = 0.0;
    for (&(i, j, k), pts) in cover.triples() {
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            let gij = c.at(cover, (i, j), p)?;
            let gjk = c.at(cover, (j, k), p)?;
            let gik = c.at(cover, (i, k), p)?;
            let f = &(&gik.adjoint() * gij) * gjk;
            let n = f.rows().max(1) as f64;
            let phase = f.trace() / n;
            let scalar = ComplexMatrix::identity(f.rows()).scale(phase);
            let defect = f.max_abs_diff(&scalar).max((phase.norm() - 1.0).abs());
            if defect > tol {
                return Err(CechError::NotScalar {
                    triple: (i, j, k),
                    point: p.clone(),
                    defect,
                });
            }
            max_scalar_defect = max_scalar_defect.max(defect);
            out.push(phase / phase.norm());
        }
        phases.insert((i, j, k), out);
    }
    let empty = phases.values().all(Vec::is_empty);
    Ok(Delta1Report {
        phases,
        empty,
        max_scalar_defect,
    })
}

#[derive(Serialize, Deserialize)]
struct CochainDoc<T> {
    values: BTreeMap<String, Vec<T>>,
}

impl<T: CochainValue + Serialize + for<'de> Deserialize<'de>> Cochain1<T> {
    pub fn to_json(&self) -> String {
        let doc = CochainDoc {
            values: self
                .values
                .iter()
                .map(|((i, j), v)| (format!("{i},{j}"), v.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("cochain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CechError> {
        let doc: CochainDoc<T> =
            serde_json::from_str(text).map_err(|e| CechError::Parse(e.to_string()))?;
        let values = doc
            .values
            .into_iter()
            .map(|(k, v)| parse_pair(&k).map(|p| (p, v)))
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        Ok(Self { values })
    }
}

/// Latitude–longitude grid θ_k = (k+½)π/K, φ_m = 2πm/M, poles excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub k: usize,
    pub m: usize,
}

impl SphereGrid {
    pub fn new(k: usize, m: usize) -> Result<Self, CechError> {
        if k < 1 || m < 3 {
            return Err(CechError::BadGrid { k, m });
        }
        Ok(Self { k, m })
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * PI / self.k as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.m as f64
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 3] {
        let (t, p) = (self.theta(i), self.phi(j));
        [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
    }

    pub fn len(&self) -> usize {
        self.k * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interior plaquettes plus the two polar fans.
    pub fn plaquette_count(&self) -> usize {
        (self.k - 1) * self.m + 2
    }
}

/// A ray at every grid point, stored row-major in (θ index, φ index).
#[derive(Debug, Clone)]
pub struct SphereField {
    grid: SphereGrid,
    rays: Vec<Ray>,
}

impl SphereField {
    pub fn new(grid: SphereGrid, rays: Vec<Ray>) -> Result<Self, CechError> {
        if rays.len() != grid.len() {
            return Err(CechError::Invalid(format!(
                "{} rays for a {}x{} grid",
                rays.len(),
                grid.k,
                grid.m
            )));
        }
        Ok(Self { grid, rays })
    }

    /// Evaluates `f(θ, φ, r)` at every grid point in parallel.
    pub fn try_from_fn<E: Send>(
        grid: SphereGrid,
        f: impl Fn(f64, f64, [f64; 3]) -> Result<Ray, E> + Sync,
    ) -> Result<Self, E> {
        let rays = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / grid.m, idx % grid.m);
                f(grid.theta(i), grid.phi(j), grid.point(i, j))
            })
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self { grid, rays })
    }

    pub fn grid(&self) -> SphereGrid {
        self.grid
    }

    pub fn ray(&self, i: usize, j: usize) -> &Ray {
        &self.rays[i * self.grid.m + j]
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn map_rays(&self, f: impl Fn(&Ray) -> Ray) -> Self {
        Self {
            grid: self.grid,
            rays: self.rays.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeOptions {
    /// Largest admissible |F| per plaquette.
    pub max_flux: f64,
    pub min_overlap: f64,
    pub integrality_tol: f64,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        Self {
            max_flux: PI / 16.0,
            min_overlap: 1e-8,
            integrality_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeReport {
    pub degree: i64,
    pub max_flux: f64,
    /// Σ F / 2π before rounding.
    pub total_turns: f64,
    /// Fluxes of the interior plaquettes (row-major in the lower-left
    /// corner), then the north and south polar fans.
    pub fluxes: Vec<f64>,
}

/// Lattice degree of a ray field: the sum of plaquette Berry fluxes over the
/// closed grid divided by 2π.
///
/// Plaquettes run counterclockwise seen from outside the sphere:
/// (k,m) → (k+1,m) → (k+1,m+1) → (k,m+1); the north fan follows the first
/// ring eastward, the south fan follows the last ring westward.
pub fn plaquette_degree(
    field: &SphereField,
    opts: &DegreeOptions,
) -> Result<DegreeReport, CechError> {
    let g = field.grid;
    let link = |a: (usize, usize), b: (usize, usize)| -> Result<Complex64, CechError> {
        let ov = linalg::inner(field.ray(a.0, a.1).rep(), field.ray(b.0, b.1).rep());
        if ov.norm() < opts.min_overlap {
            return Err(CechError::VanishingOverlap {
                a,
                b,
                overlap: ov.norm(),
            });
        }
        Ok(ov)
    };
    let loop_flux = |corners: &[(usize, usize)]| -> Result<f64, CechError> {
        let mut prod = ONE;
        for (idx, &a) in corners.iter().enumerate() {
            let ov = link(a, corners[(idx + 1) % corners.len()])?;
            prod *= ov / ov.norm();
        }
        Ok(prod.arg())
    };

    let mut plaquettes: Vec<Vec<(usize, usize)>> = Vec::with_capacity(g.plaquette_count());
    for i in 0..g.k - 1 {
        for j in 0..g.m {
            let jn = (j + 1) % g.m;
            plaquettes.push(vec![(i, j), (i + 1, j), (i + 1, jn), (i, jn)]);
        }
    }
    plaquettes.push((0..g.m).map(|j| (0, j)).collect());
    plaquettes.push((0..g.m).rev().map(|j| (g.k - 1, j)).collect());

    let fluxes = plaquettes
        .par_iter()
        .map(|c| loop_flux(c))
        .collect::<Result<Vec<f64>, _>>()?;

    let mut max_flux: f64 = 0.0;
    for (plaquette, &flux) in fluxes.iter().enumerate() {
        if flux.abs() > opts.max_flux || flux.abs() >= PI - 1e-9 {
            return Err(CechError::FluxTooLarge {
                plaquette,
                flux,
                limit: opts.max_flux.min(PI),
            });
        }
        max_flux = max_flux.max(flux.abs());
    }
    let total_turns = fluxes.iter().sum::<f64>() / (2.0 * PI);
    let degree = total_turns.round();
    let defect = (total_turns - degree).abs();
    if defect > opts.integrality_tol {
        return Err(CechError::NonInteger {
            total: total_turns,
            defect,
        });
    }
    Ok(DegreeReport {
        degree: degree as i64,
        max_flux,
        total_turns,
        fluxes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Ground ray of −r·σ, written independently of the dimer module.
    fn bloch(r: [f64; 3]) -> Ray {
        let v = if r[2] >= 0.0 {
            vec![
                Complex64::new((1.0 + r[2]).sqrt(), 0.0),
                Complex64::new(r[0], r[1]) / (1.0 + r[2]).sqrt(),
            ]
        } else {
            vec![
                Complex64::new(r[0], -r[1]) / (1.0 - r[2]).sqrt(),
                Complex64::new((1.0 - r[2]).sqrt(), 0.0),
            ]
        };
        Ray::new(v).unwrap()
    }

    fn bloch_field(k: usize, m: usize) -> SphereField {
        let grid = SphereGrid::new(k, m).unwrap();
        SphereField::try_from_fn(grid, |_, _, r| Ok::<_, CechError>(bloch(r))).unwrap()
    }

    /// Three charts on a parameter interval with a common triple region.
    fn triple_cover(rng: &mut ChaCha8Rng) -> SampledCover {
        let pts: Vec<Point> = (0..6)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let extra: Vec<Point> = (0..3).map(|_| vec![rng.gen_range(1.0..2.0), 0.0]).collect();
        let mut with_extra = pts.clone();
        with_extra.extend(extra);
        SampledCover::new(
            3,
            [
                ((0, 1), with_extra),
                ((1, 2), pts.clone()),
                ((0, 2), pts.clone()),
            ],
            [((0, 1, 2), pts)],
        )
        .unwrap()
    }

    fn loop_cover(n: usize) -> SampledCover {
        let pts = (0..n).map(|k| vec![k as f64 / n as f64]).collect();
        SampledCover::new(2, [((0, 1), pts)], []).unwrap()
    }

    fn chart_function(rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> Complex64 {
        let (a, b, c) = (
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        );
        move |p: &[f64]| Complex64::from_polar(1.0, a * p[0] + b * p.get(1).unwrap_or(&0.0) + c)
    }

    fn coboundary(rng: &mut ChaCha8Rng, cover: &SampledCover) -> U1Cochain1 {
        let lambdas: Vec<_> = (0..cover.charts()).map(|_| chart_function(rng)).collect();
        U1Cochain1::from_fn(cover, |i, j, p| lambdas[i](p) * lambdas[j](p).conj())
    }

    #[test]
    fn cover_rejects_bad_triples() {
        let err = SampledCover::new(
            3,
            [
                ((0, 1), vec![vec![0.0]]),
                ((1, 2), vec![vec![0.0]]),
                ((0, 2), vec![vec![0.5]]),
            ],
            [((0, 1, 2), vec![vec![0.0]])],
        );
        assert!(matches!(err, Err(CechError::TripleNotInOverlaps { .. })));
        assert!(matches!(
            SampledCover::new(2, [((0, 2), vec![])], []),
            Err(CechError::ChartOutOfRange {
                chart: 2,
                charts: 2
            })
        ));
    }

    #[test]
    fn overlaps_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cover = triple_cover(&mut rng);
        for (&(i, j), pts) in cover.pairs() {
            assert_eq!(cover.overlap(j, i).unwrap(), pts.as_slice());
        }
    }

    #[test]
    fn coboundary_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cover = triple_cover(&mut rng);
        let c = coboundary(&mut rng, &cover);
        c.validate(&cover).unwrap();
        let r = check_cocycle_u1(&c, &cover, COCYCLE_TOL).unwrap();
        assert!(r.pass && !r.vacuous && r.max_defect < 1e-14);
        assert_eq!(r.checked, 6 * 6);
    }

    #[test]
    fn two_chart_cover_is_vacuous() {
        let cover = loop_cover(8);
        let c = U1Cochain1::from_fn(&cover, |_, _, _| ONE);
        let r = check_cocycle_u1(&c, &cover, COCYCLE_TOL).unwrap();
        assert!(r.pass && r.vacuous && r.checked == 0);
    }

    #[test]
    fn corruption_is_located() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cover = triple_cover(&mut rng);
        let mut c = coboundary(&mut rng, &cover);
        let bad_point = cover.overlap(1, 2).unwrap()[3].clone();
        c.values_mut(1, 2).unwrap()[3] *= Complex64::from_polar(1.0, 0.3);
        let r = check_cocycle_u1(&c, &cover, COCYCLE_TOL).unwrap();
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert_eq!(w.point, bad_point);
        let (i, j, k) = w.triple;
        assert!([(i, j), (j, k), (i, k)]
            .iter()
            .any(|&p| p == (1, 2) || p == (2, 1)));
    }

    #[test]
    fn missing_samples_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cover = triple_cover(&mut rng);
        let mut values = BTreeMap::new();
        values.insert((0, 1), vec![ONE; 9]);
        let c = U1Cochain1::from_values(values);
        assert!(matches!(
            check_cocycle_u1(&c, &cover, COCYCLE_TOL),
            Err(CechError::MissingSamples { .. })
        ));
    }

    #[test]
    fn identity_refinement_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cover = triple_cover(&mut rng);
        let c = coboundary(&mut rng, &cover);
        let same = refine(&c, &cover, &[0, 1, 2], &cover).unwrap();
        assert_eq!(same, c);
    }

    #[test]
    fn duplicated_chart_refinement() {
        let cover = loop_cover(12);
        let c = U1Cochain1::from_fn(&cover, |_, _, p| {
            Complex64::from_polar(1.0, 2.0 * PI * p[0])
        });
        let pts = cover.overlap(0, 1).unwrap().to_vec();
        let new_cover = SampledCover::new(
            3,
            [
                ((0, 1), pts.clone()),
                ((0, 2), pts.clone()),
                ((1, 2), pts.clone()),
            ],
            [((0, 1, 2), pts.clone())],
        )
        .unwrap();
        let r = refine(&c, &cover, &[0, 1, 1], &new_cover).unwrap();
        assert_eq!(r.values(0, 1), c.values(0, 1));
        assert_eq!(r.values(0, 2), c.values(0, 1));
        assert!(r.values(1, 2).unwrap().iter().all(|z| *z == ONE));
        assert!(check_cocycle_u1(&r, &new_cover, COCYCLE_TOL).unwrap().pass);
        assert!(matches!(
            refine(&c, &cover, &[0, 5, 1], &new_cover),
            Err(CechError::ChartOutOfRange { chart: 5, .. })
        ));
    }

    #[test]
    fn two_chart_examples() {
        let cover = loop_cover(64);
        let one = U1Cochain1::from_fn(&cover, |_, _, _| ONE);
        assert_eq!(
            is_coboundary_two_chart(&one, &cover).unwrap(),
            TwoChartClass {
                coboundary: true,
                winding: 0
            }
        );
        let up = U1Cochain1::from_fn(&cover, |_, _, p| {
            Complex64::from_polar(1.0, 2.0 * PI * p[0])
        });
        assert_eq!(
            is_coboundary_two_chart(&up, &cover).unwrap(),
            TwoChartClass {
                coboundary: false,
                winding: 1
            }
        );
        let down = U1Cochain1::from_fn(&cover, |_, _, p| {
            Complex64::from_polar(1.0, -4.0 * PI * p[0])
        });
        assert_eq!(is_coboundary_two_chart(&down, &cover).unwrap().winding, -2);
    }

    #[test]
    fn coarse_loop_is_rejected() {
        let phases = [ONE, -ONE];
        assert!(matches!(
            winding_number(&phases),
            Err(CechError::CoarseSampling { .. })
        ));
    }

    #[test]
    fn winding_examples() {
        assert_eq!(winding_number(&[ONE; 5]).unwrap().winding, 0);
        let k = 16;
        let circle: Vec<_> = (0..=k)
            .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64))
            .collect();
        let w = winding_number(&circle).unwrap();
        assert_eq!(w.winding, 1);
        assert!(w.integrality_defect < 1e-12);
    }

    fn pu_cover() -> SampledCover {
        let pts: Vec<Point> = (0..4).map(|k| vec![k as f64]).collect();
        SampledCover::new(
            3,
            [
                ((0, 1), pts.clone()),
                ((1, 2), pts.clone()),
                ((0, 2), pts.clone()),
            ],
            [((0, 1, 2), pts)],
        )
        .unwrap()
    }

    #[test]
    fn delta1_of_exact_unitary_cocycle_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cover = pu_cover();
        let lam: Vec<ComplexMatrix> = (0..3).map(|_| sample::unitary(&mut rng, 3)).collect();
        let c = PUCochain1::from_fn(&cover, |i, j, _| &lam[i] * &lam[j].adjoint());
        c.validate(&cover).unwrap();
        let r = delta1_lift(&c, &cover, SCALAR_TOL).unwrap();
        assert!(!r.empty);
        for v in r.phases.values().flatten() {
            assert!((v - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn delta1_on_two_charts_is_empty() {
        let cover = loop_cover(4);
        let c = PUCochain1::from_fn(&cover, |_, _, _| ComplexMatrix::identity(2));
        let r = delta1_lift(&c, &cover, SCALAR_TOL).unwrap();
        assert!(r.empty && r.phases.is_empty());
    }

    #[test]
    fn delta1_detects_non_scalar_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cover = pu_cover();
        let c = PUCochain1::from_fn(&cover, |_, _, _| sample::unitary(&mut rng, 2));
        assert!(matches!(
            delta1_lift(&c, &cover, SCALAR_TOL),
            Err(CechError::NotScalar { .. })
        ));
    }

    #[test]
    fn json_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cover = triple_cover(&mut rng);
        let text = cover.to_json();
        assert!(text.contains("\"0,1\""));
        assert_eq!(SampledCover::from_json(&text).unwrap(), cover);
        let c = coboundary(&mut rng, &cover);
        assert_eq!(U1Cochain1::from_json(&c.to_json()).unwrap(), c);
        let pc = pu_cover();
        let p = PUCochain1::from_fn(&pc, |_, _, _| sample::unitary(&mut rng, 2));
        assert_eq!(PUCochain1::from_json(&p.to_json()).unwrap(), p);
        assert!(matches!(
            SampledCover::from_json("{\"charts\": 2, \"overlaps\": {\"0;1\": []}}"),
            Err(CechError::Parse(_))
        ));
    }

    #[test]
    fn constant_field_has_degree_zero() {
        let grid = SphereGrid::new(8, 16).unwrap();
        let field =
            SphereField::try_from_fn(grid, |_, _, _| Ok::<_, CechError>(Ray::basis(2, 0))).unwrap();
        let r = plaquette_degree(&field, &DegreeOptions::default()).unwrap();
        assert_eq!(r.degree, 0);
        assert_eq!(r.max_flux, 0.0);
    }

    #[test]
    fn bloch_degree_is_pinned_and_stable() {
        let coarse = plaquette_degree(&bloch_field(32, 64), &DegreeOptions::default()).unwrap();
        let fine = plaquette_degree(&bloch_field(64, 128), &DegreeOptions::default()).unwrap();
        // Pinned orientation: the ground-ray field of −r·σ has degree +1.
        assert_eq!(coarse.degree, 1);
        assert_eq!(fine.degree, coarse.degree);
        let conj = bloch_field(32, 64).map_rays(Ray::conj);
        assert_eq!(
            plaquette_degree(&conj, &DegreeOptions::default())
                .unwrap()
                .degree,
            -1
        );
    }

    #[test]
    fn plaquette_flux_is_half_solid_angle() {
        // Link-overlap flux of the spin-½ ground ray around a small loop is
        // +½ × the enclosed solid angle with this orientation.
        let (k, m) = (32, 64);
        let grid = SphereGrid::new(k, m).unwrap();
        let r = plaquette_degree(&bloch_field(k, m), &DegreeOptions::default()).unwrap();
        let (i, j) = (10, 5);
        let area =
            (grid.theta(i).cos() - grid.theta(i + 1).cos()) * (grid.phi(j + 1) - grid.phi(j));
        let flux = r.fluxes[i * m + j];
        // The lattice loop is a geodesic quadrilateral, not a coordinate
        // rectangle, so agreement is only to second order in the spacing.
        assert!(
            (flux - 0.5 * area).abs() < 1e-3 * area.abs().max(1e-3),
            "{flux} vs {area}"
        );
        let north = r.fluxes[(k - 1) * m];
        let cap = 2.0 * PI * (1.0 - grid.theta(0).cos());
        assert!((north - 0.5 * cap).abs() < 0.05 * cap);
    }

    #[test]
    fn coarse_grid_trips_flux_gate() {
        let err = plaquette_degree(&bloch_field(4, 8), &DegreeOptions::default()).unwrap_err();
        assert!(matches!(err, CechError::FluxTooLarge { .. }));
        let relaxed = DegreeOptions {
            max_flux: PI,
            ..DegreeOptions::default()
        };
        assert_eq!(
            plaquette_degree(&bloch_field(4, 8), &relaxed)
                .unwrap()
                .degree,
            1
        );
    }

    #[test]
    fn vanishing_overlap_is_reported() {
        let grid = SphereGrid::new(4, 8).unwrap();
        let field = SphereField::try_from_fn(grid, |_, phi, _| {
            Ok::<_, CechError>(if phi < 1.0 {
                Ray::basis(2, 0)
            } else {
                Ray::basis(2, 1)
            })
        })
        .unwrap();
        assert!(matches!(
            plaquette_degree(&field, &DegreeOptions::default()),
            Err(CechError::VanishingOverlap { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn degree_is_gauge_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let field = bloch_field(12, 24);
            let gauged = SphereField::new(
                field.grid(),
                field.rays().iter().map(|r| r.with_phase(sample::phase(&mut rng))).collect(),
            ).unwrap();
            let a = plaquette_degree(&field, &DegreeOptions::default()).unwrap();
            let b = plaquette_degree(&gauged, &DegreeOptions::default()).unwrap();
            prop_assert_eq!(a.degree, b.degree);
            for (x, y) in a.fluxes.iter().zip(&b.fluxes) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn winding_is_additive_and_odd(seed in any::<u64>(), k1 in -3i64..4, k2 in -3i64..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 200;
            let wobble: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let loop_of = |k: i64, shift: f64| -> Vec<Complex64> {
                (0..n)
                    .map(|j| {
                        let t = j as f64 / n as f64;
                        let smooth = wobble[0] * (2.0 * PI * t).sin() + wobble[1] * (4.0 * PI * t + shift).cos();
                        Complex64::from_polar(1.0, 2.0 * PI * k as f64 * t + smooth + wobble[2])
                    })
                    .collect()
            };
            let a = loop_of(k1, 0.3);
            let b = loop_of(k2, 1.1);
            let prod: Vec<_> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
            let conj: Vec<_> = a.iter().map(|x| x.conj()).collect();
            prop_assert_eq!(winding_number(&a).unwrap().winding, k1);
            prop_assert_eq!(winding_number(&prod).unwrap().winding, k1 + k2);
            prop_assert_eq!(winding_number(&conj).unwrap().winding, -k1);
        }

        #[test]
        fn refinement_preserves_cocycles_and_winding(seed in any::<u64>(), k in -3i64..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cover = triple_cover(&mut rng);
            let c = coboundary(&mut rng, &cover);
            let r: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
            let pts = cover.overlap(0, 2).unwrap().to_vec();
            let pairs: Vec<(Pair, Vec<Point>)> = (0..4)
                .flat_map(|a| ((a + 1)..4).map(move |b| (a, b)))
                .map(|p| (p, pts.clone()))
                .collect();
            let triples: Vec<(Triple, Vec<Point>)> = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
                .into_iter()
                .map(|t| (t, pts.clone()))
                .collect();
            let new_cover = SampledCover::new(4, pairs, triples).unwrap();
            let refined = refine(&c, &cover, &r, &new_cover).unwrap();
            prop_assert!(check_cocycle_u1(&refined, &new_cover, COCYCLE_TOL).unwrap().pass);

            let loop_c = loop_cover(64);
            let g = U1Cochain1::from_fn(&loop_c, |_, _, p| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * p[0]));
            let lp = loop_c.overlap(0, 1).unwrap().to_vec();
            let split = SampledCover::new(3, [((0, 1), lp.clone()), ((0, 2), lp.clone()), ((1, 2), lp.clone())], []).unwrap();
            let refined = refine(&g, &loop_c, &[0, 1, 1], &split).unwrap();
            let sub = SampledCover::new(2, [((0, 1), lp.clone())], []).unwrap();
            let mut values = BTreeMap::new();
            values.insert((0, 1), refined.values(0, 2).unwrap().to_vec());
            values.insert((1, 0), refined.values(2, 0).unwrap().to_vec());
            let restricted = U1Cochain1::from_values(values);
            prop_assert_eq!(is_coboundary_two_chart(&restricted, &sub).unwrap().winding, k);
        }

        #[test]
        fn delta1_recovers_phase_perturbations(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cover = pu_cover();
            let lam: Vec<ComplexMatrix> = (0..3).map(|_| sample::unitary(&mut rng, 2)).collect();
            let mut mu = BTreeMap::new();
            for pair in [(0, 1), (1, 2), (0, 2)] {
                mu.insert(pair, (0..4).map(|_| sample::phase(&mut rng)).collect::<Vec<_>>());
            }
            let c = PUCochain1::from_fn(&cover, |i, j, p| {
                (&lam[i] * &lam[j].adjoint()).scale(mu[&(i, j)][p[0] as usize])
            });
            let r = delta1_lift(&c, &cover, SCALAR_TOL).unwrap();
            for (idx, f) in r.phases[&(0, 1, 2)].iter().enumerate() {
                let expect = mu[&(0, 2)][idx].conj() * mu[&(0, 1)][idx] * mu[&(1, 2)][idx];
                prop_assert!((f - expect).norm() < 1e-12);
            }
        }
    }
}
