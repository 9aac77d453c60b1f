//! Seeded property suites run by `phaselab selfcheck`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use clap::ValueEnum;
use num_complex::Complex64;
use num_rational::Rational64;
use phaselab::cech::{self, PUCochain1, SampledCover, U1Cochain1};
use phaselab::linalg::{self, ComplexMatrix, Keep};
use phaselab::projective::{self, Ray};
use phaselab::sample;
use phaselab::states::{self, DensityState};
use phaselab::supernatural::{self, Group, SupernaturalNumber};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Metric,
    PartialTrace,
    Gns,
    Cocycle,
    Supernatural,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Metric,
        Suite::PartialTrace,
        Suite::Gns,
        Suite::Cocycle,
        Suite::Supernatural,
    ];

    fn salt(self) -> u64 {
        match self {
            Suite::Metric => 0x6d65,
            Suite::PartialTrace => 0x7074,
            Suite::Gns => 0x676e,
            Suite::Cocycle => 0x6363,
            Suite::Supernatural => 0x736e,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

/// Sample counts per suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteSizes {
    pub ray_pairs: usize,
    pub partial_trace_matrices: usize,
    pub gns_draws: usize,
    pub cocycle_trials: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            ray_pairs: 10_000,
            partial_trace_matrices: 1_000,
            gns_draws: 5,
            cocycle_trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub pass: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub checks: usize,
    /// Structural (non-numerical) checks that failed.
    pub failures: Vec<String>,
}

/// Running maximum of residuals against one tolerance, plus exact checks.
/// An injected fault offsets the first residual by 1e-3.
struct Tally {
    suite: Suite,
    tolerance: f64,
    worst: f64,
    checks: usize,
    failures: Vec<String>,
    fault: bool,
}

impl Tally {
    fn new(suite: Suite, tolerance: f64, fault: bool) -> Self {
        Self {
            suite,
            tolerance,
            worst: 0.0,
            checks: 0,
            failures: Vec::new(),
            fault,
        }
    }

    fn residual(&mut self, r: f64) {
        let r = if self.fault {
            self.fault = false;
            r + 1e-3
        } else {
            r
        };
        self.checks += 1;
        self.worst = if r.is_nan() {
            f64::INFINITY
        } else {
            self.worst.max(r)
        };
    }

    fn ensure(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.failures.len() < 16 {
            self.failures.push(what());
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            suite: self.suite,
            pass: self.worst <= self.tolerance && self.failures.is_empty(),
            worst_residual: self.worst,
            tolerance: self.tolerance,
            checks: self.checks,
            failures: self.failures,
        }
    }
}

fn rng_for(seed: u64, suite: Suite) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ suite.salt().rotate_left(32))
}

pub fn run_suite(
    suite: Suite,
    seed: u64,
    tol: &Tolerances,
    sizes: &SuiteSizes,
    fault: bool,
) -> SuiteResult {
    let mut rng = rng_for(seed, suite);
    match suite {
        Suite::Metric => metric_suite(&mut rng, tol, sizes.ray_pairs, fault),
        Suite::PartialTrace => {
            partial_trace_suite(&mut rng, tol, sizes.partial_trace_matrices, fault)
        }
        Suite::Gns => gns_suite(&mut rng, tol, sizes.gns_draws, fault),
        Suite::Cocycle => cocycle_suite(&mut rng, tol, sizes.cocycle_trials, fault),
        Suite::Supernatural => supernatural_suite(&mut rng, fault),
    }
}

pub fn run_all(
    seed: u64,
    tol: &Tolerances,
    sizes: &SuiteSizes,
    fault: Option<Suite>,
) -> Vec<SuiteResult> {
    Suite::ALL
        .iter()
        .map(|&s| run_suite(s, seed, tol, sizes, fault == Some(s)))
        .collect()
}

/// Chord, gap and Fubini–Study identities, each side computed from vectors
/// and projectors rather than from the ray product alone.
fn metric_suite(rng: &mut ChaCha8Rng, tol: &Tolerances, pairs: usize, fault: bool) -> SuiteResult {
    let mut t = Tally::new(Suite::Metric, tol.metric, fault);
    let mut gap_worst: f64 = 0.0;
    for i in 0..pairs {
        let n = rng.gen_range(2..=6);
        let a = Ray::new(sample::unit_vector(rng, n)).expect("unit vector");
        let b = if i % 10 == 0 {
            // Nearly coincident rays stress the small-distance end.
            let mut v = a.rep().to_vec();
            let d = sample::unit_vector(rng, n);
            let eps = 10f64.powi(-rng.gen_range(2..8));
            v = linalg::add_vec(&v, &linalg::scale_vec(&d, Complex64::new(eps, 0.0)));
            Ray::new(v).expect("nonzero")
        } else {
            Ray::new(sample::unit_vector(rng, n)).expect("unit vector")
        };
        let p = projective::ray_product(&a, &b);
        let d = projective::ray_distances(&a, &b);
        // min over phases of ‖a − e^{iα}b‖, attained at the phase of ⟨b, a⟩.
        let ov = linalg::inner(b.rep(), a.rep());
        let phase = if ov.norm() > 0.0 {
            ov / ov.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let chord_direct = linalg::norm(&linalg::sub_vec(
            a.rep(),
            &linalg::scale_vec(b.rep(), phase),
        ));
        let diff = &a.projector() - &b.projector();
        let gap_direct = diff.operator_norm();
        t.residual((d.chord * d.chord - (2.0 - 2.0 * p)).abs());
        t.residual((d.chord - chord_direct).abs());
        t.residual((d.gap * d.gap - (1.0 - p * p)).abs());
        t.residual((d.gap - gap_direct).abs());
        t.residual((d.chord - d.fubini_study).max(0.0));
        t.residual((d.fubini_study - PI * SQRT_2 / 4.0 * d.chord).max(0.0));
        gap_worst = gap_worst.max((d.gap - 0.5 * linalg::trace_norm(&diff)).abs());
    }
    t.ensure(gap_worst <= tol.gap_trace_norm, || {
        format!(
            "gap vs half trace norm residual {gap_worst:.3e} exceeds {:.1e}",
            tol.gap_trace_norm
        )
    });
    t.finish()
}

fn hermitian_basis(d: usize) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(d * d);
    let s = 1.0 / SQRT_2;
    for i in 0..d {
        for j in 0..d {
            let m = match i.cmp(&j) {
                std::cmp::Ordering::Equal => ComplexMatrix::from_fn(d, d, |a, b| {
                    if a == i && b == i {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }),
                std::cmp::Ordering::Less => ComplexMatrix::from_fn(d, d, |a, b| {
                    if (a, b) == (i, j) || (a, b) == (j, i) {
                        Complex64::new(s, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }),
                std::cmp::Ordering::Greater => ComplexMatrix::from_fn(d, d, |a, b| {
                    if (a, b) == (j, i) {
                        Complex64::new(0.0, -s)
                    } else if (a, b) == (i, j) {
                        Complex64::new(0.0, s)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }),
            };
            out.push(m);
        }
    }
    out
}

/// tr(tr_K(T)A) = tr(T(A⊗𝟙)) and its mirror over Hermitian bases.
fn partial_trace_suite(
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
    count: usize,
    fault: bool,
) -> SuiteResult {
    let mut t = Tally::new(Suite::PartialTrace, tol.partial_trace, fault);
    let shapes = [(2, 2), (2, 4), (4, 2)];
    for i in 0..count {
        let (dl, dr) = shapes[i % shapes.len()];
        let m = sample::matrix(rng, dl * dr, dl * dr);
        let left = linalg::partial_trace(&m, dl, dr, Keep::Left).expect("square");
        for a in hermitian_basis(dl) {
            let lhs = (&left * &a).trace();
            let rhs = (&m * &linalg::kron(&a, &ComplexMatrix::identity(dr))).trace();
            t.residual((lhs - rhs).norm());
        }
        let right = linalg::partial_trace(&m, dl, dr, Keep::Right).expect("square");
        for a in hermitian_basis(dr) {
            let lhs = (&right * &a).trace();
            let rhs = (&m * &linalg::kron(&ComplexMatrix::identity(dl), &a)).trace();
            t.residual((lhs - rhs).norm());
        }
    }
    t.finish()
}

/// GNS dimension and ideal rank for pure, maximally mixed and rank-r
/// states, and multiplicativity of the representation.
fn gns_suite(rng: &mut ChaCha8Rng, tol: &Tolerances, draws: usize, fault: bool) -> SuiteResult {
    let mut t = Tally::new(Suite::Gns, tol.gns, fault);
    for n in 2..=6 {
        for _ in 0..draws.max(1) {
            let pure =
                states::state_from_vector(&sample::unit_vector(rng, n)).expect("unit vector");
            let g = states::gns(&pure).expect("valid state");
            t.ensure(g.dim == n, || {
                format!("pure state on M_{n}: GNS dimension {}", g.dim)
            });
            t.ensure(g.ideal_rank() == n * (n - 1), || {
                format!("pure state on M_{n}: Gelfand ideal rank {}", g.ideal_rank())
            });
            let a = sample::matrix(rng, n, n);
            let b = sample::matrix(rng, n, n);
            let pab = g.rep(&(&a * &b)).expect("square");
            let papb = &g.rep(&a).expect("square") * &g.rep(&b).expect("square");
            t.residual(pab.max_abs_diff(&papb) / (a.operator_norm() * b.operator_norm()));
            // Ω is cyclic and ω(A) = ⟨Ω, π(A)Ω⟩.
            let pa = g.rep(&a).expect("square");
            let expect = linalg::inner(&g.cyclic, &pa.apply(&g.cyclic));
            t.residual((expect - pure.expectation(&a)).norm() / a.operator_norm());
        }
        let mixed = DensityState::maximally_mixed(n);
        let g = states::gns(&mixed).expect("valid state");
        t.ensure(g.dim == n * n, || {
            format!("maximally mixed on M_{n}: GNS dimension {}", g.dim)
        });
        t.ensure(g.ideal_rank() == 0, || {
            format!("maximally mixed on M_{n}: ideal rank {}", g.ideal_rank())
        });
        let r = rng.gen_range(1..=n);
        let vs: Vec<Vec<Complex64>> = (0..r).map(|_| sample::unit_vector(rng, n)).collect();
        let rho = vs
            .iter()
            .fold(ComplexMatrix::zeros(n, n), |acc, v| {
                &acc + &ComplexMatrix::outer(v, v)
            })
            .scale_real(1.0 / r as f64);
        let s = DensityState::with_tolerance(rho, 1e-9).expect("convex combination");
        let g = states::gns(&s).expect("valid state");
        t.ensure(g.dim == n * r, || {
            format!("rank-{r} state on M_{n}: GNS dimension {}", g.dim)
        });
    }
    t.finish()
}

fn three_chart_cover(rng: &mut ChaCha8Rng) -> SampledCover {
    let pts: Vec<Vec<f64>> = (0..8)
        .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    SampledCover::new(
        3,
        [
            ((0, 1), pts.clone()),
            ((1, 2), pts.clone()),
            ((0, 2), pts.clone()),
        ],
        [((0, 1, 2), pts)],
    )
    .expect("triples lie in every overlap")
}

fn linear_phase(rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> Complex64 {
    let (a, b, c) = (
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-PI..PI),
    );
    move |p: &[f64]| Complex64::from_polar(1.0, a * p[0] + b * p[1] + c)
}

/// δ₁ of phase-perturbed lifts, cocycle checks on coboundaries and
/// corrupted cochains, and two-chart winding classification.
fn cocycle_suite(
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
    trials: usize,
    fault: bool,
) -> SuiteResult {
    let mut t = Tally::new(Suite::Cocycle, tol.cocycle, fault);
    for trial in 0..trials.max(1) {
        let cover = three_chart_cover(rng);
        let dim = 2 + trial % 3;
        // V_i(p) = W_i·diag(e^{i c_ik·p}): a PU cocycle V_iV_j† with phase lifts μ_ij.
        let frames: Vec<(ComplexMatrix, Vec<[f64; 2]>)> = (0..3)
            .map(|_| {
                let w = sample::unitary(rng, dim);
                let c = (0..dim)
                    .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
                    .collect();
                (w, c)
            })
            .collect();
        let v = |i: usize, p: &[f64]| {
            let (w, c) = &frames[i];
            let d: Vec<Complex64> = c
                .iter()
                .map(|k| Complex64::from_polar(1.0, k[0] * p[0] + k[1] * p[1]))
                .collect();
            w * &ComplexMatrix::from_diag(&d)
        };
        let mus: Vec<_> = (0..3).map(|_| linear_phase(rng)).collect();
        let mu = |i: usize, j: usize, p: &[f64]| {
            let idx = match (i, j) {
                (0, 1) => 0,
                (1, 2) => 1,
                _ => 2,
            };
            mus[idx](p)
        };
        let lifts = PUCochain1::from_fn(&cover, |i, j, p| {
            (&v(i, p) * &v(j, p).adjoint()).scale(mu(i, j, p))
        });
        match cech::delta1_lift(&lifts, &cover, 1e-9) {
            Ok(report) => {
                for ((&(i, j, k), phases), (_, pts)) in report.phases.iter().zip(cover.triples()) {
                    for (f, p) in phases.iter().zip(pts) {
                        let expect = mu(i, k, p).conj() * mu(i, j, p) * mu(j, k, p);
                        t.residual((f - expect).norm());
                    }
                }
            }
            Err(e) => t.ensure(false, || format!("delta1 failed: {e}")),
        }

        let lambdas: Vec<_> = (0..3).map(|_| linear_phase(rng)).collect();
        let mut cob = U1Cochain1::from_fn(&cover, |i, j, p| lambdas[i](p) * lambdas[j](p).conj());
        let r = cech::check_cocycle_u1(&cob, &cover, cech::COCYCLE_TOL).expect("complete cochain");
        t.residual(r.max_defect);
        t.ensure(r.pass && !r.vacuous, || {
            "coboundary rejected by cocycle check".to_string()
        });
        let bad = rng.gen_range(0..8);
        let bad_point = cover.overlap(1, 2).expect("pair present")[bad].clone();
        cob.values_mut(1, 2).expect("pair present")[bad] *= Complex64::from_polar(1.0, 0.5);
        let r = cech::check_cocycle_u1(&cob, &cover, cech::COCYCLE_TOL).expect("complete cochain");
        let located = r.witness.as_ref().is_some_and(|w| w.point == bad_point);
        t.ensure(!r.pass && located, || {
            format!("corruption at point {bad} of (1,2) not located")
        });
    }
    for k in -3i64..=3 {
        let n = 64;
        let pts: Vec<Vec<f64>> = (0..n).map(|j| vec![j as f64 / n as f64]).collect();
        let cover = SampledCover::new(2, [((0, 1), pts)], []).expect("two charts");
        let wobble = rng.gen_range(-0.5..0.5);
        let c = U1Cochain1::from_fn(&cover, |_, _, p| {
            Complex64::from_polar(
                1.0,
                2.0 * PI * k as f64 * p[0] + wobble * (2.0 * PI * p[0]).sin(),
            )
        });
        match cech::is_coboundary_two_chart(&c, &cover) {
            Ok(class) => t.ensure(class.winding == k && class.coboundary == (k == 0), || {
                format!("e^(2 pi i {k} t) classified with winding {}", class.winding)
            }),
            Err(e) => t.ensure(false, || format!("winding {k}: {e}")),
        }
    }
    t.finish()
}

/// Exact checks; any discrepancy is a residual of 1.
fn supernatural_suite(rng: &mut ChaCha8Rng, fault: bool) -> SuiteResult {
    let mut t = Tally::new(Suite::Supernatural, 0.0, fault);
    let parse = |s: &str| s.parse::<SupernaturalNumber>().expect("literal parses");
    for a in [
        parse("2^inf"),
        parse("2^inf*3"),
        parse("6^inf*5^2"),
        SupernaturalNumber::one(),
    ] {
        for row in supernatural::homotopy_table(&a, 8) {
            let expect = if row.k % 2 == 0 {
                (Group::Trivial, Group::Trivial)
            } else if row.k == 1 {
                (
                    Group::Rationals(a.clone()),
                    Group::IntegersTimesRationals(a.clone()),
                )
            } else {
                (Group::Rationals(a.clone()), Group::Rationals(a.clone()))
            };
            t.residual(if (row.unitary, row.isotropy) == expect {
                0.0
            } else {
                1.0
            });
        }
    }
    let witness = parse("2^inf").iso_equivalent(&parse("2^inf*3"));
    let ok = witness.is_some_and(|(c, d)| c == 3u32.into() && d == 1u32.into());
    t.residual(if ok { 0.0 } else { 1.0 });
    t.ensure(
        parse("2^inf").iso_equivalent(&parse("3^inf")).is_none(),
        || "2^inf ~ 3^inf".into(),
    );
    let seq =
        SupernaturalNumber::from_type_sequence(&[2, 6, 12], Some(2)).map(|a| a == parse("2^inf*3"));
    t.ensure(seq == Ok(true), || "type sequence [2,6,12] tail 2".into());
    t.ensure(parse("2^inf*3").q_contains(&Rational64::new(5, 12)), || {
        "5/12 in Q(2^inf*3)".into()
    });
    t.ensure(!parse("2^inf").q_contains(&Rational64::new(1, 3)), || {
        "1/3 in Q(2^inf)".into()
    });
    let primes = [2u64, 3, 5, 7];
    let mut random = || {
        let mut a = SupernaturalNumber::one();
        for &p in &primes {
            let e = match rng.gen_range(0..6) {
                5 => supernatural::Exponent::Infinite,
                k => supernatural::Exponent::Finite(k),
            };
            a = a.mul(&SupernaturalNumber::prime_power(p, e).expect("prime"));
        }
        a
    };
    for _ in 0..200 {
        let (a, b, c) = (random(), random(), random());
        t.ensure(a.mul(&b) == b.mul(&a), || {
            format!("{a}·{b} not commutative")
        });
        t.ensure(a.mul(&b).mul(&c) == a.mul(&b.mul(&c)), || {
            format!("{a}·{b}·{c} not associative")
        });
        let ab = a.iso_equivalent(&b).is_some();
        let bc = b.iso_equivalent(&c).is_some();
        t.ensure(ab == b.iso_equivalent(&a).is_some(), || {
            format!("{a} ~ {b} not symmetric")
        });
        t.ensure(!(ab && bc) || a.iso_equivalent(&c).is_some(), || {
            format!("{a} ~ {b} ~ {c} not transitive")
        });
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteSizes {
        SuiteSizes {
            ray_pairs: 500,
            partial_trace_matrices: 60,
            gns_draws: 2,
            cocycle_trials: 4,
        }
    }

    #[test]
    fn all_suites_pass() {
        for r in run_all(7, &Tolerances::default(), &small(), None) {
            assert!(r.pass, "{r:?}");
            assert!(r.checks > 0);
        }
    }

    #[test]
    fn fault_is_targeted() {
        for target in Suite::ALL {
            let results = run_all(7, &Tolerances::default(), &small(), Some(target));
            for r in results {
                assert_eq!(r.pass, r.suite != target, "{r:?}");
            }
        }
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let b = hermitian_basis(3);
        assert_eq!(b.len(), 9);
        for (i, x) in b.iter().enumerate() {
            assert!(x.hermitian_deviation() < 1e-15);
            for (j, y) in b.iter().enumerate() {
                let ip = (&x.adjoint() * y).trace();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - Complex64::new(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn suite_names() {
        assert_eq!(Suite::PartialTrace.to_string(), "partial-trace");
    }
}
