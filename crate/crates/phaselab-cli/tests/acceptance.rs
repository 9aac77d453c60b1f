//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::f64::consts::FRAC_1_SQRT_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use phaselab::dimer::{self, Hemisphere, ParamPoint};
use phaselab::homotopy::{self, BundledLoop, ContractOptions, StateLoop};
use phaselab::linalg::{self, ComplexMatrix};
use phaselab::sample;
use phaselab::supernatural::{self, Group, SupernaturalNumber};
use phaselab_cli::commands;
use phaselab_cli::config::{RunConfig, Tolerances};
use phaselab_cli::selfcheck::{self, Suite, SuiteSizes};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5eed;
const EPS: f64 = 0.25;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn plus_chart_points(rng: &mut ChaCha8Rng, count: usize) -> Vec<ParamPoint> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = ParamPoint::new(sample::unit_real4(rng)).expect("unit sample");
        if w.w4() > -EPS {
            out.push(w);
        }
    }
    out
}

fn ket(bits: [usize; 2]) -> Vec<Complex64> {
    linalg::basis_vector(4, 2 * bits[0] + bits[1])
}

fn dimer_spectrum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut degenerate: f64 = 0.0;
    for w in plus_chart_points(&mut rng, 1000) {
        let h = dimer::dimer_hamiltonian(&w, Hemisphere::Plus, EPS).expect("point in chart");
        let eig = linalg::eig_hermitian(&h).expect("hermitian");
        let g = dimer::bump(&w, Hemisphere::Plus, EPS);
        let f = (g * g + w.wvec_norm().powi(2)).sqrt();
        let mut expect = [-g - 2.0 * f, g, g, -g + 2.0 * f];
        expect.sort_by(f64::total_cmp);
        for (a, b) in eig.values.iter().zip(&expect) {
            worst = worst.max((a - b).abs());
        }
        // g is an eigenvalue of multiplicity two.
        let count = eig
            .values
            .iter()
            .filter(|v| (*v - g).abs() <= 1e-10)
            .count();
        if count < 2 {
            degenerate = degenerate.max(1.0);
        }
    }
    outcome(
        worst <= 1e-10 && degenerate == 0.0,
        format!(
            "max eigenvalue error {worst:.2e}, g doubly degenerate at all points: {}",
            degenerate == 0.0
        ),
    )
}

fn closed_form_ground_state() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for w in plus_chart_points(&mut rng, 1000) {
        let h = dimer::dimer_hamiltonian(&w, Hemisphere::Plus, EPS).expect("point in chart");
        let eig = linalg::eig_hermitian(&h).expect("hermitian");
        let cf = dimer::dimer_closed_form(&w, Hemisphere::Plus, EPS).expect("point in chart");
        let overlap = linalg::inner(&eig.vector(0), &cf.ground).norm();
        worst = worst.max(1.0 - overlap);
    }
    let close = |a: &[Complex64], b: &[Complex64]| linalg::norm(&linalg::sub_vec(a, b));
    let pole = ParamPoint::new([0.0, 0.0, 0.0, 1.0]).expect("unit");
    let singlet = linalg::scale_vec(
        &linalg::sub_vec(&ket([1, 0]), &ket([0, 1])),
        Complex64::new(FRAC_1_SQRT_2, 0.0),
    );
    let pole_err = close(
        &dimer::dimer_closed_form(&pole, Hemisphere::Plus, EPS)
            .expect("pole")
            .ground,
        &singlet,
    );
    let eq = ParamPoint::new([0.0, 0.0, 1.0, 0.0]).expect("unit");
    let eq_err = close(
        &dimer::dimer_closed_form(&eq, Hemisphere::Plus, EPS)
            .expect("equator")
            .ground,
        &ket([1, 0]),
    );
    outcome(
        worst <= 1e-9 && pole_err < 1e-15 && eq_err == 0.0,
        format!("max 1 - overlap {worst:.2e}, singlet error {pole_err:.1e}, |down up> error {eq_err:.1e}"),
    )
}

fn suite_outcome(suite: Suite) -> Outcome {
    let r = selfcheck::run_suite(
        suite,
        SEED,
        &Tolerances::default(),
        &SuiteSizes::default(),
        false,
    );
    let mut detail = format!(
        "{} checks, worst residual {:.2e} (tolerance {:.0e})",
        r.checks, r.worst_residual, r.tolerance
    );
    if !r.failures.is_empty() {
        detail.push_str(&format!(", failures: {}", r.failures.join("; ")));
    }
    outcome(r.pass, detail)
}

fn invariant_nontriviality() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (n, grid) in [(2, [32, 64]), (3, [32, 64]), (2, [64, 128]), (3, [64, 128])] {
        let mut cfg = RunConfig::new("invariant");
        cfg.model.n_dimers = n;
        cfg.model.grid = grid;
        let report = commands::cmd_invariant(cfg);
        let Some(v) = report.result() else {
            return outcome(false, format!("N={n} grid {grid:?}: {:?}", report.outcome));
        };
        let degree = v["degree"].as_i64().unwrap_or(0);
        let bloch = v["bloch_degree"].as_i64().unwrap_or(0);
        let r = &v["residuals"];
        let ray_product_min = 1.0 - r["bloch"].as_f64().unwrap_or(1.0);
        let y = v["y_overlap_min"].as_f64().unwrap_or(0.0);
        let inter = r["intertwiner"].as_f64().unwrap_or(1.0);
        let ok = degree.abs() == 1
            && degree == bloch
            && ray_product_min >= 1.0 - 1e-8
            && y >= 0.99
            && inter <= 1e-8
            && report.exit_code() == 0;
        pass &= ok;
        lines.push(format!(
            "N={n} {}x{}: degree {degree} (bloch {bloch}), min ray product 1-{:.1e}, y_overlap {y:.6}, intertwiner {inter:.1e}",
            grid[0],
            grid[1],
            1.0 - ray_product_min
        ));
    }
    outcome(pass, lines.join("; "))
}

fn noninteracting_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_gap = f64::INFINITY;
    let mut witness_err: f64 = 0.0;
    for _ in 0..100 {
        let r = sample::unit_real3(&mut rng);
        let s = sample::unit_real3(&mut rng);
        for n in 1..=4 {
            let d = dimer::product_distance_bound(r, s, n);
            let dot: f64 = r.iter().zip(&s).map(|(a, b)| a * b).sum();
            let witness = (1.0 - dot.powi(n as i32)).abs();
            worst_gap = worst_gap.min(d.exact - (witness - 1e-10));
            witness_err = witness_err
                .max((d.witness - witness).abs())
                .max((d.bound - witness).abs());
        }
    }
    outcome(
        worst_gap >= 0.0 && witness_err <= 1e-10,
        format!("min (exact - witness + 1e-10) {worst_gap:.2e}, witness formula error {witness_err:.1e}"),
    )
}

fn loop_contraction() -> Outcome {
    let opts = ContractOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for which in [BundledLoop::N2, BundledLoop::N3] {
        let l = homotopy::bundled_loop(which);
        match homotopy::contract_loop(&l, &opts) {
            Ok(sheet) => {
                let modulus = opts.modulus(&l);
                let v = homotopy::verify_homotopy(&sheet, &l, modulus);
                pass &= v.pass && v.max_step <= modulus;
                lines.push(format!(
                    "{which:?}: {}x{} sheet, max step {:.4} vs 5*delta {:.4}, {} violations",
                    v.rows,
                    v.cols,
                    v.max_step,
                    modulus,
                    v.violations.len()
                ));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{which:?}: {e}"));
            }
        }
    }
    let constant = StateLoop::constant(3, 50);
    let constant_ok = homotopy::contract_loop(&constant, &opts).is_ok_and(|s| {
        let base = ComplexMatrix::from_real_diag(&[1.0, 0.0, 0.0]);
        s.rows.len() == 1
            && s.rows[0].iter().all(|c| c.max_abs_diff(&base) == 0.0)
            && homotopy::verify_homotopy(&s, &constant, 0.0).pass
    });
    pass &= constant_ok;
    lines.push(format!("constant loop gives constant sheet: {constant_ok}"));
    outcome(pass, lines.join("; "))
}

fn supernatural_tables() -> Outcome {
    let a: SupernaturalNumber = "2^inf".parse().expect("literal");
    let mut table_ok = true;
    for row in supernatural::homotopy_table(&a, 12) {
        let expect = match row.k {
            k if k % 2 == 0 => (Group::Trivial, Group::Trivial),
            1 => (
                Group::Rationals(a.clone()),
                Group::IntegersTimesRationals(a.clone()),
            ),
            _ => (Group::Rationals(a.clone()), Group::Rationals(a.clone())),
        };
        table_ok &= (row.unitary, row.isotropy) == expect;
    }
    let b: SupernaturalNumber = "2^inf*3".parse().expect("literal");
    let witness = a.iso_equivalent(&b);
    let witness_ok = witness
        .as_ref()
        .is_some_and(|(c, d)| *c == 3u32.into() && *d == 1u32.into());
    let suite = suite_outcome(Suite::Supernatural);
    outcome(
        table_ok && witness_ok && suite.pass,
        format!(
            "table k<=12 exact: {table_ok}, witness {:?}; suite: {}",
            witness.map(|(c, d)| (c.to_string(), d.to_string())),
            suite.detail
        ),
    )
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, u64); 10] = [
        (1, "dimer spectrum", dimer_spectrum, 5),
        (2, "closed-form ground state", closed_form_ground_state, 5),
        (3, "metric identities", || suite_outcome(Suite::Metric), 10),
        (
            4,
            "partial trace defining property",
            || suite_outcome(Suite::PartialTrace),
            10,
        ),
        (5, "GNS construction", || suite_outcome(Suite::Gns), 10),
        (6, "invariant nontriviality", invariant_nontriviality, 60),
        (7, "noninteracting bound", noninteracting_bound, 20),
        (8, "loop contraction", loop_contraction, 30),
        (9, "supernatural tables", supernatural_tables, 1),
        (10, "Cech suite", || suite_outcome(Suite::Cocycle), 5),
    ];
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} ({:.2} s of {limit} s) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
