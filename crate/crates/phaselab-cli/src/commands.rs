use std::path::{Path, PathBuf};

use num_rational::Rational64;
use phaselab::cech::{CechError, DegreeOptions};
use phaselab::dimer::{self, DimerError, InvariantOptions, InvariantReport, ZOptions};
use phaselab::homotopy::{
    self, BundledLoop, ContractOptions, HomotopyError, StageKind, StateLoop, VerifyReport,
};
use phaselab::supernatural::{HomotopyRow, SupernaturalNumber};
use serde::Serialize;

use crate::config::RunConfig;
use crate::selfcheck::{self, Suite, SuiteResult, SuiteSizes};
use crate::{CliError, Report};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gate {
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Gate {
    fn at_most(value: f64, limit: f64) -> Self {
        Self {
            value,
            limit,
            pass: value <= limit,
        }
    }

    fn at_least(value: f64, limit: f64) -> Self {
        Self {
            value,
            limit,
            pass: value >= limit,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Gates {
    pub bloch: Gate,
    pub projection: Gate,
    pub intertwiner: Gate,
    pub y_overlap: Gate,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantResult {
    #[serde(flatten)]
    pub report: InvariantReport,
    pub gates: Gates,
}

fn dimer_error(e: DimerError) -> CliError {
    match e {
        DimerError::Config(_) | DimerError::Cech(CechError::BadGrid { .. }) => {
            CliError::Input(e.to_string())
        }
        _ => CliError::Gate(e.to_string()),
    }
}

pub fn invariant_options(cfg: &RunConfig) -> InvariantOptions {
    InvariantOptions {
        z: ZOptions {
            closure: cfg.closure,
            variant: cfg.variant,
        },
        degree: DegreeOptions::default(),
        intertwiner_samples: cfg.intertwiner_samples,
    }
}

/// Lattice degree of the projected equator map with all residual gates.
pub fn cmd_invariant(cfg: RunConfig) -> Report {
    let run = || -> Result<(InvariantResult, bool), CliError> {
        cfg.model.validate().map_err(dimer_error)?;
        let report =
            dimer::invariant_degree(&cfg.model, &invariant_options(&cfg)).map_err(dimer_error)?;
        let tol = &cfg.tolerances;
        let r = &report.residuals;
        let gates = Gates {
            bloch: Gate::at_most(r.bloch, tol.bloch),
            projection: Gate::at_most(r.projection, tol.projection),
            intertwiner: Gate::at_most(r.intertwiner, tol.intertwiner),
            y_overlap: Gate::at_least(report.y_overlap_min, 1.0 - tol.y_overlap_deficit),
        };
        // Residuals against the Bloch oracle only apply to the standard model.
        let bloch_ok = gates.bloch.pass || cfg.variant != dimer::ModelVariant::Standard;
        let pass = report.agreement
            && bloch_ok
            && gates.projection.pass
            && gates.intertwiner.pass
            && gates.y_overlap.pass;
        Ok((InvariantResult { report, gates }, pass))
    };
    match run() {
        Ok((result, pass)) => Report::finished(cfg, result, pass),
        Err(e) => Report::failed(cfg, e),
    }
}

#[derive(Debug, Clone)]
pub enum LoopSource {
    Builtin(BundledLoop),
    File(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub level: usize,
    pub kind: StageKind,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractResult {
    pub n: usize,
    pub samples: usize,
    pub max_input_step: f64,
    pub modulus: f64,
    pub rows: usize,
    pub stages: Vec<StageSummary>,
    pub sheet: Option<String>,
    pub verify: VerifyReport,
}

/// Violations listed in a report before truncation.
const MAX_LISTED_VIOLATIONS: usize = 50;

fn homotopy_error(e: HomotopyError) -> CliError {
    match e {
        HomotopyError::EigenvectorAmbiguity { .. }
        | HomotopyError::InterpolationUnsafe { .. }
        | HomotopyError::Refinement { .. }
        | HomotopyError::Discontinuous { .. }
        | HomotopyError::DiskStepTooCoarse { .. }
        | HomotopyError::OutsideDisk { .. } => CliError::Gate(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

pub fn load_loop(source: &LoopSource) -> Result<StateLoop, CliError> {
    match source {
        LoopSource::Builtin(b) => Ok(homotopy::bundled_loop(*b)),
        LoopSource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            StateLoop::from_json(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
    }
}

/// Contracts a based loop, verifies the sheet and optionally writes it.
pub fn cmd_contract_loop(cfg: RunConfig, source: &LoopSource, sheet_out: Option<&Path>) -> Report {
    let run = || -> Result<(ContractResult, bool), CliError> {
        let l = load_loop(source)?;
        let opts = ContractOptions::default();
        let sheet = homotopy::contract_loop(&l, &opts).map_err(homotopy_error)?;
        let modulus = opts.modulus(&l);
        let mut verify = homotopy::verify_homotopy(&sheet, &l, modulus);
        verify.violations.truncate(MAX_LISTED_VIOLATIONS);
        if let Some(path) = sheet_out {
            std::fs::write(path, sheet.to_json())
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        }
        let pass = verify.pass;
        let result = ContractResult {
            n: l.n(),
            samples: l.len(),
            max_input_step: l.max_step(),
            modulus,
            rows: sheet.rows.len(),
            stages: sheet
                .stages
                .iter()
                .map(|s| StageSummary {
                    level: s.level,
                    kind: s.kind,
                    rows: s.s_values.len() - 1,
                })
                .collect(),
            sheet: sheet_out.map(|p| p.display().to_string()),
            verify,
        };
        Ok((result, pass))
    };
    match run() {
        Ok((result, pass)) => Report::finished(cfg, result, pass),
        Err(e) => Report::failed(cfg, e),
    }
}

/// The JSON document of a bundled loop.
pub fn export_loop(which: BundledLoop) -> String {
    homotopy::bundled_loop(which).to_json()
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckResult {
    pub sizes: SuiteSizes,
    pub suites: Vec<SuiteResult>,
}

pub fn cmd_selfcheck(cfg: RunConfig, sizes: SuiteSizes, fault: Option<Suite>) -> Report {
    let suites = selfcheck::run_all(cfg.seed, &cfg.tolerances, &sizes, fault);
    let pass = suites.iter().all(|s| s.pass);
    Report::finished(cfg, SelfcheckResult { sizes, suites }, pass)
}

#[derive(Debug, Clone, Default)]
pub struct SupernaturalArgs {
    pub types: Vec<u64>,
    pub tail: Option<u64>,
    pub number: Option<String>,
    pub rationals: Vec<String>,
    pub compare: Option<String>,
    pub k_max: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Membership {
    pub q: String,
    pub contains: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub b: String,
    pub equivalent: bool,
    /// Naturals with a·c = b·d, as decimal strings.
    pub c: Option<String>,
    pub d: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupernaturalResult {
    pub a: String,
    pub exponents: SupernaturalNumber,
    pub table: Vec<HomotopyRow>,
    pub memberships: Vec<Membership>,
    pub comparison: Option<Comparison>,
}

fn parse_supernatural(text: &str) -> Result<SupernaturalNumber, CliError> {
    text.parse()
        .map_err(|e: phaselab::supernatural::SupernaturalError| CliError::Input(e.to_string()))
}

pub fn cmd_supernatural(cfg: RunConfig, args: &SupernaturalArgs) -> Report {
    let run = || -> Result<SupernaturalResult, CliError> {
        let a = match (&args.number, args.types.is_empty()) {
            (Some(text), true) => parse_supernatural(text)?,
            (None, false) => SupernaturalNumber::from_type_sequence(&args.types, args.tail)
                .map_err(|e| CliError::Input(e.to_string()))?,
            (Some(_), false) => {
                return Err(CliError::Input(
                    "give either --types or --number, not both".into(),
                ))
            }
            (None, true) => {
                return Err(CliError::Input(
                    "one of --types or --number is required".into(),
                ))
            }
        };
        if args.k_max == 0 {
            return Err(CliError::Input("--k-max must be at least 1".into()));
        }
        let memberships = args
            .rationals
            .iter()
            .map(|q| {
                let r: Rational64 = q
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Input(format!("{q:?} is not a rational p/q")))?;
                Ok(Membership {
                    q: r.to_string(),
                    contains: a.q_contains(&r),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let comparison = match &args.compare {
            Some(text) => {
                let b = parse_supernatural(text)?;
                let w = a.iso_equivalent(&b);
                Some(Comparison {
                    b: b.to_string(),
                    equivalent: w.is_some(),
                    c: w.as_ref().map(|(c, _)| c.to_string()),
                    d: w.as_ref().map(|(_, d)| d.to_string()),
                })
            }
            None => None,
        };
        Ok(SupernaturalResult {
            a: a.to_string(),
            table: phaselab::supernatural::homotopy_table(&a, args.k_max),
            exponents: a,
            memberships,
            comparison,
        })
    };
    match run() {
        Ok(result) => Report::finished(cfg, result, true),
        Err(e) => Report::failed(cfg, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{EXIT_GATE, EXIT_INPUT, EXIT_PASS};

    fn cfg(command: &str) -> RunConfig {
        RunConfig::new(command)
    }

    #[test]
    fn coarse_grid_is_a_gate_failure() {
        let mut c = cfg("invariant");
        c.model.grid = [4, 8];
        let r = cmd_invariant(c);
        assert_eq!(r.exit_code(), EXIT_GATE);
        assert!(matches!(&r.outcome, Err(CliError::Gate(m)) if m.contains("flux")));
    }

    #[test]
    fn bad_model_is_an_input_error() {
        let mut c = cfg("invariant");
        c.model.n_dimers = 9;
        assert_eq!(cmd_invariant(c).exit_code(), EXIT_INPUT);
        let mut c = cfg("invariant");
        c.model.grid = [4, 2];
        assert_eq!(cmd_invariant(c).exit_code(), EXIT_INPUT);
    }

    #[test]
    fn constant_field_has_degree_zero() {
        let mut c = cfg("invariant");
        c.variant = dimer::ModelVariant::ConstantField;
        c.model.grid = [16, 32];
        let r = cmd_invariant(c);
        assert_eq!(r.result().unwrap()["degree"], 0);
        assert_eq!(r.exit_code(), EXIT_PASS);
    }

    #[test]
    fn supernatural_report() {
        let args = SupernaturalArgs {
            types: vec![2, 6, 12],
            tail: Some(2),
            rationals: vec!["5/12".into(), "1/9".into()],
            compare: Some("2^inf".into()),
            k_max: 3,
            ..SupernaturalArgs::default()
        };
        let r = cmd_supernatural(cfg("supernatural"), &args);
        assert_eq!(r.exit_code(), EXIT_PASS);
        let v = r.result().unwrap();
        assert_eq!(v["a"], "2^∞·3");
        assert_eq!(v["memberships"][0]["contains"], true);
        assert_eq!(v["memberships"][1]["contains"], false);
        assert_eq!(v["comparison"]["c"], "1");
        assert_eq!(v["comparison"]["d"], "3");
        let bad = SupernaturalArgs {
            types: vec![2, 5],
            k_max: 1,
            ..SupernaturalArgs::default()
        };
        assert_eq!(
            cmd_supernatural(cfg("supernatural"), &bad).exit_code(),
            EXIT_INPUT
        );
    }

    #[test]
    fn report_document_shape() {
        let r = cmd_supernatural(
            cfg("supernatural"),
            &SupernaturalArgs {
                number: Some("2^inf".into()),
                k_max: 2,
                ..SupernaturalArgs::default()
            },
        );
        let doc: serde_json::Value = serde_json::from_str(&r.to_json(None)).unwrap();
        assert_eq!(doc["command"], "supernatural");
        assert_eq!(doc["config"]["seed"], crate::config::DEFAULT_SEED);
        assert!(doc.get("timestamp_unix").is_none());
        let doc: serde_json::Value = serde_json::from_str(&r.to_json(Some(7))).unwrap();
        assert_eq!(doc["timestamp_unix"], 7);
    }
}
