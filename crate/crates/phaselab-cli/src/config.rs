//! Run configuration: defaults, an optional JSON file, then command-line
//! overrides, in that order of precedence.

use std::path::{Path, PathBuf};

use phaselab::dimer::{BoundaryClosure, ModelConfig, ModelVariant};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 20_240_229;
pub const DEFAULT_INTERTWINER_SAMPLES: usize = 8;
pub const TOL_SCALE_VAR: &str = "PHASELAB_TOL_SCALE";

/// Numerical gate thresholds. All of them scale with `PHASELAB_TOL_SCALE`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest admissible 1 − |⟨projected ray, Bloch ray⟩|.
    pub bloch: f64,
    /// Largest admissible weight outside span{Ω_R, σˣ₁Ω_R}.
    pub projection: f64,
    pub intertwiner: f64,
    /// y_overlap must stay above 1 − this.
    pub y_overlap_deficit: f64,
    pub metric: f64,
    pub gap_trace_norm: f64,
    pub partial_trace: f64,
    pub gns: f64,
    pub cocycle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            bloch: 1e-8,
            projection: 1e-6,
            intertwiner: 1e-8,
            y_overlap_deficit: 1e-2,
            metric: 1e-10,
            gap_trace_norm: 1e-9,
            partial_trace: 1e-11,
            gns: 1e-9,
            cocycle: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn scaled(self, s: f64) -> Self {
        Self {
            bloch: self.bloch * s,
            projection: self.projection * s,
            intertwiner: self.intertwiner * s,
            y_overlap_deficit: self.y_overlap_deficit * s,
            metric: self.metric * s,
            gap_trace_norm: self.gap_trace_norm * s,
            partial_trace: self.partial_trace * s,
            gns: self.gns * s,
            cocycle: self.cocycle * s,
        }
    }
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelConfig>,
    pub variant: Option<ModelVariant>,
    pub closure: Option<BoundaryClosure>,
    pub intertwiner_samples: Option<usize>,
    pub seed: Option<u64>,
    pub tolerances: Option<Tolerances>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid: Option<[usize; 2]>,
    pub n_dimers: Option<usize>,
    pub epsilon: Option<f64>,
    pub variant: Option<ModelVariant>,
    pub closure: Option<BoundaryClosure>,
    pub intertwiner_samples: Option<usize>,
    pub input: Option<String>,
}

/// Fully resolved configuration, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelConfig,
    pub variant: ModelVariant,
    pub closure: BoundaryClosure,
    pub intertwiner_samples: usize,
    pub seed: u64,
    pub tol_scale: f64,
    /// Tolerances after scaling.
    pub tolerances: Tolerances,
    pub input: Option<String>,
    pub out: Option<String>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            model: ModelConfig::default(),
            variant: ModelVariant::default(),
            closure: BoundaryClosure::default(),
            intertwiner_samples: DEFAULT_INTERTWINER_SAMPLES,
            seed: DEFAULT_SEED,
            tol_scale: 1.0,
            tolerances: Tolerances::default(),
            input: None,
            out: None,
        }
    }

    /// Resolves defaults, the config file, `PHASELAB_TOL_SCALE` (given as
    /// `tol_scale`) and command-line overrides.
    pub fn resolve(
        command: &str,
        o: &Overrides,
        tol_scale: Option<&str>,
    ) -> Result<Self, CliError> {
        let mut cfg = Self::new(command);
        if let Some(path) = &o.config {
            let file = FileConfig::load(path)?;
            cfg.model = file.model.unwrap_or(cfg.model);
            cfg.variant = file.variant.unwrap_or(cfg.variant);
            cfg.closure = file.closure.unwrap_or(cfg.closure);
            cfg.intertwiner_samples = file.intertwiner_samples.unwrap_or(cfg.intertwiner_samples);
            cfg.seed = file.seed.unwrap_or(cfg.seed);
            cfg.tolerances = file.tolerances.unwrap_or(cfg.tolerances);
        }
        if let Some(g) = o.grid {
            cfg.model.grid = g;
        }
        cfg.model.n_dimers = o.n_dimers.unwrap_or(cfg.model.n_dimers);
        cfg.model.epsilon = o.epsilon.unwrap_or(cfg.model.epsilon);
        cfg.variant = o.variant.unwrap_or(cfg.variant);
        cfg.closure = o.closure.unwrap_or(cfg.closure);
        cfg.intertwiner_samples = o.intertwiner_samples.unwrap_or(cfg.intertwiner_samples);
        cfg.seed = o.seed.unwrap_or(cfg.seed);
        if let Some(text) = tol_scale {
            let s: f64 = text.trim().parse().map_err(|_| {
                CliError::Input(format!("{TOL_SCALE_VAR}={text:?} is not a number"))
            })?;
            if !(s.is_finite() && s > 0.0) {
                return Err(CliError::Input(format!(
                    "{TOL_SCALE_VAR} must be positive, got {s}"
                )));
            }
            cfg.tol_scale = s;
        }
        cfg.tolerances = cfg.tolerances.scaled(cfg.tol_scale);
        cfg.input = o.input.clone();
        cfg.out = o.out.as_ref().map(|p| p.display().to_string());
        Ok(cfg)
    }
}

/// Parses `KxM`.
pub fn parse_grid(text: &str) -> Result<[usize; 2], String> {
    let (k, m) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected KxM, got {text:?}"))?;
    let k = k.trim().parse().map_err(|_| format!("bad K in {text:?}"))?;
    let m = m.trim().parse().map_err(|_| format!("bad M in {text:?}"))?;
    Ok([k, m])
}
