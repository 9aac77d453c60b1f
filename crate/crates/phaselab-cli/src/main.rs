use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use phaselab::dimer::{BoundaryClosure, ModelVariant};
use phaselab::homotopy::BundledLoop;
use phaselab_cli::commands::{self, LoopSource, SupernaturalArgs};
use phaselab_cli::config::{self, Overrides, RunConfig};
use phaselab_cli::selfcheck::{Suite, SuiteSizes};
use phaselab_cli::{CliError, Report, EXIT_INPUT};

#[derive(Parser)]
#[command(
    name = "phaselab",
    version,
    about = "Phase invariant of a parametrized dimer chain and supporting checks"
)]
struct Cli {
    /// JSON file with model, seed and tolerance settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sphere grid as KxM (latitudes x longitudes).
    #[arg(long, global = true, value_parser = config::parse_grid)]
    grid: Option<[usize; 2]>,
    #[arg(long, global = true)]
    n_dimers: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Omit the timestamp so identical runs give identical reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Conjugated,
    ConstantField,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClosureArg {
    Closed,
    Open,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinArg {
    N2,
    N3,
}

impl From<BuiltinArg> for BundledLoop {
    fn from(b: BuiltinArg) -> Self {
        match b {
            BuiltinArg::N2 => BundledLoop::N2,
            BuiltinArg::N3 => BundledLoop::N3,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Lattice degree of the projected equator map, checked against the Bloch bundle.
    Invariant {
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long, value_enum)]
        closure: Option<ClosureArg>,
        /// Grid points at which the intertwiner residual is evaluated.
        #[arg(long)]
        intertwiner_samples: Option<usize>,
    },
    /// Contract a based loop of states and verify the homotopy sheet.
    ContractLoop {
        /// Loop file ({"n": .., "samples": [matrix, ..]}).
        #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
        path: Option<PathBuf>,
        #[arg(long, value_enum)]
        builtin: Option<BuiltinArg>,
        /// Also write the full sheet to this file.
        #[arg(long)]
        sheet: Option<PathBuf>,
    },
    /// Print a bundled loop as a loop file.
    ExportLoop {
        #[arg(long, value_enum)]
        builtin: BuiltinArg,
    },
    /// Seeded property suites: metrics, partial trace, GNS, cocycles, supernatural numbers.
    Selfcheck {
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Suite>,
    },
    /// Supernatural number from a type sequence or a product, with its homotopy table.
    Supernatural {
        /// Divisibility chain such as 2,6,12.
        #[arg(long, value_delimiter = ',')]
        types: Vec<u64>,
        /// Continue the chain forever with this ratio.
        #[arg(long)]
        tail: Option<u64>,
        /// Product such as 2^inf*3.
        #[arg(long)]
        number: Option<String>,
        /// Rational p/q to test for membership in Q(a); repeatable.
        #[arg(long = "rational")]
        rationals: Vec<String>,
        /// Second supernatural number to test for stable isomorphism.
        #[arg(long)]
        compare: Option<String>,
        #[arg(long, default_value_t = 4)]
        k_max: usize,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let mut overrides = Overrides {
        config: cli.config.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        grid: cli.grid,
        n_dimers: cli.n_dimers,
        epsilon: cli.epsilon,
        ..Overrides::default()
    };
    let name = match &cli.command {
        Command::Invariant {
            variant,
            closure,
            intertwiner_samples,
        } => {
            overrides.variant = variant.map(|v| match v {
                VariantArg::Standard => ModelVariant::Standard,
                VariantArg::Conjugated => ModelVariant::Conjugated,
                VariantArg::ConstantField => ModelVariant::ConstantField,
            });
            overrides.closure = closure.map(|c| match c {
                ClosureArg::Closed => BoundaryClosure::Closed,
                ClosureArg::Open => BoundaryClosure::Open,
            });
            overrides.intertwiner_samples = *intertwiner_samples;
            "invariant"
        }
        Command::ContractLoop { path, builtin, .. } => {
            overrides.input = match (path, builtin) {
                (Some(p), _) => Some(p.display().to_string()),
                (None, Some(b)) => Some(format!(
                    "builtin:{}",
                    b.to_possible_value().expect("named").get_name()
                )),
                (None, None) => None,
            };
            "contract-loop"
        }
        Command::ExportLoop { builtin } => {
            let text = commands::export_loop((*builtin).into()) + "\n";
            return match emit(&text, cli.out.as_ref()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            };
        }
        Command::Selfcheck { .. } => "selfcheck",
        Command::Supernatural { .. } => "supernatural",
    };

    let tol_scale = std::env::var(config::TOL_SCALE_VAR).ok();
    let report = match RunConfig::resolve(name, &overrides, tol_scale.as_deref()) {
        Err(e) => Report::failed(RunConfig::new(name), e),
        Ok(cfg) => match &cli.command {
            Command::Invariant { .. } => commands::cmd_invariant(cfg),
            Command::ContractLoop {
                path,
                builtin,
                sheet,
            } => {
                let source = match (path, builtin) {
                    (Some(p), _) => LoopSource::File(p.clone()),
                    (None, Some(b)) => LoopSource::Builtin((*b).into()),
                    (None, None) => unreachable!("clap requires a path or --builtin"),
                };
                commands::cmd_contract_loop(cfg, &source, sheet.as_deref())
            }
            Command::Selfcheck { inject_fault } => {
                commands::cmd_selfcheck(cfg, SuiteSizes::default(), *inject_fault)
            }
            Command::Supernatural {
                types,
                tail,
                number,
                rationals,
                compare,
                k_max,
            } => commands::cmd_supernatural(
                cfg,
                &SupernaturalArgs {
                    types: types.clone(),
                    tail: *tail,
                    number: number.clone(),
                    rationals: rationals.clone(),
                    compare: compare.clone(),
                    k_max: *k_max,
                },
            ),
            Command::ExportLoop { .. } => unreachable!("handled above"),
        },
    };

    let timestamp = if cli.no_timestamp {
        None
    } else {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    };
    if let Err(CliError::Input(m) | CliError::Gate(m)) = &report.outcome {
        eprintln!("error: {m}");
    }
    let code = match emit(&report.to_json(timestamp), cli.out.as_ref()) {
        Ok(()) => report.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
