use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phasepart::cli::config::{parse_config, RunConfig};
use phasepart::cli::raster::read_pgm;
use phasepart::cli::report::write_report;
use phasepart::optimizer::{run_continuation, Domain};
use phasepart::{sharp_energy, Anisotropy, AnisotropyKind, Boundary, DoubleWell, Profile};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Phase-field solver for minimal anisotropic partitions and isoperimetric
/// problems in two dimensions.
///
/// The output directory of `run` can be overridden with the
/// PHASEPART_OUTPUT_DIR environment variable.
#[derive(Parser)]
#[command(name = "phasepart", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the continuation described by a JSON config and write artifacts.
    Run { config: PathBuf },
    /// Parse and validate a config, then print it with defaults filled.
    Validate { config: PathBuf },
    /// Evaluate reference quantities.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
    /// Sharp interface energy (perimeter scale) of a PGM label image.
    Sharp {
        #[arg(long)]
        labels: PathBuf,
        /// Anisotropy as JSON (`{"kind": "lp", "p": 3}`) or a bare name
        /// (`euclidean`, `l1`).
        #[arg(long, default_value = "euclidean")]
        aniso: String,
        #[arg(long)]
        periodic: bool,
        /// Side length of the square the image covers.
        #[arg(long, default_value_t = 1.0)]
        side: f64,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// One-dimensional optimal profile energy for the quartic well.
    Profile {
        #[arg(long, default_value_t = 1.0)]
        z: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(e.to_string()))
}

fn parse_aniso(spec: &str) -> Result<AnisotropyKind, Failure> {
    let kind = match spec.trim() {
        "l1" => AnisotropyKind::l1(phasepart::anisotropy::DEFAULT_DELTA),
        s if s.starts_with('{') => serde_json::from_str(s).map_err(|e| Failure::Config(format!("--aniso: {e}")))?,
        s => serde_json::from_value(serde_json::json!({ "kind": s }))
            .map_err(|e| Failure::Config(format!("--aniso: {e}")))?,
    };
    Ok(kind)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let text = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("{text}");
        }
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let problem = cfg.problem(base).map_err(|e| Failure::Config(e.to_string()))?;
            let schedule = cfg.schedule();
            let report = run_continuation(&schedule, &problem).map_err(|e| Failure::Runtime(e.to_string()))?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            for s in &report.stages {
                println!(
                    "stage {}  N={}  eps={:.6}  iters={}  energy={:.6}  ({:.1}s)",
                    s.stage, s.n, s.eps, s.iterations, s.energy_scaled, s.wall_time_s
                );
            }
            let dir = cfg.output_dir();
            let written = write_report(&report, &cfg, &dir).map_err(|e| Failure::Runtime(e.to_string()))?;
            for p in written {
                println!("wrote {}", p.display());
            }
        }
        Command::Oracle {
            which: Oracle::Profile { z, eta },
        } => {
            let p = Profile::new(z, eta, DoubleWell::Quartic {}).map_err(|e| Failure::Config(e.to_string()))?;
            println!("{:.12}", phasepart::profile_energy_1d(&p));
        }
        Command::Sharp {
            labels,
            aniso,
            periodic,
            side,
        } => {
            let kind = parse_aniso(&aniso)?;
            let a = Anisotropy::new(kind).map_err(|e| Failure::Config(e.to_string()))?;
            let img = read_pgm(&labels).map_err(|e| Failure::Runtime(e.to_string()))?;
            let mut domain = Domain::unit_square(if periodic {
                Boundary::Periodic
            } else {
                Boundary::Neumann
            });
            domain.side = side;
            let l = img.to_labels(&domain).map_err(|e| Failure::Runtime(e.to_string()))?;
            let e = sharp_energy(&l, &a, DoubleWell::Quartic {}, true).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("{e:.12}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
