mod config;
mod experiments;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use specpol::edmd::resdmd_grid;
use specpol::io::{residual_csv, write_atomic, GramFile};
use specpol::residual::FieldMeta;
use specpol::spectral::reclassify;

use config::{Config, ConfigError, GridArgs};
use experiments::ReportFile;

#[derive(Parser)]
#[command(name = "specpol", version, about = "Residual-controlled spectral analysis of Koopman and transfer operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        /// TOML config, or a `meta.json` from an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: Box<Config>,
    },
    /// Residual field from a saved Gram triple.
    Grid {
        #[arg(long)]
        gram: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Re-threshold an `eigenvalues.json` report.
    Classify {
        #[arg(long)]
        eigenvalues: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pair consecutive rows of a trajectory CSV.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Writes the pairs as CSV with columns `x0.., y0..`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(ConfigError),
    Lib(specpol::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<specpol::Error> for Failure {
    fn from(e: specpol::Error) -> Self {
        Self::Lib(e)
    }
}

impl Failure {
    fn report(&self) -> (u8, serde_json::Value) {
        use specpol::Error as E;
        match self {
            Self::Config(e) => (
                2,
                json!({ "error": { "kind": "config", "field": e.field, "message": e.message } }),
            ),
            Self::Lib(e) => {
                let (code, kind) = match e {
                    E::Domain(_)
                    | E::UnsupportedMap(_)
                    | E::Parse { .. }
                    | E::TooFewSamples { .. }
                    | E::Shape(_)
                    | E::Io(_)
                    | E::Json(_) => (2, "input"),
                    _ => (3, "numerical"),
                };
                let mut v = json!({ "error": { "kind": kind, "message": e.to_string() } });
                if let E::Parse { line, column, .. } = e {
                    v["error"]["line"] = json!(line);
                    v["error"]["column"] = json!(column);
                }
                (code, v)
            }
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SPECPOL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError {
            field: "SPECPOL_THREADS".into(),
            message: format!("{raw:?} is not a positive integer"),
        })?;
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Stdout write that tolerates a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json(v: &serde_json::Value) {
    emit(&(serde_json::to_string_pretty(v).expect("JSON value serializes") + "\n"));
}

fn execute(command: Command) -> Result<(), Failure> {
    configure_threads()?;
    match command {
        Command::Run { config, flags } => {
            let base = match config {
                Some(path) => Config::load(&path)?,
                None => Config::default(),
            };
            let cfg = base.overlay(&flags).resolve()?;
            print_json(&experiments::run(&cfg)?);
        }
        Command::Grid { gram, out, grid } => {
            let spec = grid.spec();
            spec.validate().map_err(|e| ConfigError {
                field: "grid".into(),
                message: e.to_string(),
            })?;
            let text = std::fs::read_to_string(&gram).map_err(specpol::Error::from)?;
            let file: GramFile = serde_json::from_str(&text).map_err(specpol::Error::from)?;
            let gt = file.into_triple()?;
            let meta = FieldMeta {
                n: gt.n(),
                method: "resdmd".into(),
                ..Default::default()
            };
            let field = resdmd_grid(&gt, spec.points(), meta);
            write_atomic(&out, &residual_csv(&field)?)?;
            print_json(&json!({ "points": field.grid.len(), "out": out }));
        }
        Command::Classify {
            eigenvalues,
            epsilon,
            out,
        } => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(ConfigError {
                    field: "epsilon".into(),
                    message: format!("{epsilon} must be positive"),
                }
                .into());
            }
            let text = std::fs::read_to_string(&eigenvalues).map_err(specpol::Error::from)?;
            let mut file: ReportFile = serde_json::from_str(&text).map_err(specpol::Error::from)?;
            file.report = reclassify(&file.report, epsilon);
            let mut text = serde_json::to_string_pretty(&file).map_err(specpol::Error::from)?;
            text.push('\n');
            match out {
                Some(path) => write_atomic(&path, text.as_bytes())?,
                None => emit(&text),
            }
        }
        Command::Ingest { input, stride, out } => {
            if stride == 0 {
                return Err(ConfigError {
                    field: "stride".into(),
                    message: "must be positive".into(),
                }
                .into());
            }
            let snaps = specpol::dictionaries::ingest_trajectory(&input, stride)?;
            if let Some(path) = &out {
                write_atomic(path, &pairs_csv(&snaps))?;
            }
            print_json(&json!({ "pairs": snaps.len(), "dim": snaps.dim(), "stride": stride, "out": out }));
        }
    }
    Ok(())
}

fn pairs_csv(snaps: &specpol::dictionaries::SnapshotSet) -> Vec<u8> {
    let d = snaps.dim();
    let mut text: String = (0..d)
        .map(|k| format!("x{k}"))
        .chain((0..d).map(|k| format!("y{k}")))
        .collect::<Vec<_>>()
        .join(",");
    text.push('\n');
    for i in 0..snaps.len() {
        let row: Vec<String> = (0..d)
            .map(|k| snaps.x[(i, k)].re.to_string())
            .chain((0..d).map(|k| snaps.y[(i, k)].re.to_string()))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text.into_bytes()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, v) = f.report();
            eprintln!("{v}");
            ExitCode::from(code)
        }
    }
}
