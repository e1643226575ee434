//! `pairwise-closure`: closed pairwise testing from the command line.
//!
//! Every command reads one JSON document (`--input`, a path, `-` for
//! stdin, or inline JSON) and writes either a JSON envelope or CSV.
//! Exit status is 0 on success, 2 for invalid input and 3 when a numerical
//! routine fails to converge.

mod commands;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use commands::Ctx;
use output::{write_csv, write_json, Meta, Output};

const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser)]
#[command(name = "pairwise-closure", version, about = "Closed testing of all pairwise comparisons in multi-arm trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Input JSON: a file path, `-` for stdin, or an inline document.
    #[arg(long, short, global = true)]
    input: Option<String>,

    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Seed for lattice shifts and simulation streams [default: 20240601].
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Target absolute error of each multivariate normal probability.
    #[arg(long, global = true, default_value_t = 1e-5)]
    accuracy: f64,

    /// Worker threads; all cores when absent.
    #[arg(long, global = true, env = "PAIRWISE_CLOSURE_THREADS")]
    threads: Option<usize>,

    /// Omit the timestamp so repeated runs are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Global critical value, power, sample size and LFC checks.
    Design,
    /// Critical values of every intersection hypothesis.
    CriticalValues,
    /// Closed test of observed means or z-statistics.
    Analyze {
        /// Group-sequential data with error-spending boundaries.
        #[arg(long)]
        staged: bool,
    },
    /// Group-sequential boundaries for every intersection.
    GsBoundaries,
    /// Flexible multi-stage test with inverse-normal combination.
    Combine,
    /// Operating characteristics by simulation.
    Simulate {
        /// Replicate the published simulation table; the input, if any,
        /// overrides its options.
        #[arg(long)]
        table1: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::CriticalValues => "critical-values",
            Command::Analyze { staged: false } => "analyze",
            Command::Analyze { staged: true } => "analyze-staged",
            Command::GsBoundaries => "gs-boundaries",
            Command::Combine => "combine",
            Command::Simulate { table1: false } => "simulate",
            Command::Simulate { table1: true } => "simulate-table1",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Core(pairwise_closure::Error),
    Io(io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Input(_) | CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "invalid_input",
            CliError::Core(e) if e.is_numeric() => "numerical",
            CliError::Core(_) => "invalid_input",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Input(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::Io(e) => e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

fn read_input(spec: Option<&str>, required: bool) -> Result<Value, CliError> {
    let text = match spec {
        None if required => return Err(CliError::Input("--input is required for this command".into())),
        None => return Ok(Value::Null),
        Some("-") => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
        Some(s) if s.trim_start().starts_with('{') => s.to_string(),
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {path}: {e}")))?,
    };
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("malformed JSON: {e}")))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    if !(cli.accuracy > 0.0 && cli.accuracy < 1.0) {
        return Err(CliError::Input(format!("--accuracy {} outside (0, 1)", cli.accuracy)));
    }
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        seed_given: cli.seed.is_some(),
        accuracy: cli.accuracy,
    };
    let table1 = matches!(cli.command, Command::Simulate { table1: true });
    let input = read_input(cli.input.as_deref(), !table1)?;
    let Output { mut result, table } = match cli.command {
        Command::Design => commands::design(&input, &ctx)?,
        Command::CriticalValues => commands::critical_values(&input, &ctx)?,
        Command::Analyze { staged: false } => commands::analyze(&input, &ctx)?,
        Command::Analyze { staged: true } => commands::analyze_staged(&input, &ctx)?,
        Command::GsBoundaries => commands::gs_boundaries(&input, &ctx)?,
        Command::Combine => commands::combine(&input, &ctx)?,
        Command::Simulate { table1: false } => commands::simulate(&input, &ctx)?,
        Command::Simulate { table1: true } => commands::table1(&input, &ctx)?,
    };
    // simulations carry their own seed, which may come from the input
    let seed = result.get("seed").and_then(Value::as_u64).or_else(|| {
        result.get("options").and_then(|o| o.get("seed")).and_then(Value::as_u64)
    });
    let meta = Meta {
        command: cli.command.name(),
        seed: seed.unwrap_or(ctx.seed),
        accuracy: ctx.accuracy,
        deterministic: cli.deterministic,
    };

    let mut out: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match cli.format {
        Format::Json => write_json(&mut out, &meta, result.take())?,
        Format::Csv => write_csv(&mut out, &meta, &table)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.message() } });
            eprintln!("{body}");
            ExitCode::from(e.exit_code())
        }
    }
}
