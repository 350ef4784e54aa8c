use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use streamsolve::bench::{emit, run_benchmark, BenchConfig, OutputFormat};
use streamsolve::linalg::io::{write_matrix_market, MmSymmetry};
use streamsolve::solvers::{Method, PcType, SolveMode};
use streamsolve::stencil::{build_laplacian, StencilSpec};
use streamsolve::{trace, Error};

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Cg,
    Tfqmr,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Async,
    Sync,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PcArg {
    Jacobi,
    None,
}

/// Runs one Laplacian solve configuration and reports timings.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, value_enum, default_value = "cg")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "async")]
    mode: ModeArg,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    points: usize,
    /// Cells per dimension, N or N,N or N,N,N. A single value is used for
    /// every dimension.
    #[arg(long, default_value = "16")]
    grid: String,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmups: usize,
    /// Simulated launch latency per task, in microseconds.
    #[arg(long = "delay-us", default_value_t = 0)]
    delay_us: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-it", default_value_t = 20)]
    max_it: usize,
    #[arg(long, value_enum, default_value = "jacobi")]
    pc: PcArg,
    /// Output file, standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Also write the operator in Matrix Market format.
    #[arg(long = "emit-matrix")]
    emit_matrix: Option<PathBuf>,
    /// Write the task trace of the last repetition as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn parse_grid(s: &str, dim: usize) -> Result<Vec<usize>, Error> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad grid extent {p:?}")))
        })
        .collect::<Result<_, _>>()?;
    match parts.len() {
        1 => Ok(vec![parts[0]; dim]),
        n if n == dim => Ok(parts),
        n => Err(Error::Config(format!("{n} grid extents for dimension {dim}"))),
    }
}

fn run(args: Args) -> Result<(), Error> {
    let grid = parse_grid(&args.grid, args.dim)?;
    let stencil = StencilSpec::new(args.dim, args.points, &grid)?;
    let cfg = BenchConfig {
        solver: match args.solver {
            SolverArg::Cg => Method::Cg,
            SolverArg::Tfqmr => Method::Tfqmr,
        },
        mode: match args.mode {
            ModeArg::Async => SolveMode::Async,
            ModeArg::Sync => SolveMode::SyncBaseline,
        },
        stencil: stencil.clone(),
        warmups: args.warmups,
        reps: args.reps,
        delay_us: args.delay_us,
        seed: args.seed,
        max_it: args.max_it,
        pc: match args.pc {
            PcArg::Jacobi => PcType::Jacobi,
            PcArg::None => PcType::None,
        },
        trace: args.trace.is_some(),
    };
    if let Some(path) = &args.emit_matrix {
        let (a, _) = build_laplacian(&stencil)?;
        write_matrix_market(&a, MmSymmetry::Symmetric, BufWriter::new(File::create(path)?))?;
    }
    let run = run_benchmark(&cfg)?;
    if let Some(path) = &args.trace {
        let mut w = BufWriter::new(File::create(path)?);
        trace::write_jsonl(&run.trace, &mut w)?;
        w.flush()?;
    }
    let format = match args.format {
        FormatArg::Csv => OutputFormat::Csv,
        FormatArg::Json => OutputFormat::Json,
    };
    let results = [run.result];
    match &args.out {
        Some(path) => emit(&results, format, BufWriter::new(File::create(path)?)),
        None => emit(&results, format, io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("streamsolve-bench: {e}");
            match e {
                Error::FingerprintMismatch { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
