//! Benchmark harness: warm-up, timing loop, min-time statistic and output.
//!
//! One [`BenchConfig`] is one run. Each repetition resets the right-hand
//! side and the iterate, drains every context and drops cached device
//! copies before the timer starts; the timer covers the solve plus a final
//! drain. After every repetition the residual fingerprint is compared with
//! the first one.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseVector};
use crate::memory::MemType;
use crate::runtime::{Runtime, RuntimeConfig};
use crate::solvers::{solve, Method, PcType, SolveMode, SolveReport, SolverConfig};
use crate::stencil::{build_laplacian, StencilSpec};
use crate::trace::TraceEntry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub solver: Method,
    pub mode: SolveMode,
    pub stencil: StencilSpec,
    pub warmups: usize,
    pub reps: usize,
    /// Simulated launch latency added to every task, in microseconds.
    pub delay_us: u64,
    pub seed: u64,
    pub max_it: usize,
    pub pc: PcType,
    /// Keep the task trace of the last repetition.
    pub trace: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            solver: Method::Cg,
            mode: SolveMode::Async,
            stencil: StencilSpec {
                dim: 2,
                points: 5,
                grid: vec![16, 16],
            },
            warmups: 1,
            reps: 10,
            delay_us: 0,
            seed: 0,
            max_it: 20,
            pc: PcType::Jacobi,
            trace: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.max_it == 0 {
            return Err(Error::Config("max_it must be at least 1".into()));
        }
        self.stencil.validate()
    }

    /// Async runs keep data in the simulated device space; the synchronous
    /// baseline works on host memory and never copies.
    pub fn runtime_config(&self) -> RuntimeConfig {
        RuntimeConfig {
            kernel_space: match self.mode {
                SolveMode::Async => MemType::SimDevice,
                SolveMode::SyncBaseline => MemType::Host,
            },
            launch_latency: Duration::from_micros(self.delay_us),
            seed: self.seed,
            trace: self.trace,
            record_edges: false,
            ..RuntimeConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub solver: Method,
    pub mode: SolveMode,
    pub dim: usize,
    pub points: usize,
    pub grid: String,
    pub times: Vec<f64>,
    pub min_s: f64,
    pub avg_s: f64,
    pub max_s: f64,
    pub iterations: usize,
    pub flops: u64,
    pub flops_per_s: f64,
    pub nnz: usize,
    pub dof: usize,
    pub dof_per_s: f64,
    pub bytes_per_iter: f64,
    pub h2d: u64,
    pub d2h: u64,
    pub residual_fingerprint: String,
}

/// Result of [`run_benchmark`] together with the trace of its last rep.
pub struct BenchRun {
    pub result: BenchResult,
    pub trace: Vec<TraceEntry>,
}

/// Problem state shared by all repetitions of one run.
pub struct BenchState {
    pub rt: Runtime,
    pub a: CsrMatrix,
    pub b: DenseVector,
    pub x: DenseVector,
    b0: Vec<f64>,
    reference: Option<String>,
}

impl BenchState {
    pub fn new(cfg: &BenchConfig) -> Result<BenchState> {
        cfg.validate()?;
        let (a, _) = build_laplacian(&cfg.stencil)?;
        let rt = Runtime::new(cfg.runtime_config());
        let b0 = rhs(cfg.seed, a.n_rows());
        Ok(BenchState {
            b: DenseVector::from_values(&rt, &b0),
            x: DenseVector::zeros(&rt, a.n_rows()),
            rt,
            a,
            b0,
            reference: None,
        })
    }

    /// Restores b and x, drains every context, drops device copies and
    /// resets the counters.
    pub fn pre_solve(&self) -> Result<()> {
        self.rt.synchronize_all();
        self.b.set_values(&self.b0)?;
        self.x.set_values(&vec![0.0; self.x.len()])?;
        self.b.invalidate_device_copy();
        self.x.invalidate_device_copy();
        self.rt.synchronize_all();
        self.rt.reset_stats();
        self.rt.clear_trace();
        self.rt.clear_released_allocations();
        Ok(())
    }

    /// Checks the fingerprint of `report` against the first repetition.
    pub fn post_solve(&mut self, rep: usize, report: &SolveReport) -> Result<String> {
        let got = fingerprint(report, &self.x)?;
        match &self.reference {
            None => self.reference = Some(got.clone()),
            Some(expected) if *expected != got => {
                return Err(Error::FingerprintMismatch {
                    rep,
                    expected: expected.clone(),
                    got,
                })
            }
            Some(_) => {}
        }
        Ok(got)
    }
}

/// Deterministic right-hand side in [-1, 1).
pub fn rhs(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// SHA-256 over the bits of the residual history and the final iterate.
pub fn fingerprint(report: &SolveReport, x: &DenseVector) -> Result<String> {
    let mut h = Sha256::new();
    for v in report.residual_history()? {
        h.update(v.to_bits().to_le_bytes());
    }
    for v in x.to_vec()? {
        h.update(v.to_bits().to_le_bytes());
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchRun> {
    let mut st = BenchState::new(cfg)?;
    let solver = SolverConfig {
        method: cfg.solver,
        mode: cfg.mode,
        max_it: cfg.max_it,
        pc: cfg.pc,
    };
    let mut times = Vec::with_capacity(cfg.reps);
    let mut first = None;
    let mut fp = String::new();
    for rep in 0..cfg.warmups + cfg.reps {
        st.pre_solve()?;
        let begin = Instant::now();
        let report = solve(&st.a, &st.b, &st.x, &solver)?;
        st.rt.synchronize_all();
        let elapsed = begin.elapsed().as_secs_f64();
        let log = st.rt.flop_log();
        fp = st.post_solve(rep, &report)?;
        if rep >= cfg.warmups {
            times.push(elapsed);
            if first.is_none() {
                first = Some((log, report.iterations, report.loop_log.total_bytes()));
            }
        }
    }
    let (log, iterations, loop_bytes) = first.expect("at least one timed rep");
    let min_s = times.iter().copied().fold(f64::INFINITY, f64::min);
    let max_s = times.iter().copied().fold(0.0, f64::max);
    let avg_s = times.iter().sum::<f64>() / times.len() as f64;
    let dof = st.a.n_rows();
    let result = BenchResult {
        solver: cfg.solver,
        mode: cfg.mode,
        dim: cfg.stencil.dim,
        points: cfg.stencil.points,
        grid: cfg.stencil.grid_label(),
        min_s,
        avg_s,
        max_s,
        iterations,
        flops: log.total_flops,
        flops_per_s: log.total_flops as f64 / min_s,
        nnz: st.a.nnz(),
        dof,
        dof_per_s: dof as f64 / min_s,
        bytes_per_iter: loop_bytes as f64 / iterations.max(1) as f64,
        h2d: log.h2d,
        d2h: log.d2h,
        residual_fingerprint: fp,
        times,
    };
    Ok(BenchRun {
        result,
        trace: st.rt.trace(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// One CSV line. `ratio` is async min-time over sync min-time for the
/// matching configuration, when both modes are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub solver: Method,
    pub mode: SolveMode,
    pub dim: usize,
    pub points: usize,
    pub grid: String,
    pub dof: usize,
    pub nnz: usize,
    pub min_s: f64,
    pub avg_s: f64,
    pub max_s: f64,
    pub flops: u64,
    pub flops_per_s: f64,
    pub dof_per_s: f64,
    pub h2d: u64,
    pub d2h: u64,
    pub bytes_per_iter: f64,
    pub ratio: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 17] = [
    "solver",
    "mode",
    "dim",
    "points",
    "grid",
    "dof",
    "nnz",
    "min_s",
    "avg_s",
    "max_s",
    "flops",
    "flops_per_s",
    "dof_per_s",
    "h2d",
    "d2h",
    "bytes_per_iter",
    "ratio",
];

pub fn csv_rows(results: &[BenchResult]) -> Vec<CsvRow> {
    results
        .iter()
        .map(|r| {
            let partner = results.iter().find(|o| {
                o.mode != r.mode
                    && o.solver == r.solver
                    && o.dim == r.dim
                    && o.points == r.points
                    && o.grid == r.grid
            });
            let ratio = partner.map(|o| match r.mode {
                SolveMode::Async => r.min_s / o.min_s,
                SolveMode::SyncBaseline => o.min_s / r.min_s,
            });
            CsvRow {
                solver: r.solver,
                mode: r.mode,
                dim: r.dim,
                points: r.points,
                grid: r.grid.clone(),
                dof: r.dof,
                nnz: r.nnz,
                min_s: r.min_s,
                avg_s: r.avg_s,
                max_s: r.max_s,
                flops: r.flops,
                flops_per_s: r.flops_per_s,
                dof_per_s: r.dof_per_s,
                h2d: r.h2d,
                d2h: r.d2h,
                bytes_per_iter: r.bytes_per_iter,
                ratio,
            }
        })
        .collect()
}

pub fn emit<W: Write>(results: &[BenchResult], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, results).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            let io = |e: csv::Error| Error::Io(e.to_string());
            w.write_record(CSV_COLUMNS).map_err(io)?;
            for row in csv_rows(results) {
                w.serialize(row).map_err(io)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<BenchResult>> {
    serde_json::from_reader(input).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != CSV_COLUMNS {
        return Err(Error::Parse(format!("unexpected columns {header:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(mode: SolveMode, min_s: f64) -> BenchResult {
        BenchResult {
            solver: Method::Cg,
            mode,
            dim: 2,
            points: 5,
            grid: "4x4".into(),
            times: vec![min_s],
            min_s,
            avg_s: min_s,
            max_s: min_s,
            iterations: 3,
            flops: 10,
            flops_per_s: 10.0 / min_s,
            nnz: 64,
            dof: 16,
            dof_per_s: 16.0 / min_s,
            bytes_per_iter: 1.5,
            h2d: 0,
            d2h: 0,
            residual_fingerprint: "00".into(),
        }
    }

    #[test]
    fn ratio_pairs_async_with_sync() {
        let rows = csv_rows(&[result(SolveMode::Async, 1.0), result(SolveMode::SyncBaseline, 4.0)]);
        assert_eq!(rows[0].ratio, Some(0.25));
        assert_eq!(rows[1].ratio, Some(0.25));
        assert_eq!(csv_rows(&[result(SolveMode::Async, 1.0)])[0].ratio, None);
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        emit(&[], OutputFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = BenchConfig {
            reps: 0,
            ..BenchConfig::default()
        };
        assert!(matches!(run_benchmark(&cfg), Err(Error::Config(_))));
    }
}
