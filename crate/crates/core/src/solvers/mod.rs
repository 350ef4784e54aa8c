//! Preconditioned Krylov solvers on the asynchronous API.
//!
//! Both solvers keep every scalar of their recurrences in [`Managed`] values
//! and only bring a value to the host where the algorithm needs a branch.
//! `SolveMode::SyncBaseline` runs exactly the same sequence of kernels with
//! every context replaced by the globally blocking one, so the two modes
//! produce bit-identical iterates.

mod cg;
mod pc;
mod tfqmr;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::{Context, StreamType};
use crate::error::{Error, Result};
use crate::ids::{ContextId, ObjectId};
use crate::linalg::{CsrMatrix, DenseVector};
use crate::managed::Managed;
use crate::runtime::Runtime;
use crate::stats::FlopLog;

pub use cg::cg_solve;
pub use pc::{pc_jacobi_apply, Jacobi};
pub use tfqmr::tfqmr_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Cg,
    Tfqmr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    #[default]
    Async,
    #[serde(rename = "sync")]
    SyncBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PcType {
    #[default]
    Jacobi,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub mode: SolveMode,
    pub max_it: usize,
    pub pc: PcType,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Cg,
            mode: SolveMode::Async,
            max_it: 20,
            pc: PcType::Jacobi,
        }
    }
}

/// Receives the iteration number (from 1) and the managed residual norm of
/// that iteration; returning true stops the solve.
pub type ConvergenceCallback<'a> = dyn FnMut(usize, &Managed) -> bool + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Callback,
    /// The residual became exactly zero.
    Exact,
}

/// Outcome of a solve. Residual norms stay managed until asked for.
pub struct SolveReport {
    pub method: Method,
    pub mode: SolveMode,
    pub iterations: usize,
    pub reason: StopReason,
    /// Contexts used, in the order a, b, c.
    pub contexts: Vec<ContextId>,
    /// Ids of the named work vectors and scalars.
    pub objects: BTreeMap<String, ObjectId>,
    /// Kernel tallies of the setup phase.
    pub setup_log: FlopLog,
    /// Kernel tallies of the iterations.
    pub loop_log: FlopLog,
    history: Vec<(usize, Managed)>,
}

impl std::fmt::Debug for SolveReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveReport")
            .field("method", &self.method)
            .field("mode", &self.mode)
            .field("iterations", &self.iterations)
            .field("reason", &self.reason)
            .finish_non_exhaustive()
    }
}

impl SolveReport {
    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Managed residual estimates with the iteration they belong to.
    pub fn history_managed(&self) -> impl Iterator<Item = (usize, &Managed)> {
        self.history.iter().map(|(i, m)| (*i, m))
    }

    /// Waits for and returns the residual history. A non-finite entry means
    /// the recurrence broke down at that iteration.
    pub fn residual_history(&self) -> Result<Vec<f64>> {
        let method = match self.method {
            Method::Cg => "cg",
            Method::Tfqmr => "tfqmr",
        };
        self.history
            .iter()
            .map(|(i, m)| {
                let v = m.front();
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Breakdown {
                        method,
                        iteration: *i,
                        reason: "residual norm is not finite",
                    })
                }
            })
            .collect()
    }

    pub fn history_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.residual_history()?).expect("floats serialize"))
    }

    /// Per-kind kernel counts of the iterations, plus per-iteration averages.
    pub fn census_json(&self) -> serde_json::Value {
        let it = self.iterations.max(1) as f64;
        let l = &self.loop_log;
        serde_json::json!({
            "iterations": self.iterations,
            "matmult": l.matmult.count,
            "reductions": l.reductions(),
            "vector_updates": l.vector_updates(),
            "scalar_expr": l.scalar_expr.count,
            "flops": l.total_flops,
            "per_iteration": {
                "matmult": l.matmult.count as f64 / it,
                "reductions": l.reductions() as f64 / it,
                "vector_updates": l.vector_updates() as f64 / it,
                "flops": l.total_flops as f64 / it,
            }
        })
    }
}

pub fn solve(a: &CsrMatrix, b: &DenseVector, x: &DenseVector, cfg: &SolverConfig) -> Result<SolveReport> {
    match cfg.method {
        Method::Cg => cg_solve(a, b, x, cfg, None),
        Method::Tfqmr => tfqmr_solve(a, b, x, cfg, None),
    }
}

pub fn solve_with_callback(
    a: &CsrMatrix,
    b: &DenseVector,
    x: &DenseVector,
    cfg: &SolverConfig,
    cb: &mut ConvergenceCallback<'_>,
) -> Result<SolveReport> {
    match cfg.method {
        Method::Cg => cg_solve(a, b, x, cfg, Some(cb)),
        Method::Tfqmr => tfqmr_solve(a, b, x, cfg, Some(cb)),
    }
}

fn check_system(a: &CsrMatrix, b: &DenseVector, x: &DenseVector, cfg: &SolverConfig) -> Result<Runtime> {
    if cfg.max_it == 0 {
        return Err(Error::Config("max_it must be at least 1".into()));
    }
    if a.n_rows() != a.n_cols() || a.n_rows() != b.len() || b.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "system {}x{} with b of {} and x of {}",
            a.n_rows(),
            a.n_cols(),
            b.len(),
            x.len()
        )));
    }
    let rt = b.runtime();
    if !rt.same_as(&x.runtime()) {
        return Err(Error::RuntimeMismatch);
    }
    Ok(rt)
}

/// Three contexts for the async mode, three handles to the globally
/// blocking context for the baseline.
fn solver_contexts(rt: &Runtime, mode: SolveMode) -> [Context; 3] {
    match mode {
        SolveMode::Async => std::array::from_fn(|_| rt.create_context(StreamType::DefaultBlocking)),
        SolveMode::SyncBaseline => std::array::from_fn(|_| rt.blocking_context().clone()),
    }
}
