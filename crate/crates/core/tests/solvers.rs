mod common;

use std::cell::Cell;
use std::time::Duration;

use nalgebra::DVector;

use common::{dense, norm2, rng, task_spans};
use rand::Rng;
use streamsolve::bench::rhs;
use streamsolve::linalg::{CsrMatrix, DenseVector};
use streamsolve::solvers::{
    solve, solve_with_callback, Method, PcType, SolveMode, SolverConfig, StopReason,
};
use streamsolve::stencil::{build_laplacian, StencilSpec};
use streamsolve::{trace, Error, Runtime, RuntimeConfig};

fn laplacian(dim: usize, points: usize, n: usize) -> CsrMatrix {
    build_laplacian(&StencilSpec::uniform(dim, points, n).unwrap()).unwrap().0
}

fn cfg(method: Method, mode: SolveMode, pc: PcType, max_it: usize) -> SolverConfig {
    SolverConfig { method, mode, pc, max_it }
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let r = DVector::from_column_slice(b) - dense(a) * DVector::from_column_slice(x);
    norm2(r.as_slice()) / norm2(b)
}

#[test]
fn callback_that_never_stops_runs_max_it() {
    let rt = Runtime::default();
    let a = laplacian(2, 5, 8);
    let b = DenseVector::from_values(&rt, &rhs(1, 64));
    let x = DenseVector::zeros(&rt, 64);
    let mut calls = Vec::new();
    let rep = solve_with_callback(
        &a,
        &b,
        &x,
        &cfg(Method::Cg, SolveMode::Async, PcType::Jacobi, 17),
        &mut |i, _| {
            calls.push(i);
            false
        },
    )
    .unwrap();
    assert_eq!(rep.iterations, 17);
    assert_eq!(rep.reason, StopReason::MaxIterations);
    assert_eq!(calls, (1..=17).collect::<Vec<_>>());
    assert_eq!(rep.history_len(), 18);
}

#[test]
fn callback_stops_where_the_reference_crosses_tolerance() {
    let a = laplacian(2, 5, 12);
    let n = a.n_rows();
    let tol = 1e-8;
    let rt = Runtime::default();
    let b = DenseVector::from_values(&rt, &rhs(3, n));
    let x = DenseVector::zeros(&rt, n);
    let reference = solve(&a, &b, &x, &cfg(Method::Cg, SolveMode::SyncBaseline, PcType::Jacobi, 200))
        .unwrap()
        .residual_history()
        .unwrap();
    let first = reference.iter().position(|&r| r < tol).expect("reference converges");
    assert!(first > 1);

    let y = DenseVector::zeros(&rt, n);
    let rep = solve_with_callback(
        &a,
        &b,
        &y,
        &cfg(Method::Cg, SolveMode::Async, PcType::Jacobi, 200),
        &mut |_, dp| dp.front() < tol,
    )
    .unwrap();
    assert_eq!(rep.reason, StopReason::Callback);
    assert_eq!(rep.iterations, first);
    assert_eq!(rep.residual_history().unwrap(), reference[..=first]);
}

#[test]
fn callback_ignoring_the_residual_adds_no_host_waits() {
    let a = laplacian(2, 5, 10);
    let n = a.n_rows();
    let config = cfg(Method::Cg, SolveMode::Async, PcType::Jacobi, 15);
    let waits = |with_cb: bool| {
        let rt = Runtime::new(RuntimeConfig {
            launch_latency: Duration::from_micros(200),
            ..RuntimeConfig::default()
        });
        let b = DenseVector::from_values(&rt, &rhs(5, n));
        let x = DenseVector::zeros(&rt, n);
        let count = Cell::new(0);
        if with_cb {
            solve_with_callback(&a, &b, &x, &config, &mut |_, _| {
                count.set(count.get() + 1);
                false
            })
            .unwrap();
            assert_eq!(count.get(), 15);
        } else {
            solve(&a, &b, &x, &config).unwrap();
        }
        let t = rt.trace();
        trace::host_waits(&t).count()
    };
    assert_eq!(waits(true), waits(false));
}

#[test]
fn solve_returns_before_the_last_kernel_finishes() {
    let rt = Runtime::new(RuntimeConfig {
        launch_latency: Duration::from_millis(3),
        ..RuntimeConfig::default()
    });
    let a = laplacian(2, 5, 6);
    let n = a.n_rows();
    let b = DenseVector::from_values(&rt, &rhs(2, n));
    let x = DenseVector::zeros(&rt, n);
    let rep = solve(&a, &b, &x, &cfg(Method::Cg, SolveMode::Async, PcType::Jacobi, 5)).unwrap();
    let returned = rt.now_ns();
    rt.synchronize_all();
    let last_end = task_spans(&rt.trace()).values().map(|s| s.1).max().unwrap();
    assert!(returned < last_end, "solve synchronized before returning");
    assert_eq!(rep.residual_history().unwrap().len(), 6);
}

#[test]
fn cg_converges_to_the_direct_solution() {
    for (dim, points, grid, pc) in [
        (2, 5, 8, PcType::Jacobi),
        (2, 9, 7, PcType::None),
        (3, 7, 4, PcType::Jacobi),
        (3, 27, 4, PcType::Jacobi),
    ] {
        let a = laplacian(dim, points, grid);
        let n = a.n_rows();
        let rt = Runtime::default();
        let bv = rhs(11, n);
        let b = DenseVector::from_values(&rt, &bv);
        let x = DenseVector::zeros(&rt, n);
        solve_with_callback(&a, &b, &x, &cfg(Method::Cg, SolveMode::Async, pc, 500), &mut |_, dp| {
            dp.front() < 1e-13
        })
        .unwrap();
        let want = dense(&a).cholesky().unwrap().solve(&DVector::from_vec(bv.clone()));
        let got = x.to_vec().unwrap();
        let diff: Vec<f64> = got.iter().zip(want.iter()).map(|(g, w)| g - w).collect();
        assert!(norm2(&diff) <= 1e-9 * norm2(want.as_slice()), "{dim}d {points}-point");
        assert!(residual(&a, &bv, &got) < 1e-10);
    }
}

#[test]
fn zero_rhs_stops_exactly() {
    for method in [Method::Cg, Method::Tfqmr] {
        let rt = Runtime::default();
        let a = laplacian(2, 5, 5);
        let b = DenseVector::zeros(&rt, 25);
        let x = DenseVector::from_values(&rt, &[3.0; 25]);
        let rep = solve(&a, &b, &x, &cfg(method, SolveMode::Async, PcType::Jacobi, 10)).unwrap();
        assert_eq!(rep.reason, StopReason::Exact, "{method:?}");
        assert_eq!(rep.iterations, 0);
        assert_eq!(x.to_vec().unwrap(), [0.0; 25]);
    }
}

#[test]
fn history_and_census_serialize() {
    let rt = Runtime::default();
    let a = laplacian(2, 5, 8);
    let b = DenseVector::from_values(&rt, &rhs(4, 64));
    let x = DenseVector::zeros(&rt, 64);
    let rep = solve(&a, &b, &x, &cfg(Method::Cg, SolveMode::Async, PcType::Jacobi, 9)).unwrap();
    let hist: Vec<f64> = serde_json::from_str(&rep.history_json().unwrap()).unwrap();
    assert_eq!(hist, rep.residual_history().unwrap());
    assert_eq!(hist.len(), 10);
    let census = rep.census_json();
    assert_eq!(census["iterations"], 9);
    assert_eq!(census["matmult"], 9);
    assert_eq!(census["reductions"], 27);
    assert_eq!(census["vector_updates"], 27);
    assert_eq!(census["per_iteration"]["matmult"], 1.0);
    let n = 64u64;
    let nnz = a.nnz() as u64;
    assert_eq!(rep.loop_log.total_flops, 9 * (2 * nnz + 12 * n + 3) + 9 * n);
    assert_eq!(rep.contexts.len(), 3);
    assert!(rep.objects.contains_key("X") && rep.objects["X"] == x.id());
}

#[test]
fn bad_systems_are_rejected() {
    let rt = Runtime::default();
    let a = laplacian(2, 5, 3);
    let b = DenseVector::zeros(&rt, 9);
    let short = DenseVector::zeros(&rt, 8);
    let c = cfg(Method::Cg, SolveMode::Async, PcType::Jacobi, 5);
    assert!(matches!(solve(&a, &b, &short, &c), Err(Error::DimensionMismatch(_))));
    let zero_it = SolverConfig { max_it: 0, ..c.clone() };
    assert!(matches!(solve(&a, &b, &b, &zero_it), Err(Error::Config(_))));
    let other = Runtime::default();
    let foreign = DenseVector::zeros(&other, 9);
    assert!(matches!(solve(&a, &b, &foreign, &c), Err(Error::RuntimeMismatch)));
}

#[test]
fn tfqmr_converges_on_a_nonsymmetric_system() {
    let n = 40;
    let mut r = rng(21);
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 6.0 + r.gen_range(0.0..1.0)));
        for _ in 0..3 {
            let j = r.gen_range(0..n);
            if j != i {
                t.push((i, j, r.gen_range(-1.0..1.0)));
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
    assert!(!a.is_symmetric());
    let bv = rhs(8, n);
    for (mode, pc) in [
        (SolveMode::Async, PcType::Jacobi),
        (SolveMode::SyncBaseline, PcType::None),
    ] {
        let rt = Runtime::default();
        let b = DenseVector::from_values(&rt, &bv);
        let x = DenseVector::zeros(&rt, n);
        let rep = solve(&a, &b, &x, &cfg(Method::Tfqmr, mode, pc, 60)).unwrap();
        assert_eq!(rep.loop_log.matmult.count, 2 * rep.iterations as u64);
        assert!(residual(&a, &bv, &x.to_vec().unwrap()) < 1e-10, "{mode:?}");
        let hist = rep.residual_history().unwrap();
        assert!(hist.last().unwrap() < &(1e-8 * hist[0]));
    }
}

#[test]
fn tfqmr_solves_the_laplacian() {
    let a = laplacian(3, 7, 5);
    let n = a.n_rows();
    let rt = Runtime::default();
    let bv = rhs(6, n);
    let b = DenseVector::from_values(&rt, &bv);
    let x = DenseVector::zeros(&rt, n);
    let rep = solve_with_callback(
        &a,
        &b,
        &x,
        &cfg(Method::Tfqmr, SolveMode::Async, PcType::Jacobi, 300),
        &mut |_, tau| tau.front() < 1e-12,
    )
    .unwrap();
    assert_eq!(rep.reason, StopReason::Callback);
    assert!(residual(&a, &bv, &x.to_vec().unwrap()) < 1e-9);
}
