use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use streamsolve_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ss_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

struct Fixture {
    rt: *mut SsRuntime,
    ctx: *mut SsContext,
}

impl Fixture {
    fn new() -> Self {
        let mut rt = ptr::null_mut();
        let mut ctx = ptr::null_mut();
        unsafe {
            assert_eq!(ss_runtime_create(0, 7, false, &mut rt), SsStatus::Ok);
            assert_eq!(ss_context_create(rt, SsStreamType::DefaultBlocking, &mut ctx), SsStatus::Ok);
        }
        Fixture { rt, ctx }
    }

    fn vector(&self, v: &[f64]) -> *mut SsVector {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { ss_vector_create(self.rt, v.as_ptr(), v.len(), &mut out) }, SsStatus::Ok);
        out
    }

    fn scalar(&self, v: f64) -> *mut SsManaged {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { ss_managed_create(self.rt, v, &mut out) }, SsStatus::Ok);
        out
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            assert_eq!(ss_context_destroy(self.ctx), SsStatus::Ok);
            ss_runtime_destroy(self.rt);
        }
    }
}

fn front(m: *const SsManaged) -> f64 {
    let mut v = f64::NAN;
    assert_eq!(unsafe { ss_managed_front(m, &mut v) }, SsStatus::Ok);
    v
}

#[test]
fn vector_ops_round_trip() {
    let f = Fixture::new();
    let x = f.vector(&[1.0, 2.0, 2.0]);
    let y = f.vector(&[1.0, 1.0, 1.0]);
    let nrm = f.scalar(0.0);
    let dot = f.scalar(0.0);
    let two = f.scalar(2.0);
    unsafe {
        assert_eq!(ss_vec_norm_async(x, nrm, f.ctx), SsStatus::Ok);
        assert_eq!(ss_vec_dot_async(x, y, dot, f.ctx), SsStatus::Ok);
        assert_eq!(ss_vec_axpy_async(y, two, x, f.ctx), SsStatus::Ok);
        assert_eq!(ss_vec_scale_async(x, two, f.ctx), SsStatus::Ok);
    }
    assert_eq!(front(nrm), 3.0);
    assert_eq!(front(dot), 5.0);
    let mut out = [0.0; 3];
    unsafe {
        assert_eq!(ss_vector_get_values(y, out.as_mut_ptr(), 3), SsStatus::Ok);
        assert_eq!(out, [3.0, 5.0, 5.0]);
        assert_eq!(ss_vector_get_values(x, out.as_mut_ptr(), 3), SsStatus::Ok);
        assert_eq!(out, [2.0, 4.0, 4.0]);
        assert_eq!(ss_vector_get_values(x, out.as_mut_ptr(), 2), SsStatus::DimensionMismatch);
        for p in [nrm, dot, two] {
            ss_managed_destroy(p);
        }
        ss_vector_destroy(x);
        ss_vector_destroy(y);
    }
}

#[test]
fn expressions_compile_and_execute() {
    let f = Fixture::new();
    let a = f.scalar(3.0);
    let b = f.scalar(4.0);
    let target = f.scalar(0.0);
    let mut ea = ptr::null_mut();
    let mut eb = ptr::null_mut();
    let mut sa = ptr::null_mut();
    let mut sb = ptr::null_mut();
    let mut sum = ptr::null_mut();
    let mut root = ptr::null_mut();
    let mut ee = ptr::null_mut();
    let mut ops = 0usize;
    unsafe {
        assert_eq!(ss_expr_leaf(a, &mut ea), SsStatus::Ok);
        assert_eq!(ss_expr_leaf(b, &mut eb), SsStatus::Ok);
        assert_eq!(ss_expr_binary(SsBinaryOp::Mul, ea, ea, &mut sa), SsStatus::Ok);
        assert_eq!(ss_expr_binary(SsBinaryOp::Mul, eb, eb, &mut sb), SsStatus::Ok);
        assert_eq!(ss_expr_binary(SsBinaryOp::Add, sa, sb, &mut sum), SsStatus::Ok);
        assert_eq!(ss_expr_unary(SsUnaryOp::Sqrt, sum, &mut root), SsStatus::Ok);
        assert_eq!(ss_eval(root, f.ctx, &mut ee), SsStatus::Ok);
        assert_eq!(ss_executable_op_count(ee, &mut ops), SsStatus::Ok);
        assert_eq!(ops, 4);
        assert_eq!(ss_executable_execute(ee, target), SsStatus::Ok);
    }
    assert_eq!(front(target), 5.0);
    unsafe {
        for e in [ea, eb, sa, sb, sum, root] {
            ss_expr_destroy(e);
        }
        ss_executable_destroy(ee);
        for m in [a, b, target] {
            ss_managed_destroy(m);
        }
    }
}

#[test]
fn solve_through_the_c_interface() {
    let f = Fixture::new();
    let mut a = ptr::null_mut();
    let grid = [8usize, 8];
    let (mut n, mut nnz) = (0usize, 0usize);
    unsafe {
        assert_eq!(ss_stencil_laplacian(2, 5, grid.as_ptr(), &mut a), SsStatus::Ok);
        assert_eq!(ss_matrix_size(a, &mut n, &mut nnz), SsStatus::Ok);
    }
    assert_eq!((n, nnz), (64, 5 * 64 - 4 * 8));
    let ones = vec![1.0; n];
    let xs = f.vector(&ones);
    let b = f.vector(&vec![0.0; n]);
    unsafe { assert_eq!(ss_mat_mult(a, xs, b, ptr::null()), SsStatus::Ok) };
    let x = f.vector(&vec![0.0; n]);
    let mut rep = ptr::null_mut();
    let mut its = 0usize;
    let mut len = 0usize;
    unsafe {
        assert_eq!(
            ss_solve(a, b, x, SsMethod::Cg, SsMode::Async, SsPc::Jacobi, 60, &mut rep),
            SsStatus::Ok
        );
        assert_eq!(ss_report_iterations(rep, &mut its), SsStatus::Ok);
        assert_eq!(ss_report_history(rep, ptr::null_mut(), 0, &mut len), SsStatus::Ok);
    }
    assert!(its > 0 && len > its);
    let mut hist = vec![0.0; len];
    let mut sol = vec![0.0; n];
    unsafe {
        assert_eq!(ss_report_history(rep, hist.as_mut_ptr(), len, &mut len), SsStatus::Ok);
        assert_eq!(ss_vector_get_values(x, sol.as_mut_ptr(), n), SsStatus::Ok);
    }
    assert!(hist[len - 1] < 1e-8 * hist[0]);
    assert!(sol.iter().all(|v| (v - 1.0).abs() < 1e-8));
    unsafe {
        ss_report_destroy(rep);
        ss_matrix_destroy(a);
        for v in [xs, b, x] {
            ss_vector_destroy(v);
        }
    }
}

#[test]
fn errors_map_to_status_codes() {
    let f = Fixture::new();
    unsafe {
        assert_eq!(ss_vector_len(ptr::null(), ptr::null_mut()), SsStatus::NullArgument);
        assert!(last_error().contains("null"));
        let x = f.vector(&[1.0, 2.0]);
        let y = f.vector(&[1.0, 2.0, 3.0]);
        let out = f.scalar(0.0);
        let st = ss_vec_dot_async(x, y, out, f.ctx);
        assert_eq!(st, SsStatus::DimensionMismatch, "{}", last_error());
        assert!(!last_error().is_empty());

        let mut n = 0usize;
        assert_eq!(ss_vector_len(x, &mut n), SsStatus::Ok);
        assert_eq!(n, 2);
        assert_eq!(last_error(), "");

        let mut a = ptr::null_mut();
        let grid = [4usize, 4];
        assert_eq!(ss_stencil_laplacian(2, 7, grid.as_ptr(), &mut a), SsStatus::InvalidArgument);
        assert!(a.is_null());

        let mut other = ptr::null_mut();
        assert_eq!(ss_runtime_create(0, 0, true, &mut other), SsStatus::Ok);
        let mut foreign = ptr::null_mut();
        assert_eq!(ss_context_create(other, SsStreamType::DefaultBlocking, &mut foreign), SsStatus::Ok);
        assert_eq!(ss_vec_norm_async(x, out, foreign), SsStatus::RuntimeMismatch);
        assert_eq!(ss_context_destroy(foreign), SsStatus::Ok);
        ss_runtime_destroy(other);

        ss_managed_destroy(out);
        ss_vector_destroy(x);
        ss_vector_destroy(y);
    }
}

#[test]
fn contexts_order_and_report_idle() {
    let mut rt = ptr::null_mut();
    let (mut c1, mut c2) = (ptr::null_mut(), ptr::null_mut());
    let mut idle = false;
    unsafe {
        assert_eq!(ss_runtime_create(200, 1, false, &mut rt), SsStatus::Ok);
        assert_eq!(ss_context_create(rt, SsStreamType::DefaultBlocking, &mut c1), SsStatus::Ok);
        assert_eq!(ss_context_create(rt, SsStreamType::GloballyBlocking, &mut c2), SsStatus::Ok);
        assert_eq!(ss_context_wait_for_context(c1, c1), SsStatus::Ok);
        assert_eq!(ss_context_wait_for_context(c2, c1), SsStatus::Ok);
        assert_eq!(ss_context_synchronize(c1), SsStatus::Ok);
        assert_eq!(ss_context_query_idle(c1, &mut idle), SsStatus::Ok);
        assert!(idle);
        assert_eq!(ss_runtime_synchronize_all(rt), SsStatus::Ok);
        assert_eq!(ss_context_destroy(c1), SsStatus::Ok);
        assert_eq!(ss_context_destroy(c2), SsStatus::Ok);
        assert_eq!(ss_context_destroy(ptr::null_mut()), SsStatus::Ok);
        ss_runtime_destroy(rt);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/streamsolve.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).expect("generated header");
    for name in [
        "ss_last_error_message",
        "ss_runtime_create",
        "ss_context_wait_for_context",
        "ss_vec_axpy_async",
        "ss_eval",
        "ss_executable_execute",
        "ss_stencil_laplacian",
        "ss_solve",
        "ss_report_history",
    ] {
        assert!(text.contains(&format!("{name}(")), "{name} missing");
    }
    assert!(text.contains("typedef struct SsRuntime SsRuntime;"));
    assert!(text.contains("SS_STATUS_OK = 0"));
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let include = header().parent().unwrap().to_path_buf();
    let status = match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler, skipping");
            return;
        }
    };
    assert!(status.success());
}
