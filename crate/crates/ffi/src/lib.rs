//! C interface to streamsolve.
//!
//! Every object is an opaque heap handle created by a `*_create` style
//! function and released with the matching `*_destroy`. Functions return an
//! [`SsStatus`]; on failure a description is available from
//! [`ss_last_error_message`] on the same thread until the next call.
//! Destroying a handle never blocks: storage still used by queued work is
//! released when that work completes.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use streamsolve::expr::{BinaryOp, UnaryOp};
use streamsolve::linalg::{
    mat_mult, vec_axpy_async, vec_dot_async, vec_norm_async, vec_scale_async, CsrMatrix,
    DenseVector, NormType,
};
use streamsolve::solvers::{solve, Method, PcType, SolveMode, SolveReport, SolverConfig};
use streamsolve::stencil::{build_laplacian, StencilSpec};
use streamsolve::{
    eval, Context, Error, ExecutableExpression, Expr, Managed, MemType, Runtime, RuntimeConfig,
    StreamType,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ContextDestroyed = 3,
    SelfSynchronize = 4,
    UnknownObject = 5,
    BracketMismatch = 6,
    ShapeMismatch = 7,
    DimensionMismatch = 8,
    ViewConflict = 9,
    RuntimeMismatch = 10,
    Breakdown = 11,
    FingerprintMismatch = 12,
    Io = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStreamType {
    DefaultBlocking = 0,
    GloballyBlocking = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsUnaryOp {
    Neg = 0,
    Abs = 1,
    Sqrt = 2,
    Sin = 3,
    Cos = 4,
    Exp = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsBinaryOp {
    Add = 0,
    Sub = 1,
    Mul = 2,
    Div = 3,
    Min = 4,
    Max = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsMethod {
    Cg = 0,
    Tfqmr = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsMode {
    Async = 0,
    Sync = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsPc {
    Jacobi = 0,
    None = 1,
}

pub struct SsRuntime(Runtime);
pub struct SsContext(Context);
pub struct SsManaged(Managed);
pub struct SsVector(DenseVector);
pub struct SsMatrix(CsrMatrix);
pub struct SsExpr(Expr);
pub struct SsExecutable(ExecutableExpression);
pub struct SsReport {
    report: SolveReport,
    history: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::ContextDestroyed(_) => SsStatus::ContextDestroyed,
        Error::SelfSynchronize(_) => SsStatus::SelfSynchronize,
        Error::UnknownObject(_) => SsStatus::UnknownObject,
        Error::NestedBracket { .. } | Error::UnmatchedEnd { .. } | Error::ModeMismatch { .. } => {
            SsStatus::BracketMismatch
        }
        Error::ShapeMismatch { .. } => SsStatus::ShapeMismatch,
        Error::DimensionMismatch(_) => SsStatus::DimensionMismatch,
        Error::ViewConflict(_) => SsStatus::ViewConflict,
        Error::RuntimeMismatch => SsStatus::RuntimeMismatch,
        Error::Breakdown { .. } => SsStatus::Breakdown,
        Error::FingerprintMismatch { .. } => SsStatus::FingerprintMismatch,
        Error::Io(_) => SsStatus::Io,
        _ => SsStatus::InvalidArgument,
    }
}

struct Fail(SsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SsStatus::NullArgument, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SsStatus::Panic
        }
    }
}

unsafe fn r<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn m<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn destroy<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, empty after success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a runtime. `latency_us` is added to every task; `host_kernels`
/// selects host memory for kernels instead of the simulated device.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_runtime_create(
    latency_us: u64,
    seed: u64,
    host_kernels: bool,
    out: *mut *mut SsRuntime,
) -> SsStatus {
    guard(|| {
        let rt = Runtime::new(RuntimeConfig {
            kernel_space: if host_kernels { MemType::Host } else { MemType::SimDevice },
            launch_latency: Duration::from_micros(latency_us),
            seed,
            ..RuntimeConfig::default()
        });
        put(out, SsRuntime(rt))
    })
}

/// # Safety
/// `rt` must come from [`ss_runtime_create`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_runtime_destroy(rt: *mut SsRuntime) {
    destroy(rt)
}

/// Waits for all work on every context of the runtime.
///
/// # Safety
/// `rt` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_runtime_synchronize_all(rt: *const SsRuntime) -> SsStatus {
    guard(|| {
        r(rt, "runtime")?.0.synchronize_all();
        Ok(())
    })
}

/// # Safety
/// `rt` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_context_create(
    rt: *const SsRuntime,
    stream_type: SsStreamType,
    out: *mut *mut SsContext,
) -> SsStatus {
    guard(|| {
        let st = match stream_type {
            SsStreamType::DefaultBlocking => StreamType::DefaultBlocking,
            SsStreamType::GloballyBlocking => StreamType::GloballyBlocking,
        };
        let ctx = r(rt, "runtime")?.0.create_context(st);
        put(out, SsContext(ctx))
    })
}

/// Synchronizes the context and releases the handle.
///
/// # Safety
/// `ctx` must come from [`ss_context_create`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_context_destroy(ctx: *mut SsContext) -> SsStatus {
    guard(|| {
        if ctx.is_null() {
            return Ok(());
        }
        Box::from_raw(ctx).0.destroy()?;
        Ok(())
    })
}

/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ss_context_wait_for_context(
    waiter: *const SsContext,
    waitee: *const SsContext,
) -> SsStatus {
    guard(|| {
        r(waiter, "waiter")?.0.wait_for_context(&r(waitee, "waitee")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `ctx` must be live and `idle` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_context_query_idle(ctx: *const SsContext, idle: *mut bool) -> SsStatus {
    guard(|| {
        *m(idle, "idle")? = r(ctx, "context")?.0.query_idle();
        Ok(())
    })
}

/// # Safety
/// `ctx` must be live.
#[no_mangle]
pub unsafe extern "C" fn ss_context_synchronize(ctx: *const SsContext) -> SsStatus {
    guard(|| {
        r(ctx, "context")?.0.synchronize()?;
        Ok(())
    })
}

/// # Safety
/// `rt` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_managed_create(
    rt: *const SsRuntime,
    value: f64,
    out: *mut *mut SsManaged,
) -> SsStatus {
    guard(|| put(out, SsManaged(Managed::from_value(&r(rt, "runtime")?.0, value))))
}

/// # Safety
/// `v` must come from [`ss_managed_create`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_managed_destroy(v: *mut SsManaged) {
    destroy(v)
}

/// Host value of a managed scalar, waiting for a pending write.
///
/// # Safety
/// `v` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_managed_front(v: *const SsManaged, out: *mut f64) -> SsStatus {
    guard(|| {
        *m(out, "out")? = r(v, "managed")?.0.front();
        Ok(())
    })
}

/// # Safety
/// `rt` must be live, `values` must point to `n` doubles (or be null when
/// `n` is 0) and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_vector_create(
    rt: *const SsRuntime,
    values: *const f64,
    n: usize,
    out: *mut *mut SsVector,
) -> SsStatus {
    guard(|| {
        let data = if n == 0 {
            &[][..]
        } else if values.is_null() {
            return Err(null("values"));
        } else {
            std::slice::from_raw_parts(values, n)
        };
        put(out, SsVector(DenseVector::from_values(&r(rt, "runtime")?.0, data)))
    })
}

/// # Safety
/// `v` must come from [`ss_vector_create`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_vector_destroy(v: *mut SsVector) {
    destroy(v)
}

/// # Safety
/// `v` must be live and `n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_vector_len(v: *const SsVector, n: *mut usize) -> SsStatus {
    guard(|| {
        *m(n, "n")? = r(v, "vector")?.0.len();
        Ok(())
    })
}

/// Copies the values to `out`, which holds `n` doubles; `n` must equal the
/// vector length. Waits for pending writes.
///
/// # Safety
/// `v` must be live and `out` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_vector_get_values(v: *const SsVector, out: *mut f64, n: usize) -> SsStatus {
    guard(|| {
        let v = &r(v, "vector")?.0;
        if n != v.len() {
            return Err(Error::DimensionMismatch(format!("vector has {} entries, buffer {n}", v.len())).into());
        }
        if n == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&v.to_vec()?);
        Ok(())
    })
}

/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ss_vec_norm_async(
    v: *const SsVector,
    out: *mut SsManaged,
    ctx: *const SsContext,
) -> SsStatus {
    guard(|| {
        vec_norm_async(&r(v, "vector")?.0, NormType::Norm2, &mut m(out, "out")?.0, &r(ctx, "context")?.0)?;
        Ok(())
    })
}

/// v <- alpha v
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ss_vec_scale_async(
    v: *const SsVector,
    alpha: *const SsManaged,
    ctx: *const SsContext,
) -> SsStatus {
    guard(|| {
        vec_scale_async(&r(v, "vector")?.0, &r(alpha, "alpha")?.0, &r(ctx, "context")?.0)?;
        Ok(())
    })
}

/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ss_vec_dot_async(
    x: *const SsVector,
    y: *const SsVector,
    out: *mut SsManaged,
    ctx: *const SsContext,
) -> SsStatus {
    guard(|| {
        vec_dot_async(&r(x, "x")?.0, &r(y, "y")?.0, &mut m(out, "out")?.0, &r(ctx, "context")?.0)?;
        Ok(())
    })
}

/// y <- y + alpha x
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ss_vec_axpy_async(
    y: *const SsVector,
    alpha: *const SsManaged,
    x: *const SsVector,
    ctx: *const SsContext,
) -> SsStatus {
    guard(|| {
        vec_axpy_async(&r(y, "y")?.0, &r(alpha, "alpha")?.0, &r(x, "x")?.0, &r(ctx, "context")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `v` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ss_expr_leaf(v: *const SsManaged, out: *mut *mut SsExpr) -> SsStatus {
    guard(|| put(out, SsExpr(Expr::leaf(&r(v, "managed")?.0))))
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_expr_constant(value: f64, out: *mut *mut SsExpr) -> SsStatus {
    guard(|| put(out, SsExpr(Expr::constant(value))))
}

/// # Safety
/// `a` must be live and `out` valid. `a` stays owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn ss_expr_unary(op: SsUnaryOp, a: *const SsExpr, out: *mut *mut SsExpr) -> SsStatus {
    guard(|| {
        let op = match op {
            SsUnaryOp::Neg => UnaryOp::Neg,
            SsUnaryOp::Abs => UnaryOp::Abs,
            SsUnaryOp::Sqrt => UnaryOp::Sqrt,
            SsUnaryOp::Sin => UnaryOp::Sin,
            SsUnaryOp::Cos => UnaryOp::Cos,
            SsUnaryOp::Exp => UnaryOp::Exp,
        };
        put(out, SsExpr(r(a, "operand")?.0.clone().unary(op)))
    })
}

/// # Safety
/// `a` and `b` must be live and `out` valid. Operands stay owned by the
/// caller.
#[no_mangle]
pub unsafe extern "C" fn ss_expr_binary(
    op: SsBinaryOp,
    a: *const SsExpr,
    b: *const SsExpr,
    out: *mut *mut SsExpr,
) -> SsStatus {
    guard(|| {
        let op = match op {
            SsBinaryOp::Add => BinaryOp::Add,
            SsBinaryOp::Sub => BinaryOp::Sub,
            SsBinaryOp::Mul => BinaryOp::Mul,
            SsBinaryOp::Div => BinaryOp::Div,
            SsBinaryOp::Min => BinaryOp::Min,
            SsBinaryOp::Max => BinaryOp::Max,
        };
        let rhs = &r(b, "rhs")?.0;
        put(out, SsExpr(r(a, "lhs")?.0.clone().binary(op, rhs)))
    })
}

/// # Safety
/// `e` must come from an `ss_expr_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_expr_destroy(e: *mut SsExpr) {
    destroy(e)
}

/// Freezes an expression. A null context binds the globally blocking
/// context, making execution synchronous.
///
/// # Safety
/// `e` must be live, `ctx` live or null, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ss_eval(
    e: *const SsExpr,
    ctx: *const SsContext,
    out: *mut *mut SsExecutable,
) -> SsStatus {
    guard(|| {
        let ctx = ctx.as_ref().map(|c| &c.0);
        put(out, SsExecutable(eval(&r(e, "expression")?.0, ctx)?))
    })
}

/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ss_executable_execute(ee: *const SsExecutable, target: *mut SsManaged) -> SsStatus {
    guard(|| {
        r(ee, "executable")?.0.execute(&mut m(target, "target")?.0)?;
        Ok(())
    })
}

/// # Safety
/// `ee` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ss_executable_op_count(ee: *const SsExecutable, out: *mut usize) -> SsStatus {
    guard(|| {
        *m(out, "out")? = r(ee, "executable")?.0.op_count();
        Ok(())
    })
}

/// # Safety
/// `ee` must come from [`ss_eval`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_executable_destroy(ee: *mut SsExecutable) {
    destroy(ee)
}

/// Builds a Laplacian: `dim` 2 with 5 or 9 points, or `dim` 3 with 7 or 27
/// points; `grid` holds `dim` extents.
///
/// # Safety
/// `grid` must point to `dim` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_stencil_laplacian(
    dim: usize,
    points: usize,
    grid: *const usize,
    out: *mut *mut SsMatrix,
) -> SsStatus {
    guard(|| {
        if grid.is_null() {
            return Err(null("grid"));
        }
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidStencil(format!("dimension {dim}")).into());
        }
        let spec = StencilSpec::new(dim, points, std::slice::from_raw_parts(grid, dim))?;
        let (a, _) = build_laplacian(&spec)?;
        put(out, SsMatrix(a))
    })
}

/// # Safety
/// `a` must come from a matrix constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_destroy(a: *mut SsMatrix) {
    destroy(a)
}

/// # Safety
/// `a` must be live and the outputs valid.
#[no_mangle]
pub unsafe extern "C" fn ss_matrix_size(a: *const SsMatrix, n_rows: *mut usize, nnz: *mut usize) -> SsStatus {
    guard(|| {
        let a = &r(a, "matrix")?.0;
        *m(n_rows, "n_rows")? = a.n_rows();
        *m(nnz, "nnz")? = a.nnz();
        Ok(())
    })
}

/// y <- A x, synchronous when `ctx` is null.
///
/// # Safety
/// Handles must be live; `ctx` may be null.
#[no_mangle]
pub unsafe extern "C" fn ss_mat_mult(
    a: *const SsMatrix,
    x: *const SsVector,
    y: *const SsVector,
    ctx: *const SsContext,
) -> SsStatus {
    guard(|| {
        let ctx = ctx.as_ref().map(|c| &c.0);
        mat_mult(&r(a, "matrix")?.0, &r(x, "x")?.0, &r(y, "y")?.0, ctx)?;
        Ok(())
    })
}

/// Solves A x = b from a zero initial guess for `max_it` iterations.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ss_solve(
    a: *const SsMatrix,
    b: *const SsVector,
    x: *const SsVector,
    method: SsMethod,
    mode: SsMode,
    pc: SsPc,
    max_it: usize,
    out: *mut *mut SsReport,
) -> SsStatus {
    guard(|| {
        let cfg = SolverConfig {
            method: match method {
                SsMethod::Cg => Method::Cg,
                SsMethod::Tfqmr => Method::Tfqmr,
            },
            mode: match mode {
                SsMode::Async => SolveMode::Async,
                SsMode::Sync => SolveMode::SyncBaseline,
            },
            max_it,
            pc: match pc {
                SsPc::Jacobi => PcType::Jacobi,
                SsPc::None => PcType::None,
            },
        };
        let report = solve(&r(a, "matrix")?.0, &r(b, "b")?.0, &r(x, "x")?.0, &cfg)?;
        let history = report.residual_history()?;
        put(out, SsReport { report, history })
    })
}

/// # Safety
/// `rep` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ss_report_iterations(rep: *const SsReport, out: *mut usize) -> SsStatus {
    guard(|| {
        *m(out, "out")? = r(rep, "report")?.report.iterations;
        Ok(())
    })
}

/// Copies up to `cap` residual norms into `buf` and stores the full
/// history length in `len`.
///
/// # Safety
/// `rep` must be live, `len` valid and `buf` writable for `cap` doubles
/// (or null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn ss_report_history(
    rep: *const SsReport,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SsStatus {
    guard(|| {
        let h = &r(rep, "report")?.history;
        *m(len, "len")? = h.len();
        let k = cap.min(h.len());
        if k > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(h.as_ptr(), buf, k);
        }
        Ok(())
    })
}

/// # Safety
/// `rep` must come from [`ss_solve`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ss_report_destroy(rep: *mut SsReport) {
    destroy(rep)
}
