//! Vector and matrix kernels.
//!
//! Every `*_async` operation enqueues exactly one task on the given context,
//! bracketed with the access modes of its operands. Reductions sum serially
//! in index order so results are reproducible bit for bit.

use std::sync::Arc;

use parking_lot::MappedRwLockReadGuard;

use crate::context::Context;
use crate::deptrack::{bracketed_enqueue, MemoryAccessMode};
use crate::error::{Error, Result};
use crate::expr::{EvalOptions, Expr, Program};
use crate::ids::ObjectId;
use crate::linalg::{CsrMatrix, DenseVector};
use crate::managed::Managed;
use crate::memory::{Buffer, MemType};
use crate::runtime::Core;
use crate::stats::KernelKind;

use MemoryAccessMode::{Read, ReadWrite, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormType {
    #[default]
    Norm2,
}

/// Scalar operand of a vector kernel: a host constant, a managed value or a
/// small expression over managed values evaluated inside the kernel.
#[derive(Clone)]
pub struct ScalarArg(Arg);

#[derive(Clone)]
enum Arg {
    Value(f64),
    Managed(Arc<Buffer>),
    Expr(Arc<Program>, Option<usize>),
    Invalid(Error),
}

impl From<f64> for ScalarArg {
    fn from(v: f64) -> Self {
        ScalarArg(Arg::Value(v))
    }
}

impl From<&Managed> for ScalarArg {
    fn from(m: &Managed) -> Self {
        ScalarArg(Arg::Managed(m.buf.clone()))
    }
}

impl From<Expr> for ScalarArg {
    fn from(e: Expr) -> Self {
        ScalarArg::from(&e)
    }
}

impl From<&Expr> for ScalarArg {
    fn from(e: &Expr) -> Self {
        match e.len() {
            Ok(len) => ScalarArg(Arg::Expr(
                Arc::new(Program::compile(e, EvalOptions::default())),
                len,
            )),
            Err(err) => ScalarArg(Arg::Invalid(err)),
        }
    }
}

impl ScalarArg {
    fn check(&self, core: &Arc<Core>) -> Result<()> {
        let len = match &self.0 {
            Arg::Value(_) => return Ok(()),
            Arg::Invalid(e) => return Err(e.clone()),
            Arg::Managed(b) => {
                if !Arc::ptr_eq(b.core(), core) {
                    return Err(Error::RuntimeMismatch);
                }
                Some(b.len())
            }
            Arg::Expr(p, len) => {
                if p.leaves().iter().any(|b| !Arc::ptr_eq(b.core(), core)) {
                    return Err(Error::RuntimeMismatch);
                }
                *len
            }
        };
        match len {
            None | Some(1) => Ok(()),
            Some(n) => Err(Error::ShapeMismatch {
                expected: 1,
                got: n,
            }),
        }
    }

    fn accesses(&self) -> Vec<(ObjectId, MemoryAccessMode)> {
        match &self.0 {
            Arg::Managed(b) => vec![(b.id(), Read)],
            Arg::Expr(p, _) => p.leaf_ids().into_iter().map(|id| (id, Read)).collect(),
            _ => Vec::new(),
        }
    }

    fn fused_ops(&self) -> u64 {
        match &self.0 {
            Arg::Expr(p, _) => p.op_count() as u64,
            _ => 0,
        }
    }

    /// Value inside a running kernel.
    fn resolve(&self, core: &Core, space: MemType) -> f64 {
        match &self.0 {
            Arg::Value(v) => *v,
            Arg::Managed(b) => b.read(space)[0],
            Arg::Expr(p, _) => p.eval_scalar(core, space),
            Arg::Invalid(_) => f64::NAN,
        }
    }
}

enum Slot<'a> {
    Guard(MappedRwLockReadGuard<'a, [f64]>),
    Owned(Vec<f64>),
    Same(usize),
}

/// Read access to several kernel inputs. An input that is also the output
/// is copied up front; repeated inputs share one lock.
struct Inputs<'a> {
    slots: Vec<Slot<'a>>,
}

impl<'a> Inputs<'a> {
    fn load(bufs: &[&'a Arc<Buffer>], out: Option<&Arc<Buffer>>, space: MemType) -> Inputs<'a> {
        let mut slots = Vec::with_capacity(bufs.len());
        for (k, b) in bufs.iter().enumerate() {
            let slot = if let Some(prev) = bufs[..k].iter().position(|p| p.id() == b.id()) {
                Slot::Same(prev)
            } else if out.is_some_and(|o| o.id() == b.id()) {
                Slot::Owned(b.read(space).to_vec())
            } else {
                Slot::Guard(b.read(space))
            };
            slots.push(slot);
        }
        Inputs { slots }
    }

    fn get(&self, k: usize) -> &[f64] {
        match &self.slots[k] {
            Slot::Guard(g) => g,
            Slot::Owned(v) => v,
            Slot::Same(p) => self.get(*p),
        }
    }
}

fn same_runtime(ctx: &Context, core: &Arc<Core>) -> Result<()> {
    if ctx.same_runtime(core) {
        Ok(())
    } else {
        Err(Error::RuntimeMismatch)
    }
}

fn check_len(op: &str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{op}: lengths {a} and {b} differ")))
    }
}

fn check_vectors(ctx: &Context, op: &str, vs: &[&DenseVector]) -> Result<()> {
    for v in vs {
        same_runtime(ctx, v.buf.core())?;
        check_len(op, vs[0].len(), v.len())?;
    }
    Ok(())
}

fn scalar_out(ctx: &Context, out: &Managed) -> Result<()> {
    same_runtime(ctx, out.buf.core())?;
    if out.len() != 1 {
        return Err(Error::ShapeMismatch {
            expected: 1,
            got: out.len(),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn launch(
    ctx: &Context,
    label: &str,
    accesses: &[(ObjectId, MemoryAccessMode)],
    kind: KernelKind,
    flops: u64,
    bytes: u64,
    fused: u64,
    task: impl FnOnce() + Send + 'static,
) -> Result<()> {
    bracketed_enqueue(ctx, label, accesses, task)?;
    let stats = &ctx.core().stats;
    stats.log_kernel(kind, flops, bytes);
    if fused > 0 {
        stats.log_fused_expr(fused);
    }
    Ok(())
}

/// out <- ||v||_2
pub fn vec_norm_async(v: &DenseVector, nt: NormType, out: &mut Managed, ctx: &Context) -> Result<()> {
    let NormType::Norm2 = nt;
    check_vectors(ctx, "norm", &[v])?;
    scalar_out(ctx, out)?;
    let n = v.len() as u64;
    let (vb, ob) = (v.buf.clone(), out.buf.clone());
    let space = ctx.core().kernel_space();
    launch(
        ctx,
        "VecNorm",
        &[(v.id(), Read), (out.id(), Write)],
        KernelKind::Norm,
        2 * n,
        8 * n,
        0,
        move || {
            let sum: f64 = vb.read(space).iter().fold(0.0, |s, x| s + x * x);
            ob.write(space, false)[0] = sum.sqrt();
        },
    )
}

/// out <- x'y
pub fn vec_dot_async(x: &DenseVector, y: &DenseVector, out: &mut Managed, ctx: &Context) -> Result<()> {
    check_vectors(ctx, "dot", &[x, y])?;
    scalar_out(ctx, out)?;
    let n = x.len() as u64;
    let (xb, yb, ob) = (x.buf.clone(), y.buf.clone(), out.buf.clone());
    let space = ctx.core().kernel_space();
    launch(
        ctx,
        "VecDot",
        &[(x.id(), Read), (y.id(), Read), (out.id(), Write)],
        KernelKind::Dot,
        2 * n,
        16 * n,
        0,
        move || {
            let sum = {
                let inp = Inputs::load(&[&xb, &yb], None, space);
                let (xs, ys) = (inp.get(0), inp.get(1));
                xs.iter().zip(ys).fold(0.0, |s, (a, b)| s + a * b)
            };
            ob.write(space, false)[0] = sum;
        },
    )
}

/// v <- alpha v
pub fn vec_scale_async(v: &DenseVector, alpha: impl Into<ScalarArg>, ctx: &Context) -> Result<()> {
    let alpha = alpha.into();
    check_vectors(ctx, "scale", &[v])?;
    alpha.check(ctx.core())?;
    let n = v.len() as u64;
    let mut acc = alpha.accesses();
    acc.push((v.id(), ReadWrite));
    let fused = alpha.fused_ops();
    let vb = v.buf.clone();
    let core = ctx.core().clone();
    let space = core.kernel_space();
    launch(ctx, "VecScale", &acc, KernelKind::Scale, n, 16 * n, fused, move || {
        let a = alpha.resolve(&core, space);
        for x in vb.write(space, true).iter_mut() {
            *x *= a;
        }
    })
}

/// y <- y + alpha x
pub fn vec_axpy_async(
    y: &DenseVector,
    alpha: impl Into<ScalarArg>,
    x: &DenseVector,
    ctx: &Context,
) -> Result<()> {
    let alpha = alpha.into();
    check_vectors(ctx, "axpy", &[y, x])?;
    alpha.check(ctx.core())?;
    let n = y.len() as u64;
    let mut acc = alpha.accesses();
    acc.extend([(x.id(), Read), (y.id(), ReadWrite)]);
    let fused = alpha.fused_ops();
    let (xb, yb) = (x.buf.clone(), y.buf.clone());
    let core = ctx.core().clone();
    let space = core.kernel_space();
    launch(ctx, "VecAXPY", &acc, KernelKind::Axpy, 2 * n, 24 * n, fused, move || {
        let a = alpha.resolve(&core, space);
        let inp = Inputs::load(&[&xb], Some(&yb), space);
        let xs = inp.get(0);
        for (yi, xi) in yb.write(space, true).iter_mut().zip(xs) {
            *yi += a * xi;
        }
    })
}

/// y <- x + beta y
pub fn vec_aypx_async(
    y: &DenseVector,
    beta: impl Into<ScalarArg>,
    x: &DenseVector,
    ctx: &Context,
) -> Result<()> {
    let beta = beta.into();
    check_vectors(ctx, "aypx", &[y, x])?;
    beta.check(ctx.core())?;
    let n = y.len() as u64;
    let mut acc = beta.accesses();
    acc.extend([(x.id(), Read), (y.id(), ReadWrite)]);
    let fused = beta.fused_ops();
    let (xb, yb) = (x.buf.clone(), y.buf.clone());
    let core = ctx.core().clone();
    let space = core.kernel_space();
    launch(ctx, "VecAYPX", &acc, KernelKind::Aypx, 2 * n, 24 * n, fused, move || {
        let b = beta.resolve(&core, space);
        let inp = Inputs::load(&[&xb], Some(&yb), space);
        let xs = inp.get(0);
        for (yi, xi) in yb.write(space, true).iter_mut().zip(xs) {
            *yi = xi + b * *yi;
        }
    })
}

/// Synchronous y <- x + beta y on the globally blocking context.
pub fn vec_aypx(y: &DenseVector, beta: f64, x: &DenseVector) -> Result<()> {
    let ctx = y.buf.core().blocking_context();
    vec_aypx_async(y, beta, x, &ctx)
}

/// w <- alpha x + y
pub fn vec_waxpy_async(
    w: &DenseVector,
    alpha: impl Into<ScalarArg>,
    x: &DenseVector,
    y: &DenseVector,
    ctx: &Context,
) -> Result<()> {
    let alpha = alpha.into();
    check_vectors(ctx, "waxpy", &[w, x, y])?;
    alpha.check(ctx.core())?;
    let n = w.len() as u64;
    let mut acc = alpha.accesses();
    acc.extend([(x.id(), Read), (y.id(), Read), (w.id(), Write)]);
    let fused = alpha.fused_ops();
    let (wb, xb, yb) = (w.buf.clone(), x.buf.clone(), y.buf.clone());
    let core = ctx.core().clone();
    let space = core.kernel_space();
    launch(ctx, "VecWAXPY", &acc, KernelKind::Waxpy, 2 * n, 24 * n, fused, move || {
        let a = alpha.resolve(&core, space);
        let inp = Inputs::load(&[&xb, &yb], Some(&wb), space);
        let (xs, ys) = (inp.get(0), inp.get(1));
        for ((wi, xi), yi) in wb.write(space, false).iter_mut().zip(xs).zip(ys) {
            *wi = a * xi + yi;
        }
    })
}

/// w <- x .* y
pub fn vec_pointwise_mult_async(
    w: &DenseVector,
    x: &DenseVector,
    y: &DenseVector,
    ctx: &Context,
) -> Result<()> {
    check_vectors(ctx, "pointwise_mult", &[w, x, y])?;
    let n = w.len() as u64;
    let (wb, xb, yb) = (w.buf.clone(), x.buf.clone(), y.buf.clone());
    let space = ctx.core().kernel_space();
    launch(
        ctx,
        "VecPointwiseMult",
        &[(x.id(), Read), (y.id(), Read), (w.id(), Write)],
        KernelKind::PointwiseMult,
        n,
        24 * n,
        0,
        move || {
            let inp = Inputs::load(&[&xb, &yb], Some(&wb), space);
            let (xs, ys) = (inp.get(0), inp.get(1));
            for ((wi, xi), yi) in wb.write(space, false).iter_mut().zip(xs).zip(ys) {
                *wi = xi * yi;
            }
        },
    )
}

/// y <- x
pub fn vec_copy_async(x: &DenseVector, y: &DenseVector, ctx: &Context) -> Result<()> {
    check_vectors(ctx, "copy", &[x, y])?;
    if x.id() == y.id() {
        return Ok(());
    }
    let n = x.len() as u64;
    let (xb, yb) = (x.buf.clone(), y.buf.clone());
    let space = ctx.core().kernel_space();
    launch(
        ctx,
        "VecCopy",
        &[(x.id(), Read), (y.id(), Write)],
        KernelKind::Copy,
        0,
        16 * n,
        0,
        move || {
            let xs = xb.read(space);
            yb.write(space, false).copy_from_slice(&xs);
        },
    )
}

/// x <- value
pub fn vec_set_async(x: &DenseVector, value: f64, ctx: &Context) -> Result<()> {
    check_vectors(ctx, "set", &[x])?;
    let n = x.len() as u64;
    let xb = x.buf.clone();
    let space = ctx.core().kernel_space();
    launch(
        ctx,
        "VecSet",
        &[(x.id(), Write)],
        KernelKind::Set,
        0,
        8 * n,
        0,
        move || xb.write(space, false).fill(value),
    )
}

/// y <- A x. Without a context the product runs synchronously on the
/// globally blocking context and still waits for pending writes to `x`.
pub fn mat_mult(a: &CsrMatrix, x: &DenseVector, y: &DenseVector, ctx: Option<&Context>) -> Result<()> {
    let owned;
    let ctx = match ctx {
        Some(c) => c,
        None => {
            owned = x.buf.core().blocking_context();
            &owned
        }
    };
    same_runtime(ctx, x.buf.core())?;
    same_runtime(ctx, y.buf.core())?;
    if a.n_cols() != x.len() || a.n_rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "mat_mult: {}x{} matrix, x has {}, y has {}",
            a.n_rows(),
            a.n_cols(),
            x.len(),
            y.len()
        )));
    }
    a.ensure_registered(ctx.core());
    let nnz = a.nnz() as u64;
    let n = a.n_rows() as u64;
    let data = a.data.clone();
    let (xb, yb) = (x.buf.clone(), y.buf.clone());
    let space = ctx.core().kernel_space();
    launch(
        ctx,
        "MatMult",
        &[(a.id(), Read), (x.id(), Read), (y.id(), Write)],
        KernelKind::MatMult,
        2 * nnz,
        12 * nnz + 4 * (n + 1) + 8 * (a.n_cols() as u64) + 8 * n,
        0,
        move || {
            let inp = Inputs::load(&[&xb], Some(&yb), space);
            data.spmv(inp.get(0), &mut yb.write(space, false));
        },
    )
}
