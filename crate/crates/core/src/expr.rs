//! Symbolic expressions over managed values.
//!
//! Arithmetic on [`Managed`] values and constants builds an [`Expr`] DAG
//! without computing anything. [`eval`] freezes an expression into an
//! [`ExecutableExpression`]: constants are folded, structurally identical
//! subtrees are shared, and the result is a straight-line program that runs
//! as a single kernel per [`ExecutableExpression::execute`].

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::context::Context;
use crate::deptrack::{bracketed_enqueue, MemoryAccessMode};
use crate::error::{Error, Result};
use crate::ids::{ContextId, ObjectId};
use crate::managed::Managed;
use crate::memory::{Buffer, MemType};
use crate::runtime::Core;
use crate::stats::KernelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sqrt,
    Sin,
    Cos,
    Exp,
}

impl UnaryOp {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

impl BinaryOp {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Min => a.min(b),
            BinaryOp::Max => a.max(b),
        }
    }

    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

/// Reference to a managed value inside an expression. Keeps its storage alive.
#[derive(Clone)]
pub struct Leaf {
    buf: Arc<Buffer>,
}

impl Leaf {
    pub fn id(&self) -> ObjectId {
        self.buf.id()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.len() == 0
    }
}

#[derive(Clone)]
pub enum ExprNode {
    Leaf(Leaf),
    Constant(f64),
    Unary(UnaryOp, Arc<ExprNode>),
    Binary(BinaryOp, Arc<ExprNode>, Arc<ExprNode>),
}

impl fmt::Debug for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprNode::Leaf(l) => write!(f, "Leaf(#{})", l.id()),
            ExprNode::Constant(v) => write!(f, "Constant({v:?})"),
            ExprNode::Unary(op, c) => write!(f, "Unary({op:?}, {c:?})"),
            ExprNode::Binary(op, l, r) => write!(f, "Binary({op:?}, {l:?}, {r:?})"),
        }
    }
}

impl ExprNode {
    /// True if no leaf occurs in the tree.
    pub fn is_constant(&self) -> bool {
        match self {
            ExprNode::Leaf(_) => false,
            ExprNode::Constant(_) => true,
            ExprNode::Unary(_, c) => c.is_constant(),
            ExprNode::Binary(_, l, r) => l.is_constant() && r.is_constant(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    /// Constants broadcast to any length.
    Any,
    Len(usize),
    Mismatch(usize, usize),
}

impl Shape {
    fn combine(self, other: Shape) -> Shape {
        match (self, other) {
            (Shape::Mismatch(..), _) => self,
            (_, Shape::Mismatch(..)) => other,
            (Shape::Any, s) | (s, Shape::Any) => s,
            (Shape::Len(a), Shape::Len(b)) if a == b => self,
            (Shape::Len(a), Shape::Len(b)) => Shape::Mismatch(a, b),
        }
    }
}

/// Unevaluated expression. Composable with managed values, constants and
/// other expressions; nothing runs until it is evaluated.
#[derive(Clone)]
pub struct Expr {
    node: Arc<ExprNode>,
    shape: Shape,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.node.fmt(f)
    }
}

impl Expr {
    pub fn leaf(m: &Managed) -> Expr {
        Expr {
            node: Arc::new(ExprNode::Leaf(Leaf { buf: m.buf.clone() })),
            shape: Shape::Len(m.len()),
        }
    }

    /// Wraps a plain number as a constant expression.
    pub fn constant(v: f64) -> Expr {
        Expr {
            node: Arc::new(ExprNode::Constant(v)),
            shape: Shape::Any,
        }
    }

    pub fn node(&self) -> &ExprNode {
        &self.node
    }

    /// Element count, `None` for constant-only expressions.
    pub fn len(&self) -> Result<Option<usize>> {
        match self.shape {
            Shape::Any => Ok(None),
            Shape::Len(n) => Ok(Some(n)),
            Shape::Mismatch(a, b) => Err(Error::ShapeMismatch {
                expected: a,
                got: b,
            }),
        }
    }

    pub fn unary(self, op: UnaryOp) -> Expr {
        Expr {
            shape: self.shape,
            node: Arc::new(ExprNode::Unary(op, self.node)),
        }
    }

    pub fn binary(self, op: BinaryOp, rhs: impl IntoExpr) -> Expr {
        let rhs = rhs.into_expr();
        Expr {
            shape: self.shape.combine(rhs.shape),
            node: Arc::new(ExprNode::Binary(op, self.node, rhs.node)),
        }
    }

    pub fn abs(self) -> Expr {
        self.unary(UnaryOp::Abs)
    }

    pub fn sqrt(self) -> Expr {
        self.unary(UnaryOp::Sqrt)
    }

    pub fn sin(self) -> Expr {
        self.unary(UnaryOp::Sin)
    }

    pub fn cos(self) -> Expr {
        self.unary(UnaryOp::Cos)
    }

    pub fn exp(self) -> Expr {
        self.unary(UnaryOp::Exp)
    }

    pub fn min(self, rhs: impl IntoExpr) -> Expr {
        self.binary(BinaryOp::Min, rhs)
    }

    pub fn max(self, rhs: impl IntoExpr) -> Expr {
        self.binary(BinaryOp::Max, rhs)
    }
}

pub trait IntoExpr {
    fn into_expr(self) -> Expr;
}

impl IntoExpr for Expr {
    fn into_expr(self) -> Expr {
        self
    }
}

impl IntoExpr for &Expr {
    fn into_expr(self) -> Expr {
        self.clone()
    }
}

impl IntoExpr for &Managed {
    fn into_expr(self) -> Expr {
        Expr::leaf(self)
    }
}

impl IntoExpr for f64 {
    fn into_expr(self) -> Expr {
        Expr::constant(self)
    }
}

macro_rules! binary_ops {
    ($($trait:ident $method:ident $op:ident),*) => {$(
        impl<R: IntoExpr> $trait<R> for Expr {
            type Output = Expr;
            fn $method(self, rhs: R) -> Expr {
                self.binary(BinaryOp::$op, rhs)
            }
        }
        impl<R: IntoExpr> $trait<R> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: R) -> Expr {
                self.clone().binary(BinaryOp::$op, rhs)
            }
        }
        impl<R: IntoExpr> $trait<R> for &Managed {
            type Output = Expr;
            fn $method(self, rhs: R) -> Expr {
                Expr::leaf(self).binary(BinaryOp::$op, rhs)
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::constant(self).binary(BinaryOp::$op, rhs)
            }
        }
        impl $trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::constant(self).binary(BinaryOp::$op, rhs)
            }
        }
        impl $trait<&Managed> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Managed) -> Expr {
                Expr::constant(self).binary(BinaryOp::$op, rhs)
            }
        }
    )*};
}

binary_ops!(Add add Add, Sub sub Sub, Mul mul Mul, Div div Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.unary(UnaryOp::Neg)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.clone().unary(UnaryOp::Neg)
    }
}

impl Neg for &Managed {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::leaf(self).unary(UnaryOp::Neg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Load(usize),
    Const(f64),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Load(ObjectId),
    Const(u64),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
}

/// Straight-line program produced by [`eval`].
pub(crate) struct Program {
    instrs: Vec<Instr>,
    result: usize,
    leaves: Vec<Arc<Buffer>>,
    op_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Rewrite `(e / z) * z` to `e`. Changes rounding, so off by default.
    pub cancel_division: bool,
}

struct Compiler {
    instrs: Vec<Instr>,
    keys: HashMap<Key, usize>,
    leaves: Vec<Arc<Buffer>>,
    memo: HashMap<*const ExprNode, usize>,
    opts: EvalOptions,
}

impl Compiler {
    fn emit(&mut self, key: Key, instr: Instr) -> usize {
        if let Some(&slot) = self.keys.get(&key) {
            return slot;
        }
        self.instrs.push(instr);
        let slot = self.instrs.len() - 1;
        self.keys.insert(key, slot);
        slot
    }

    fn constant(&mut self, v: f64) -> usize {
        self.emit(Key::Const(v.to_bits()), Instr::Const(v))
    }

    fn as_const(&self, slot: usize) -> Option<f64> {
        match self.instrs[slot] {
            Instr::Const(v) => Some(v),
            _ => None,
        }
    }

    fn compile(&mut self, node: &Arc<ExprNode>) -> usize {
        let ptr = Arc::as_ptr(node);
        if let Some(&slot) = self.memo.get(&ptr) {
            return slot;
        }
        let slot = match &**node {
            ExprNode::Leaf(l) => {
                let id = l.id();
                if let Some(&slot) = self.keys.get(&Key::Load(id)) {
                    slot
                } else {
                    self.leaves.push(l.buf.clone());
                    let idx = self.leaves.len() - 1;
                    self.emit(Key::Load(id), Instr::Load(idx))
                }
            }
            ExprNode::Constant(v) => self.constant(*v),
            ExprNode::Unary(op, c) => {
                let s = self.compile(c);
                match self.as_const(s) {
                    Some(v) => self.constant(op.apply(v)),
                    None => self.emit(Key::Unary(*op, s), Instr::Unary(*op, s)),
                }
            }
            ExprNode::Binary(op, l, r) => {
                let a = self.compile(l);
                let b = self.compile(r);
                match (self.as_const(a), self.as_const(b)) {
                    (Some(x), Some(y)) => self.constant(op.apply(x, y)),
                    _ => match self.cancel(*op, a, b) {
                        Some(slot) => slot,
                        None => self.emit(Key::Binary(*op, a, b), Instr::Binary(*op, a, b)),
                    },
                }
            }
        };
        self.memo.insert(ptr, slot);
        slot
    }

    fn cancel(&self, op: BinaryOp, a: usize, b: usize) -> Option<usize> {
        if !self.opts.cancel_division || op != BinaryOp::Mul {
            return None;
        }
        match (self.instrs[a], self.instrs[b]) {
            (Instr::Binary(BinaryOp::Div, e, z), _) if z == b => Some(e),
            (_, Instr::Binary(BinaryOp::Div, e, z)) if z == a => Some(e),
            _ => None,
        }
    }

    /// Drops instructions not reachable from `result` and renumbers.
    fn finish(self, result: usize) -> Program {
        let mut live = vec![false; self.instrs.len()];
        live[result] = true;
        for i in (0..self.instrs.len()).rev() {
            if !live[i] {
                continue;
            }
            match self.instrs[i] {
                Instr::Unary(_, c) => live[c] = true,
                Instr::Binary(_, l, r) => {
                    live[l] = true;
                    live[r] = true;
                }
                _ => {}
            }
        }
        let mut remap = vec![usize::MAX; self.instrs.len()];
        let mut instrs = Vec::new();
        let mut leaves = Vec::new();
        for (i, instr) in self.instrs.iter().enumerate() {
            if !live[i] {
                continue;
            }
            let new = match *instr {
                Instr::Load(l) => {
                    leaves.push(self.leaves[l].clone());
                    Instr::Load(leaves.len() - 1)
                }
                Instr::Const(v) => Instr::Const(v),
                Instr::Unary(op, c) => Instr::Unary(op, remap[c]),
                Instr::Binary(op, l, r) => Instr::Binary(op, remap[l], remap[r]),
            };
            remap[i] = instrs.len();
            instrs.push(new);
        }
        let op_count = instrs
            .iter()
            .filter(|i| matches!(i, Instr::Unary(..) | Instr::Binary(..)))
            .count();
        Program {
            result: remap[result],
            instrs,
            leaves,
            op_count,
        }
    }
}

impl Program {
    pub(crate) fn compile(e: &Expr, opts: EvalOptions) -> Program {
        let mut c = Compiler {
            instrs: Vec::new(),
            keys: HashMap::new(),
            leaves: Vec::new(),
            memo: HashMap::new(),
            opts,
        };
        let result = c.compile(&e.node);
        c.finish(result)
    }

    pub(crate) fn op_count(&self) -> usize {
        self.op_count
    }

    pub(crate) fn leaves(&self) -> &[Arc<Buffer>] {
        &self.leaves
    }

    pub(crate) fn leaf_ids(&self) -> Vec<ObjectId> {
        self.leaves.iter().map(|b| b.id()).collect()
    }

    /// Evaluates element-wise. `values[k]` holds leaf `k`; leaves of length
    /// one broadcast.
    pub(crate) fn run(&self, values: &[Vec<f64>], len: usize) -> Vec<f64> {
        let mut regs = vec![0.0; self.instrs.len()];
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            for (k, instr) in self.instrs.iter().enumerate() {
                regs[k] = match *instr {
                    Instr::Load(l) => {
                        let v = &values[l];
                        if v.len() == 1 {
                            v[0]
                        } else {
                            v[i]
                        }
                    }
                    Instr::Const(v) => v,
                    Instr::Unary(op, c) => op.apply(regs[c]),
                    Instr::Binary(op, a, b) => op.apply(regs[a], regs[b]),
                };
            }
            out.push(regs[self.result]);
        }
        out
    }

    /// Loads the leaves in `space` and evaluates a scalar result. Meant to be
    /// called from inside a kernel.
    pub(crate) fn eval_scalar(&self, core: &Core, space: MemType) -> f64 {
        let values: Vec<Vec<f64>> = self
            .leaves
            .iter()
            .map(|b| b.read(space).to_vec())
            .collect();
        core.stats.count_leaf_reads(values.len() as u64);
        self.run(&values, 1)[0]
    }

    fn rebuild(&self) -> ExprNode {
        let mut nodes: Vec<Arc<ExprNode>> = Vec::with_capacity(self.instrs.len());
        for instr in &self.instrs {
            let node = match *instr {
                Instr::Load(l) => ExprNode::Leaf(Leaf {
                    buf: self.leaves[l].clone(),
                }),
                Instr::Const(v) => ExprNode::Constant(v),
                Instr::Unary(op, c) => ExprNode::Unary(op, nodes[c].clone()),
                Instr::Binary(op, a, b) => ExprNode::Binary(op, nodes[a].clone(), nodes[b].clone()),
            };
            nodes.push(Arc::new(node));
        }
        (*nodes[self.result]).clone()
    }

    fn pretty(&self) -> String {
        let mut s = String::new();
        for (k, instr) in self.instrs.iter().enumerate() {
            let _ = match *instr {
                Instr::Load(l) => writeln!(s, "%{k} = load #{}", self.leaves[l].id()),
                Instr::Const(v) => writeln!(s, "%{k} = const {v:?}"),
                Instr::Unary(op, c) => writeln!(s, "%{k} = {} %{c}", op.name()),
                Instr::Binary(op, a, b) => writeln!(s, "%{k} = {} %{a}, %{b}", op.name()),
            };
        }
        let _ = writeln!(s, "return %{}", self.result);
        s
    }
}

/// A frozen, optimized expression bound to a context. It offers no
/// arithmetic, so it cannot be composed further; it can be executed any
/// number of times into any number of targets.
#[derive(Clone)]
pub struct ExecutableExpression {
    program: Arc<Program>,
    context: Option<Context>,
    len: Option<usize>,
}

impl fmt::Debug for ExecutableExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExecutableExpression")
            .field("bound_context", &self.bound_context())
            .field("op_count", &self.op_count())
            .field("leaves", &self.leaf_ids())
            .finish()
    }
}

/// Freezes `e`. With `ctx = None` execution happens synchronously on the
/// target runtime's globally blocking context.
pub fn eval(e: impl IntoExpr, ctx: Option<&Context>) -> Result<ExecutableExpression> {
    eval_with(e, ctx, EvalOptions::default())
}

pub fn eval_with(
    e: impl IntoExpr,
    ctx: Option<&Context>,
    opts: EvalOptions,
) -> Result<ExecutableExpression> {
    let e = e.into_expr();
    let len = e.len()?;
    Ok(ExecutableExpression {
        program: Arc::new(Program::compile(&e, opts)),
        context: ctx.cloned(),
        len,
    })
}

impl ExecutableExpression {
    /// `None` when bound to the implicit globally blocking context.
    pub fn bound_context(&self) -> Option<ContextId> {
        self.context.as_ref().map(Context::id)
    }

    /// Arithmetic operations per element after optimization.
    pub fn op_count(&self) -> usize {
        self.program.op_count()
    }

    /// Distinct leaves in load order.
    pub fn leaf_ids(&self) -> Vec<ObjectId> {
        self.program.leaf_ids()
    }

    pub fn len(&self) -> Option<usize> {
        self.len
    }

    /// The optimized DAG.
    pub fn root(&self) -> ExprNode {
        self.program.rebuild()
    }

    /// Deterministic listing of the optimized program.
    pub fn pretty(&self) -> String {
        self.program.pretty()
    }

    /// Enqueues one kernel computing the expression into `target`.
    pub fn execute(&self, target: &mut Managed) -> Result<()> {
        let core = target.buf.core().clone();
        let ctx = match &self.context {
            Some(c) => c.clone(),
            None => core.blocking_context(),
        };
        if !ctx.same_runtime(&core)
            || self
                .program
                .leaves()
                .iter()
                .any(|b| !Arc::ptr_eq(b.core(), &core))
        {
            return Err(Error::RuntimeMismatch);
        }
        let len = target.len();
        if let Some(n) = self.len {
            if n != len {
                return Err(Error::ShapeMismatch {
                    expected: len,
                    got: n,
                });
            }
        }
        let mut accesses: Vec<(ObjectId, MemoryAccessMode)> = self
            .program
            .leaf_ids()
            .into_iter()
            .map(|id| (id, MemoryAccessMode::Read))
            .collect();
        accesses.push((target.id(), MemoryAccessMode::Write));

        let n_leaves = self.program.leaves().len() as u64;
        core.stats.log_kernel(
            KernelKind::ScalarExpr,
            (self.program.op_count() * len) as u64,
            8 * (n_leaves + 1) * len as u64,
        );
        let program = self.program.clone();
        let out = target.buf.clone();
        let space = core.kernel_space();
        let kcore = core.clone();
        bracketed_enqueue(&ctx, "ExprExecute", &accesses, move || {
            let values: Vec<Vec<f64>> = program
                .leaves()
                .iter()
                .map(|b| b.read(space).to_vec())
                .collect();
            kcore.stats.count_leaf_reads(values.len() as u64);
            let result = program.run(&values, len);
            out.write(space, false).copy_from_slice(&result);
        })?;
        Ok(())
    }
}
