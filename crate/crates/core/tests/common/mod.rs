//! Reference implementations shared by the integration tests. Nothing here
//! calls into the library's numerics; each oracle is computed independently.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamsolve::expr::{BinaryOp, UnaryOp};
use streamsolve::linalg::CsrMatrix;
use streamsolve::trace::{self, TraceEntry};
use streamsolve::{
    BracketId, Expr, Managed, MemType, MemoryAccessMode, Region, RegionAttributes, Runtime,
    RuntimeConfig, StreamType, TaskId,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Neumaier-compensated 2-norm.
pub fn norm2(v: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in v {
        let t = s + x * x;
        if s.abs() >= (x * x).abs() {
            c += (s - t) + x * x;
        } else {
            c += (x * x - t) + s;
        }
        s = t;
    }
    (s + c).sqrt()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want || (got.is_nan() && want.is_nan()) {
        return 0.0;
    }
    (got - want).abs() / want.abs().max(got.abs()).max(f64::MIN_POSITIVE)
}

pub fn task_spans(entries: &[TraceEntry]) -> HashMap<TaskId, (u64, u64)> {
    trace::tasks(entries)
        .map(|t| (t.task, (t.start_ns, t.end_ns)))
        .collect()
}

// ---------------------------------------------------------------------------
// Randomized access programs

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub ctx: usize,
    pub obj: usize,
    pub mode: MemoryAccessMode,
}

#[derive(Debug, Clone)]
pub struct AccessProgram {
    pub seed: u64,
    pub contexts: usize,
    pub objects: usize,
    pub accesses: Vec<Access>,
    pub jitter: Duration,
}

impl AccessProgram {
    pub fn random(seed: u64, contexts: (usize, usize), len: (usize, usize), jitter: Duration) -> Self {
        let mut r = rng(seed);
        let contexts = r.gen_range(contexts.0..=contexts.1);
        let objects = r.gen_range(1..=6);
        let n = r.gen_range(len.0..=len.1);
        let accesses = (0..n)
            .map(|_| Access {
                ctx: r.gen_range(0..contexts),
                obj: r.gen_range(0..objects),
                mode: match r.gen_range(0..5) {
                    0 | 1 => MemoryAccessMode::Read,
                    2 | 3 => MemoryAccessMode::Write,
                    _ => MemoryAccessMode::ReadWrite,
                },
            })
            .collect();
        AccessProgram {
            seed,
            contexts,
            objects,
            accesses,
            jitter,
        }
    }
}

fn writes(mode: MemoryAccessMode) -> bool {
    !matches!(mode, MemoryAccessMode::Read)
}

#[derive(Debug, Default, Clone)]
pub struct AccessOutcome {
    /// Conflicting pairs whose later access started before the earlier ended.
    pub order_violations: usize,
    /// Tasks that observed a version other than the sequential one.
    pub data_violations: usize,
    pub conflicting_pairs: usize,
    pub edges: usize,
    pub read_read_edges: usize,
    /// Bracket log order differs from issue order.
    pub program_order_mismatch: bool,
}

/// Issues the program from one thread with one task per bracket, then checks
/// the trace against the ordering rule and the edge set for read-read pairs.
pub fn run_access_program(p: &AccessProgram) -> AccessOutcome {
    let rt = Runtime::new(RuntimeConfig {
        kernel_space: MemType::Host,
        jitter: p.jitter,
        seed: p.seed,
        ..RuntimeConfig::default()
    });
    let ctxs: Vec<_> = (0..p.contexts)
        .map(|_| rt.create_context(StreamType::DefaultBlocking))
        .collect();
    let ids: Vec<_> = (0..p.objects)
        .map(|k| {
            let region = Region::new(0x10_0000 + 0x1000 * k, 64);
            rt.register_memory(region, RegionAttributes::new(MemType::Host, 64, 8))
                .expect("register")
                .id
        })
        .collect();
    let versions: Arc<Vec<AtomicU64>> = Arc::new((0..p.objects).map(|_| AtomicU64::new(0)).collect());
    let bad = Arc::new(AtomicU64::new(0));
    let mut written = vec![0u64; p.objects];
    let mut tasks = Vec::with_capacity(p.accesses.len());
    for (i, a) in p.accesses.iter().enumerate() {
        let ctx = &ctxs[a.ctx];
        let desc = format!("access{i}");
        ctx.mark_intent_begin(ids[a.obj], a.mode, &desc).expect("begin");
        let expected = written[a.obj];
        let (versions, bad, obj, w) = (versions.clone(), bad.clone(), a.obj, writes(a.mode));
        let task = ctx
            .launch(&desc, move || {
                let seen = versions[obj].load(Ordering::SeqCst);
                if seen != expected {
                    bad.fetch_add(1, Ordering::SeqCst);
                }
                if w {
                    versions[obj].store(expected + 1, Ordering::SeqCst);
                }
            })
            .expect("launch");
        ctx.mark_intent_end(ids[a.obj], a.mode, &desc).expect("end");
        if w {
            written[a.obj] += 1;
        }
        tasks.push(task);
    }
    rt.synchronize_all();

    let mut out = AccessOutcome {
        data_violations: bad.load(Ordering::SeqCst) as usize,
        ..AccessOutcome::default()
    };
    let spans = task_spans(&rt.trace());
    for j in 0..p.accesses.len() {
        for i in 0..j {
            let (a, b) = (p.accesses[i], p.accesses[j]);
            if a.obj != b.obj || (!writes(a.mode) && !writes(b.mode)) {
                continue;
            }
            out.conflicting_pairs += 1;
            if spans[&tasks[j]].0 < spans[&tasks[i]].1 {
                out.order_violations += 1;
            }
        }
    }
    let brackets = rt.brackets();
    let descs: Vec<String> = brackets.iter().map(|b| b.description.clone()).collect();
    let issued: Vec<String> = (0..p.accesses.len()).map(|i| format!("access{i}")).collect();
    out.program_order_mismatch = descs != issued;
    let modes: HashMap<BracketId, MemoryAccessMode> =
        brackets.iter().map(|b| (b.bracket, b.mode)).collect();
    for e in rt.edges() {
        out.edges += 1;
        if modes.get(&e.waiter) == Some(&MemoryAccessMode::Read)
            && modes.get(&e.waitee) == Some(&MemoryAccessMode::Read)
        {
            out.read_read_edges += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Expression DAGs

#[derive(Debug, Clone)]
pub enum Node {
    Leaf(usize),
    Const(f64),
    Un(UnaryOp, Box<Node>),
    Bin(BinaryOp, Box<Node>, Box<Node>),
}

pub struct DagGen<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub leaves: usize,
    pool: Vec<Node>,
}

impl<'a> DagGen<'a> {
    pub fn new(rng: &'a mut ChaCha8Rng, leaves: usize) -> Self {
        DagGen {
            rng,
            leaves,
            pool: Vec::new(),
        }
    }

    /// Random expression of depth at most `depth`. Previously generated
    /// subtrees are reused so the result is a DAG with duplicated structure.
    /// Divisors are kept at least 1e-3 in magnitude, square roots and
    /// exponentials get bounded arguments.
    pub fn gen(&mut self, depth: usize) -> Node {
        if depth > 1 && !self.pool.is_empty() && self.rng.gen_bool(0.15) {
            let k = self.rng.gen_range(0..self.pool.len());
            if self.pool[k].depth() <= depth {
                return self.pool[k].clone();
            }
        }
        let node = if depth <= 1 || self.rng.gen_bool(0.2) {
            if self.leaves > 0 && self.rng.gen_bool(0.7) {
                Node::Leaf(self.rng.gen_range(0..self.leaves))
            } else {
                Node::Const(self.rng.gen_range(-10.0..10.0))
            }
        } else if self.rng.gen_bool(0.3) {
            let c = Box::new(self.gen(depth - 1));
            match self.rng.gen_range(0..6) {
                0 => Node::Un(UnaryOp::Neg, c),
                1 => Node::Un(UnaryOp::Abs, c),
                2 => Node::Un(UnaryOp::Sqrt, Box::new(Node::Un(UnaryOp::Abs, c))),
                3 => Node::Un(UnaryOp::Sin, c),
                4 => Node::Un(UnaryOp::Cos, c),
                _ => Node::Un(UnaryOp::Exp, Box::new(Node::Un(UnaryOp::Sin, c))),
            }
        } else {
            let l = Box::new(self.gen(depth - 1));
            let r = Box::new(self.gen(depth - 1));
            match self.rng.gen_range(0..6) {
                0 => Node::Bin(BinaryOp::Add, l, r),
                1 => Node::Bin(BinaryOp::Sub, l, r),
                2 => Node::Bin(BinaryOp::Mul, l, r),
                3 => {
                    let safe = Node::Bin(
                        BinaryOp::Max,
                        Box::new(Node::Un(UnaryOp::Abs, r)),
                        Box::new(Node::Const(1e-3)),
                    );
                    Node::Bin(BinaryOp::Div, l, Box::new(safe))
                }
                4 => Node::Bin(BinaryOp::Min, l, r),
                _ => Node::Bin(BinaryOp::Max, l, r),
            }
        };
        self.pool.push(node.clone());
        node
    }
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) | Node::Const(_) => 1,
            Node::Un(_, c) => 1 + c.depth(),
            Node::Bin(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn leaf_set(&self, out: &mut BTreeSet<usize>) {
        match self {
            Node::Leaf(k) => {
                out.insert(*k);
            }
            Node::Const(_) => {}
            Node::Un(_, c) => c.leaf_set(out),
            Node::Bin(_, l, r) => {
                l.leaf_set(out);
                r.leaf_set(out);
            }
        }
    }

    /// Direct recursive interpretation.
    pub fn interpret(&self, leaf: &dyn Fn(usize) -> f64) -> f64 {
        match self {
            Node::Leaf(k) => leaf(*k),
            Node::Const(v) => *v,
            Node::Un(op, c) => {
                let x = c.interpret(leaf);
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Abs => x.abs(),
                    UnaryOp::Sqrt => x.sqrt(),
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Exp => x.exp(),
                }
            }
            Node::Bin(op, l, r) => {
                let (a, b) = (l.interpret(leaf), r.interpret(leaf));
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    BinaryOp::Min => a.min(b),
                    BinaryOp::Max => a.max(b),
                }
            }
        }
    }

    pub fn build(&self, leaves: &[Managed]) -> Expr {
        match self {
            Node::Leaf(k) => Expr::leaf(&leaves[*k]),
            Node::Const(v) => Expr::constant(*v),
            Node::Un(op, c) => c.build(leaves).unary(*op),
            Node::Bin(op, l, r) => l.build(leaves).binary(*op, r.build(leaves)),
        }
    }
}

// ---------------------------------------------------------------------------
// Stencils

/// Counts stored entries by visiting every cell and every neighbour offset.
pub fn brute_force_nnz(dim: usize, points: usize, grid: &[usize]) -> usize {
    let boxed = matches!(points, 9 | 27);
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
        .map(|mut k| {
            (0..dim)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| boxed || o.iter().filter(|&&v| v != 0).count() <= 1)
        .collect();
    let cells: usize = grid.iter().product();
    let mut count = 0;
    for mut c in 0..cells {
        let coord: Vec<i64> = grid
            .iter()
            .map(|&g| {
                let v = (c % g) as i64;
                c /= g;
                v
            })
            .collect();
        for o in &offsets {
            if coord
                .iter()
                .zip(o)
                .zip(grid)
                .all(|((&x, &d), &g)| (0..g as i64).contains(&(x + d)))
            {
                count += 1;
            }
        }
    }
    count
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n_rows(), a.n_cols());
    for i in 0..a.n_rows() {
        for (j, v) in a.row(i) {
            m[(i, j)] += v;
        }
    }
    m
}

pub fn exactly_symmetric(a: &CsrMatrix) -> bool {
    let d = dense(a);
    d == d.transpose()
}

pub fn min_eigenvalue(a: &CsrMatrix) -> f64 {
    dense(a).symmetric_eigen().eigenvalues.min()
}
