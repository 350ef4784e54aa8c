use std::collections::BTreeMap;
use std::mem::swap;

use crate::context::Context;
use crate::error::{Error, Result};
use crate::expr::{eval, Expr};
use crate::linalg::{
    mat_mult, vec_aypx_async, vec_axpy_async, vec_copy_async, vec_dot_async, vec_norm_async,
    vec_set_async, vec_waxpy_async, CsrMatrix, DenseVector, NormType,
};
use crate::managed::Managed;
use crate::solvers::pc::Preconditioner;
use crate::solvers::{
    check_system, solver_contexts, ConvergenceCallback, Method, SolveReport, SolverConfig,
    StopReason,
};

struct Operator<'a> {
    a: &'a CsrMatrix,
    pc: Preconditioner,
    tmp: DenseVector,
}

impl Operator<'_> {
    /// out <- B A v
    fn apply(&self, v: &DenseVector, out: &DenseVector, ctx: &Context) -> Result<()> {
        if self.pc.is_identity() {
            return mat_mult(self.a, v, out, Some(ctx));
        }
        mat_mult(self.a, v, &self.tmp, Some(ctx))?;
        self.pc.apply(&self.tmp, out, ctx)
    }
}

/// Left-preconditioned transpose-free QMR from x0 = 0.
///
/// Each outer iteration applies the operator twice and performs two
/// quasi-minimization half steps. Vector work runs on context a, the scalar
/// recurrence on b and the solution update on c. The residual estimate of
/// every half step goes into the history and to the callback. `rho` is read
/// on the host once per iteration to stop on an exactly vanished residual
/// and to report breakdown.
pub fn tfqmr_solve(
    a: &CsrMatrix,
    rhs: &DenseVector,
    x: &DenseVector,
    cfg: &SolverConfig,
    mut callback: Option<&mut ConvergenceCallback<'_>>,
) -> Result<SolveReport> {
    let rt = check_system(a, rhs, x, cfg)?;
    let [ca, cb, cc] = solver_contexts(&rt, cfg.mode);
    let n = rhs.len();
    let op = Operator {
        a,
        pc: Preconditioner::new(&rt, a, cfg.pc)?,
        tmp: DenseVector::zeros(&rt, n),
    };

    let start = rt.flop_log();
    let vecs: Vec<DenseVector> = (0..8).map(|_| DenseVector::zeros(&rt, n)).collect();
    let [r, rp, u, p, v, q, t, auq] = <[&DenseVector; 8]>::try_from(vecs.iter().collect::<Vec<_>>())
        .expect("eight work vectors");
    let d = DenseVector::zeros(&rt, n);
    let scalar = |v: f64| Managed::from_value(&rt, v);
    let (mut s, mut am, mut bm) = (scalar(0.0), scalar(0.0), scalar(0.0));
    let (mut psi, mut psiold, mut cm) = (scalar(0.0), scalar(0.0), scalar(0.0));
    let (mut eta, mut etaold, mut cf) = (scalar(0.0), scalar(0.0), scalar(0.0));
    let (mut tau, mut dp, mut dpold) = (scalar(0.0), scalar(0.0), scalar(0.0));
    let (mut rho, mut rhoold) = (scalar(0.0), scalar(0.0));

    vec_set_async(x, 0.0, &cc)?;
    vec_set_async(&d, 0.0, &cc)?;
    op.pc.apply(rhs, r, &ca)?;
    vec_norm_async(r, NormType::Norm2, &mut dpold, &ca)?;
    tau.assign(eval(&dpold, Some(&cb))?)?;
    vec_copy_async(r, rp, &ca)?;
    vec_dot_async(r, rp, &mut rhoold, &ca)?;
    vec_copy_async(r, u, &ca)?;
    vec_copy_async(r, p, &ca)?;
    op.apply(p, v, &ca)?;
    let after_setup = rt.flop_log();

    let mut history = Vec::new();
    let mut reason = StopReason::MaxIterations;
    let mut iterations = 0;
    'outer: for i in 1..=cfg.max_it {
        let rho_h = rhoold.front();
        if rho_h == 0.0 && dpold.front() == 0.0 {
            reason = StopReason::Exact;
            break;
        }
        if rho_h == 0.0 || !rho_h.is_finite() {
            return Err(Error::Breakdown {
                method: "tfqmr",
                iteration: i,
                reason: "rho vanished with a nonzero residual",
            });
        }
        iterations = i;
        vec_dot_async(v, rp, &mut s, &ca)?;
        am.assign(eval(&rhoold / &s, Some(&cb))?)?;
        vec_waxpy_async(q, -&am, v, u, &ca)?;
        vec_waxpy_async(t, 1.0, u, q, &ca)?;
        op.apply(t, auq, &ca)?;
        vec_axpy_async(r, -&am, auq, &ca)?;
        vec_norm_async(r, NormType::Norm2, &mut dp, &ca)?;
        for m in 0..2 {
            let w = if m == 0 {
                (&dp * &dpold).sqrt()
            } else {
                Expr::leaf(&dp)
            };
            psi.assign(eval(w / Expr::leaf(&tau).max(f64::MIN_POSITIVE), Some(&cb))?)?;
            cm.assign(eval(1.0 / (1.0 + &psi * &psi).sqrt(), Some(&cb))?)?;
            tau.assign(eval(&tau * &psi * &cm, Some(&cb))?)?;
            eta.assign(eval(&cm * &cm * &am, Some(&cb))?)?;
            cf.assign(eval(&psiold * &psiold * &etaold / &am, Some(&cb))?)?;
            vec_aypx_async(&d, &cf, if m == 0 { u } else { q }, &cc)?;
            vec_axpy_async(x, &eta, &d, &cc)?;
            let mut est = Managed::new(&rt);
            let scale = ((2 * (i - 1) + m + 2) as f64).sqrt();
            est.assign(eval(&tau * scale, Some(&cb))?)?;
            let done = callback.as_mut().is_some_and(|f| f(i, &est));
            history.push((i, est));
            swap(&mut etaold, &mut eta);
            swap(&mut psiold, &mut psi);
            if done {
                reason = StopReason::Callback;
                break 'outer;
            }
        }
        vec_dot_async(r, rp, &mut rho, &ca)?;
        bm.assign(eval(&rho / &rhoold, Some(&cb))?)?;
        vec_waxpy_async(u, &bm, q, r, &ca)?;
        vec_axpy_async(q, &bm, p, &ca)?;
        vec_waxpy_async(p, &bm, q, u, &ca)?;
        op.apply(p, v, &ca)?;
        swap(&mut rhoold, &mut rho);
        swap(&mut dpold, &mut dp);
    }
    let end = rt.flop_log();

    let objects = BTreeMap::from(
        [
            ("X", x.id()),
            ("R", r.id()),
            ("D", d.id()),
            ("a", am.id()),
            ("tau", tau.id()),
        ]
        .map(|(k, v)| (k.to_owned(), v)),
    );
    Ok(SolveReport {
        method: Method::Tfqmr,
        mode: cfg.mode,
        iterations,
        reason,
        contexts: vec![ca.id(), cb.id(), cc.id()],
        objects,
        setup_log: after_setup.since(&start),
        loop_log: end.since(&after_setup),
        history,
    })
}
