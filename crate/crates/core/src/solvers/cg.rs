use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::eval;
use crate::linalg::{
    mat_mult, vec_aypx, vec_axpy_async, vec_copy_async, vec_dot_async, vec_norm_async,
    vec_set_async, CsrMatrix, DenseVector, NormType,
};
use crate::managed::Managed;
use crate::solvers::pc::Preconditioner;
use crate::solvers::{
    check_system, solver_contexts, ConvergenceCallback, Method, SolveReport, SolverConfig,
    StopReason,
};

/// Preconditioned conjugate gradients from x0 = 0.
///
/// Per iteration: one product, two dots and a norm, three vector updates and
/// three scalar expressions. `b` is read once per iteration on the host; a
/// zero `b` means the residual vanished exactly and the solve stops.
pub fn cg_solve(
    a: &CsrMatrix,
    rhs: &DenseVector,
    x: &DenseVector,
    cfg: &SolverConfig,
    mut callback: Option<&mut ConvergenceCallback<'_>>,
) -> Result<SolveReport> {
    let rt = check_system(a, rhs, x, cfg)?;
    let [ca, cb, cc] = solver_contexts(&rt, cfg.mode);
    let n = rhs.len();
    let pc = Preconditioner::new(&rt, a, cfg.pc)?;

    let start = rt.flop_log();
    let r = DenseVector::zeros(&rt, n);
    let p = DenseVector::zeros(&rt, n);
    let z = DenseVector::zeros(&rt, n);
    let w = DenseVector::zeros(&rt, n);
    let mut am = Managed::new(&rt);
    let mut bm = Managed::new(&rt);
    let mut beta = Managed::new(&rt);
    let mut betaold = Managed::from_value(&rt, 1.0);
    let mut dp0 = Managed::new(&rt);

    vec_set_async(x, 0.0, &ca)?;
    vec_copy_async(rhs, &r, &ca)?;
    vec_set_async(&p, 0.0, &ca)?;
    pc.apply(&r, &z, &ca)?;
    vec_norm_async(&z, NormType::Norm2, &mut dp0, &ca)?;
    vec_dot_async(&z, &r, &mut beta, &cb)?;
    let after_setup = rt.flop_log();

    let mut history = vec![(0, dp0)];
    let mut reason = StopReason::MaxIterations;
    let mut iterations = 0;
    for i in 1..=cfg.max_it {
        bm.assign(eval(&beta / &betaold, Some(&ca))?)?;
        let bv = bm.front();
        if bv == 0.0 {
            reason = StopReason::Exact;
            break;
        }
        if !bv.is_finite() {
            return Err(Error::Breakdown {
                method: "cg",
                iteration: i,
                reason: "beta / betaold is not finite",
            });
        }
        vec_aypx(&p, bv, &z)?;
        mat_mult(a, &p, &w, None)?;
        vec_dot_async(&p, &w, &mut am, &cb)?;
        am.assign(eval(&beta / &am, Some(&cc))?)?;
        betaold.assign(eval(&beta, Some(&ca))?)?;
        vec_axpy_async(x, &am, &p, &cb)?;
        vec_axpy_async(&r, -&am, &w, &cc)?;
        pc.apply(&r, &z, &ca)?;
        let mut dp = Managed::new(&rt);
        vec_norm_async(&z, NormType::Norm2, &mut dp, &ca)?;
        iterations = i;
        let done = callback.as_mut().is_some_and(|cb| cb(i, &dp));
        history.push((i, dp));
        if done {
            reason = StopReason::Callback;
            break;
        }
        vec_dot_async(&z, &r, &mut beta, &cb)?;
    }
    let end = rt.flop_log();

    let objects = BTreeMap::from(
        [
            ("X", x.id()),
            ("R", r.id()),
            ("P", p.id()),
            ("Z", z.id()),
            ("W", w.id()),
            ("a", am.id()),
            ("b", bm.id()),
            ("beta", beta.id()),
            ("betaold", betaold.id()),
        ]
        .map(|(k, v)| (k.to_owned(), v)),
    );
    Ok(SolveReport {
        method: Method::Cg,
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
