mod common;

use std::collections::BTreeSet;
use std::time::Duration;

use proptest::prelude::*;

use common::{rel_err, rng, DagGen};
use streamsolve::expr::{BinaryOp, ExprNode, UnaryOp};
use streamsolve::{
    eval, eval_with, EvalOptions, Expr, Managed, MemType, Runtime, RuntimeConfig, StreamType,
};

fn scalars(rt: &Runtime, vals: &[f64]) -> Vec<Managed> {
    vals.iter().map(|&v| Managed::from_value(rt, v)).collect()
}

#[test]
fn building_is_symbolic() {
    let rt = Runtime::default();
    let v = scalars(&rt, &[1.0, 2.0, 4.0]);
    let (x, y, z) = (&v[0], &v[1], &v[2]);
    rt.clear_trace();
    let expr1 = (x + y) / z;
    match expr1.node() {
        ExprNode::Binary(BinaryOp::Div, l, r) => {
            assert!(matches!(**l, ExprNode::Binary(BinaryOp::Add, _, _)));
            assert!(matches!(**r, ExprNode::Leaf(_)));
        }
        other => panic!("unexpected {other:?}"),
    }
    let e2 = (expr1.clone() * z).sin() + 15.0;
    match e2.node() {
        ExprNode::Binary(BinaryOp::Add, l, r) => {
            assert!(matches!(**l, ExprNode::Unary(UnaryOp::Sin, _)));
            assert!(matches!(**r, ExprNode::Constant(c) if c == 15.0));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(rt.trace().is_empty());
    assert_eq!(rt.leaf_reads(), 0);
}

#[test]
fn constants_fold_completely() {
    let c = Expr::constant(2.0) * 3.0 + 1.0;
    assert!(c.node().is_constant());
    let ee = eval(&c, None).unwrap();
    assert_eq!(ee.op_count(), 0);
    assert!(matches!(ee.root(), ExprNode::Constant(v) if v == 7.0));
    let rt = Runtime::default();
    let mut t = Managed::new(&rt);
    ee.execute(&mut t).unwrap();
    assert_eq!(t.front(), 7.0);
}

#[test]
fn common_subexpressions_are_computed_once() {
    let rt = Runtime::default();
    let v = scalars(&rt, &[1.0, 2.0]);
    let ctx = rt.create_context(StreamType::DefaultBlocking);
    let e = (&v[0] + &v[1]) + (&v[0] + &v[1]);
    let ee = eval(e, Some(&ctx)).unwrap();
    assert_eq!(ee.op_count(), 2);
    assert_eq!(ee.leaf_ids(), vec![v[0].id(), v[1].id()]);
    assert_eq!(ee.bound_context(), Some(ctx.id()));
    let mut t = Managed::new(&rt);
    ee.execute(&mut t).unwrap();
    assert_eq!(t.front(), 6.0);
    assert_eq!(rt.leaf_reads(), 2);
}

#[test]
fn cancelled_division_matches_the_simplified_form() {
    let rt = Runtime::default();
    let v = scalars(&rt, &[0.3, 1.7, 2.9]);
    let (x, y, z) = (&v[0], &v[1], &v[2]);
    let build = || (((x + y) / z) * z).sin() + 15.0;
    let direct = (0.3f64 + 1.7).sin() + 15.0;

    let plain = eval(build(), None).unwrap();
    let mut t = Managed::new(&rt);
    plain.execute(&mut t).unwrap();
    assert!(rel_err(t.front(), direct) < 1e-14);
    assert_eq!(plain.op_count(), 5);

    let cancelled = eval_with(build(), None, EvalOptions { cancel_division: true }).unwrap();
    cancelled.execute(&mut t).unwrap();
    assert_eq!(cancelled.op_count(), 3);
    assert_eq!(t.front(), direct);
}

#[test]
fn executes_into_several_targets() {
    let rt = Runtime::default();
    let ctx = rt.create_context(StreamType::DefaultBlocking);
    let v = scalars(&rt, &[1.0, 2.0, 4.0]);
    let ee = eval((&v[0] + &v[1]) / &v[2], Some(&ctx)).unwrap();
    let mut w = Managed::new(&rt);
    let mut x = Managed::new(&rt);
    ee.execute(&mut w).unwrap();
    ee.execute(&mut x).unwrap();
    assert_eq!(w.front(), 0.75);
    assert_eq!(x.front(), 0.75);
}

#[test]
fn pending_leaf_is_waited_for() {
    let rt = Runtime::new(RuntimeConfig {
        launch_latency: Duration::from_millis(10),
        ..RuntimeConfig::default()
    });
    let a = rt.create_context(StreamType::DefaultBlocking);
    let b = rt.create_context(StreamType::DefaultBlocking);
    let src = Managed::from_value(&rt, 2.0);
    let mut leaf = Managed::new(&rt);
    leaf.assign(eval(&src * 21.0, Some(&a)).unwrap()).unwrap();
    let mut out = Managed::new(&rt);
    out.assign(eval(&leaf + 0.5, Some(&b)).unwrap()).unwrap();
    assert_eq!(out.front(), 42.5);
}

#[test]
fn shapes_are_checked() {
    let rt = Runtime::default();
    let a = Managed::from_values(&rt, &[1.0, 2.0]).unwrap();
    let b = Managed::from_values(&rt, &[1.0, 2.0, 3.0]).unwrap();
    assert!(eval(&a + &b, None).is_err());
    let ok = eval(&a * 2.0, None).unwrap();
    let mut wrong = Managed::new(&rt);
    assert!(ok.execute(&mut wrong).is_err());
    // No broadcasting: a length-one leaf is still a shape of its own.
    let s = Managed::from_value(&rt, 10.0);
    assert!(eval(&a * &s, None).is_err());
    let mut t = Managed::from_values(&rt, &[0.0, 0.0]).unwrap();
    eval(&a * 10.0, None).unwrap().execute(&mut t).unwrap();
    assert_eq!(t.to_vec(), [10.0, 20.0]);
}

#[test]
fn division_by_zero_is_ieee() {
    let rt = Runtime::default();
    let v = scalars(&rt, &[1.0, 0.0]);
    let mut t = Managed::new(&rt);
    t.assign(&v[0] / &v[1]).unwrap();
    assert_eq!(t.front(), f64::INFINITY);
    t.assign(&v[1] / &v[1]).unwrap();
    assert!(t.front().is_nan());
}

#[test]
fn unary_and_binary_functions() {
    let rt = Runtime::default();
    let v = scalars(&rt, &[-2.0, 3.0]);
    let mut t = Managed::new(&rt);
    let cases: Vec<(Expr, f64)> = vec![
        (-&v[0], 2.0),
        (v[0].to_expr().abs(), 2.0),
        (v[1].to_expr().sqrt(), 3f64.sqrt()),
        (v[0].to_expr().cos(), (-2f64).cos()),
        (v[0].to_expr().exp(), (-2f64).exp()),
        (v[0].to_expr().min(&v[1]), -2.0),
        (v[0].to_expr().max(&v[1]), 3.0),
        (&v[0] - &v[1], -5.0),
        (2.0 - &v[1], -1.0),
    ];
    for (e, want) in cases {
        t.assign(e).unwrap();
        assert_eq!(t.front(), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Compiled programs agree with direct recursive interpretation, and a
    /// duplicated tree costs exactly one extra operation.
    #[test]
    fn optimizer_is_sound(seed in any::<u64>(), leaves in 0usize..5, depth in 1usize..=6, len in 1usize..4) {
        let rt = Runtime::new(RuntimeConfig { kernel_space: MemType::Host, ..RuntimeConfig::default() });
        let mut r = rng(seed);
        let values: Vec<Vec<f64>> = (0..leaves)
            .map(|i| (0..len).map(|k| ((seed >> (i + k)) % 2000) as f64 / 100.0 - 10.0).collect())
            .collect();
        let ms: Vec<Managed> = values.iter().map(|v| Managed::from_values(&rt, v).unwrap()).collect();
        let node = DagGen::new(&mut r, leaves).gen(depth);
        let ee = eval(node.build(&ms), None).unwrap();
        let mut t = Managed::from_values(&rt, &vec![0.0; len]).unwrap();
        ee.execute(&mut t).unwrap();
        for (k, got) in t.to_vec().into_iter().enumerate() {
            let want = node.interpret(&|l| values[l][k]);
            prop_assert!(rel_err(got, want) <= 1e-12, "{got} vs {want}");
        }
        let mut used = BTreeSet::new();
        node.leaf_set(&mut used);
        if used.is_empty() {
            prop_assert_eq!(ee.op_count(), 0);
        } else {
            let twice = eval(node.build(&ms) + node.build(&ms), None).unwrap();
            prop_assert_eq!(twice.op_count(), ee.op_count() + 1);
            prop_assert_eq!(twice.leaf_ids().len(), used.len());
        }
        prop_assert_eq!(ee.pretty(), eval(node.build(&ms), None).unwrap().pretty());
    }
}
