use super::*;
use crate::frontend::{parse_expr, parse_spec, STACK_SPEC};
use crate::harness::make_handler;
use crate::logic::{Domain, Term};
use proptest::prelude::*;

fn e(s: &str) -> Expr {
    parse_expr(s).unwrap()
}

/// Handler with no operations.
struct Pure;

impl EffectHandler for Pure {
    fn call(&mut self, _: &[crate::trace::Event], op: &str, _: &[Const]) -> Result<Const, SutFault> {
        Err(SutFault { op: op.into(), msg: "no operations".into() })
    }
}

fn go(src: &str, seed: u64) -> RunOutcome {
    run(&e(src), &mut Pure, seed, &RunConfig::default())
}

#[test]
fn print_parse_examples() {
    for s in [
        "()",
        "let x = 1 + 2 in assert x == 3",
        "assume x : int . 0 < x && x < 3 in push(x); let y = pop() in assert y == x",
        "() (+) (push(1); push(2))",
        "let f = fix f(u:unit) : unit = () (+) (push(1); f(())) in f(())",
        "let g = fun (a:int) -> a - 1 in g(4)",
    ] {
        let x = e(s);
        assert_eq!(e(&x.to_string()), x, "{s}");
    }
}

#[test]
fn pure_evaluation() {
    let RunOutcome::Completed { value, trace } = go("let x = 1 + 2 in let y = x - 1 in y", 0) else { panic!() };
    assert_eq!(value, Expr::int(2));
    assert!(trace.is_empty());
    assert_eq!(go("let x = 2 in assert x == 3", 0).label(), "assert-violated");
    assert_eq!(go("let b = 1 < 2 in b", 0), RunOutcome::Completed { value: Expr::Const(Const::Bool(true)), trace: vec![] });
}

#[test]
fn application_and_recursion() {
    let RunOutcome::Completed { value, .. } = go("let g = fun (a:int) -> a + 1 in g(4)", 0) else { panic!() };
    assert_eq!(value, Expr::int(5));
    let loop_ = "let f = fix f(u:unit) : unit = f(u) in f(())";
    let out = run(&e(loop_), &mut Pure, 0, &RunConfig { step_budget: 50, ..RunConfig::default() });
    assert_eq!(out.label(), "diverged");
}

#[test]
fn assumes_draw_satisfying_values() {
    let cfg = RunConfig { domain: Domain::new(0, 4), ..RunConfig::default() };
    let prog = e("assume x : int . 1 < x && x < 4 in x");
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..40 {
        let RunOutcome::Completed { value: Expr::Const(Const::Int(v)), .. } = run(&prog, &mut Pure, seed, &cfg) else { panic!() };
        assert!((2..=3).contains(&v));
        seen.insert(v);
    }
    assert_eq!(seen.len(), 2);
    let none = e("assume x : int . x < 0 in x");
    assert_eq!(run(&none, &mut Pure, 0, &cfg).label(), "assume-exhausted");
    let rejection = RunConfig { assume: AssumeMode::Rejection { retries: 5 }, ..cfg };
    assert_eq!(run(&none, &mut Pure, 0, &rejection).label(), "assume-exhausted");
}

#[test]
fn runs_are_deterministic_per_seed() {
    let prog = e("assume x : int . true in let y = x + 1 in () (+) assert y == 0");
    for seed in 0..10 {
        assert_eq!(run(&prog, &mut Pure, seed, &RunConfig::default()), run(&prog, &mut Pure, seed, &RunConfig::default()));
    }
}

#[test]
fn effects_are_recorded() {
    let mut h = make_handler("stack_ok").unwrap();
    let out = run(&e("push(3); push(4); let y = pop() in assert y == 4"), &mut *h, 0, &RunConfig::default());
    assert_eq!(out.label(), "completed");
    let ops: Vec<&str> = out.trace().iter().map(|ev| ev.op.as_str()).collect();
    assert_eq!(ops, ["push", "push", "pop"]);
    assert_eq!(out.trace()[2].ret, Const::Int(4));
    let mut h = make_handler("stack_ok").unwrap();
    assert_eq!(run(&e("let y = pop() in y"), &mut *h, 0, &RunConfig::default()).label(), "sut-fault");
}

#[test]
fn basic_typing() {
    let spec = parse_spec(STACK_SPEC).unwrap();
    let env = SortEnv::new();
    let ok = e("assume x : int . true in push(x); let y = pop() in assert y == x");
    assert_eq!(typecheck_basic(&ok, &env, &spec.delta).unwrap(), Sort::Unit);
    assert!(typecheck_basic(&e("push(z)"), &env, &spec.delta).is_err());
    assert!(typecheck_basic(&e("let y = pop() in push(())"), &env, &spec.delta).is_err());
    assert!(typecheck_basic(&e("frob(1)"), &env, &spec.delta).is_err());
}

#[test]
fn substitution_respects_binders() {
    let x = e("let x = 1 in x");
    assert_eq!(x.subst("x", &Expr::int(9)), x);
    let open = Expr::Assert(Qualifier::eq(Term::var("x"), Term::int(2)));
    assert_eq!(open.subst("x", &Expr::int(2)), Expr::Assert(Qualifier::eq(Term::int(2), Term::int(2))));
    assert!(e("assume x : int . x == y in x").free_vars().contains("y"));
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::Const(Const::Unit)),
        (-5i64..5).prop_map(Expr::int),
        Just(Expr::var("a")),
        (0i64..3).prop_map(|c| Expr::EffOp("push".into(), vec![Expr::int(c)])),
        Just(Expr::EffOp("pop".into(), vec![])),
        Just(Expr::Assert(Qualifier::lt(Term::var("a"), Term::int(3)))),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(x, y)| Expr::let_("b", x, y)),
            (inner.clone(), inner.clone()).prop_map(|(x, y)| Expr::Let("_".into(), Box::new(x), Box::new(y))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Choice),
            inner.clone().prop_map(|b| Expr::AssumeBind {
                var: "c".into(),
                sort: Sort::Int,
                qual: Qualifier::lt(Term::var("c"), Term::var("a")),
                body: Box::new(b),
            }),
            inner.prop_map(|b| Expr::Fix {
                name: "f".into(),
                param: "u".into(),
                param_sort: Sort::Unit,
                ret_sort: Sort::Unit,
                body: Box::new(b),
            }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, rng_seed: proptest::test_runner::RngSeed::Fixed(5), failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn print_then_parse_is_identity(x in arb_expr()) {
        let wrapped = Expr::let_("a", Expr::int(1), x);
        let text = wrapped.to_string();
        prop_assert_eq!(parse_expr(&text).unwrap(), wrapped, "{}", text);
    }
}
