use super::*;
use crate::frontend::{parse_spec, parse_sre, SpecFile, STACK_SPEC, TRANSACTION_SPEC};
use crate::logic::{Const, SortEnv, Valuation};
use crate::sre::enumerate_events;
use crate::trace::{Event, OpSig};
use proptest::prelude::*;

fn ab() -> Alphabet {
    let mut a = Alphabet::new();
    a.insert("a".into(), OpSig::new(vec![Sort::Int], Sort::Unit, false));
    a.insert("b".into(), OpSig::new(vec![Sort::Int], Sort::Unit, false));
    a
}

fn small() -> Domain {
    Domain::new(0, 2)
}

fn plan(src: &str, bound: usize) -> Vec<AbstractTrace> {
    let a = ab();
    let o = FiniteDomain::new(small());
    norm_plan(&SfaEnv::new(&a, &o), &parse_sre(src, &a).unwrap(), bound, 256).unwrap()
}

fn all_traces(len: usize) -> Vec<Vec<Event>> {
    let evs = enumerate_events(&ab(), &small());
    let mut out = vec![vec![]];
    let mut layer: Vec<Vec<Event>> = vec![vec![]];
    for _ in 0..len {
        layer = layer.iter().flat_map(|t| evs.iter().map(move |e| [t.clone(), vec![e.clone()]].concat())).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn valuations(free: &std::collections::BTreeSet<String>) -> Vec<Valuation> {
    let mut out = vec![Valuation::new()];
    for v in free {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..=2).map(move |i| {
                    let mut t = s.clone();
                    t.insert(v.clone(), Const::Int(i));
                    t
                })
            })
            .collect();
    }
    out
}

/// The union of the traces' languages equals the regex's on short traces.
fn same_language(r: &Sre, ts: &[AbstractTrace], len: usize) -> bool {
    let d = small();
    let union = Sre::or_all(ts.iter().map(AbstractTrace::to_sre));
    let traces = all_traces(len);
    valuations(&r.free_vars()).iter().all(|s| {
        traces.iter().all(|t| r.member(t, s, &d).unwrap() == (!ts.is_empty() && union.member(t, s, &d).unwrap()))
    })
}

fn spec(src: &str) -> SpecFile {
    parse_spec(src).unwrap()
}

fn vars(spec: &SpecFile, a: &Sre) -> Vec<(String, Sort)> {
    let mut env = SortEnv::new();
    a.infer_free_sorts(&spec.delta.alphabet(), &mut env).unwrap();
    env.into_iter().collect()
}

#[test]
fn norm_plan_examples() {
    assert!(plan("empty", 2).is_empty());
    assert_eq!(plan("eps", 2), vec![AbstractTrace::eps()]);
    let seq = plan("<a 1> . <b>", 2);
    assert_eq!(seq.len(), 1);
    assert_eq!((seq[0].len(), seq[0].count(false)), (2, 2));
    assert_eq!(plan("<a> | <b>", 2).len(), 2);
    let star = plan("any*", 2);
    assert_eq!(star.len(), 1);
    assert!(matches!(&star[0].segments[..], [Segment::Star(evs)] if evs.len() == 2));
    // a star over a longer body expands to at most `bound` copies
    let lens: Vec<usize> = plan("(<a> . <b>)*", 2).iter().map(AbstractTrace::len).collect();
    assert_eq!(lens, vec![0, 2, 4]);
}

#[test]
fn boolean_operators_go_through_the_automaton() {
    for src in ["any* . <a 1> . any* & (any \\ <b 0>)*", "(<a> | <b>)* \\ any* . <b> . any*", "<a x | x < 2> & <a 1> | <b 2>"] {
        let r = parse_sre(src, &ab()).unwrap();
        let ts = plan(src, 3);
        assert!(same_language(&r, &ts, 3), "{src}");
    }
}

#[test]
fn split_head_takes_the_first_event() {
    let r = parse_sre("<a 1> . <b 2> . <a 0>", &ab()).unwrap();
    let (h, rest) = split_head(&r).unwrap();
    assert_eq!(h.op, "a");
    assert_eq!(split_head(&rest).unwrap().0.op, "b");
    assert!(split_head(&Sre::any_star()).is_none());
}

#[test]
fn empty_property_fails() {
    let s = spec(STACK_SPEC);
    let r = synthesize(&s.delta, &[], &Sre::Empty, &SynthConfig::default());
    assert!(matches!(r, Err(SynthError::Failed(_))));
}

#[test]
fn contradictory_ghost_indices_are_filtered() {
    let s = spec(STACK_SPEC);
    let alpha = s.delta.alphabet();
    let bad = parse_sre("<~popI a b | a == m && 0 < a> . <~popI a b | a == m && a == 0>", &alpha).unwrap();
    let syn = Synthesizer::new(&s.delta, SynthConfig::default());
    assert!(syn.initial(&[("m".into(), Sort::Int)], &bad).unwrap().is_empty());
    let ok = parse_sre("<~popI a b | a == m && 0 < a> . <~popI a b | a == m>", &alpha).unwrap();
    assert_eq!(syn.initial(&[("m".into(), Sort::Int)], &ok).unwrap().len(), 1);
}

/// Refines the first `steps` worklist entries of a property, returning every
/// (parent, child) pair seen.
fn refinements(src: &str, prop: &str, steps: usize) -> (SpecFile, Vec<(Candidate, Candidate)>) {
    let sp = spec(src);
    let a = sp.property(prop).unwrap().clone();
    let vs = vars(&sp, &a);
    let mut pairs = vec![];
    {
        let mut syn = Synthesizer::new(&sp.delta, SynthConfig::default());
        let mut queue = Worklist::default();
        for c in syn.initial(&vs, &a).unwrap() {
            queue.push(c);
        }
        for _ in 0..steps {
            let Some(c) = queue.pop() else { break };
            let Some(k) = c.trace.first_unresolved() else { continue };
            for r in syn.refine(&c, k).unwrap() {
                pairs.push((c.clone(), r.clone()));
                queue.push(r);
            }
        }
    }
    (sp, pairs)
}

#[test]
fn each_refinement_resolves_exactly_one_event() {
    for (src, prop) in [(STACK_SPEC, "pop_any"), (TRANSACTION_SPEC, "atomic")] {
        let (_, pairs) = refinements(src, prop, 8);
        assert!(!pairs.is_empty());
        for (p, c) in &pairs {
            assert_eq!(c.trace.count(true), p.trace.count(true) + 1, "{p}\n=> {c}");
            assert_eq!(c.justifications.len(), p.justifications.len() + 1);
            assert_eq!(c.depth, p.depth + 1);
        }
    }
}

#[test]
fn refinements_are_realizable() {
    for (src, prop) in [(STACK_SPEC, "pop_any"), (TRANSACTION_SPEC, "atomic")] {
        let (sp, pairs) = refinements(src, prop, 6);
        let syn = Synthesizer::new(&sp.delta, SynthConfig::default());
        for (_, c) in pairs.iter().take(12) {
            assert!(syn.unrealizable_events(c).unwrap().is_empty(), "{c}");
            assert!(c.trace.feasible(&c.gamma, &syn.alphabet, &syn.oracle).unwrap());
        }
    }
}

#[test]
fn worklist_prefers_fewer_unresolved_then_shorter() {
    let mk = |src: &str| Candidate {
        gamma: TypeContext::new(),
        trace: plan(src, 1).remove(0),
        origin: String::new(),
        depth: 0,
        justifications: vec![],
    };
    let mut q = Worklist::default();
    q.push(mk("<a> . <b> . <a>"));
    q.push(mk("<a> . <b>"));
    q.push(mk("<b> . <a>"));
    let order: Vec<usize> = std::iter::from_fn(|| q.pop()).map(|c| c.trace.len()).collect();
    assert_eq!(order, vec![2, 2, 3]);
}

#[test]
fn bundled_properties_synthesize() {
    for (src, prop) in [(STACK_SPEC, "pop_any"), (STACK_SPEC, "lost_push"), (TRANSACTION_SPEC, "atomic")] {
        let sp = spec(src);
        let a = sp.property(prop).unwrap();
        let out = synthesize(&sp.delta, &vars(&sp, a), a, &SynthConfig::default()).unwrap();
        assert!(!out.candidates.is_empty() && out.candidates.len() <= 3, "{prop}");
        assert!(out.candidates.iter().all(|c| c.trace.is_resolved()));
        assert!(!out.programs.is_empty());
        let total: usize = out.programs.iter().map(|p| p.sources.len()).sum();
        assert_eq!(total, out.candidates.len());
        assert!(out.report.steps <= SynthConfig::default().max_refine_steps);
    }
}

#[test]
fn step_budget_is_reported() {
    let sp = spec(STACK_SPEC);
    let a = sp.property("lost_push").unwrap();
    let cfg = SynthConfig { max_refine_steps: 2, ..SynthConfig::default() };
    match synthesize(&sp.delta, &vars(&sp, a), a, &cfg) {
        Err(SynthError::Failed(notes)) => assert!(notes.iter().any(|n| n.contains("budget")), "{notes:?}"),
        other => panic!("{other:?}"),
    }
}

fn arb_qual() -> impl Strategy<Value = Qualifier> {
    let x = || Term::var("_0");
    prop_oneof![
        Just(Qualifier::True),
        (0i64..=2).prop_map(move |c| Qualifier::eq(x(), Term::int(c))),
        (0i64..=2).prop_map(move |c| Qualifier::lt(x(), Term::int(c))),
        Just(Qualifier::eq(x(), Term::var("k"))),
    ]
}

fn arb_sre() -> impl Strategy<Value = Sre> {
    let ev = (prop_oneof![Just("a"), Just("b")], arb_qual()).prop_map(|(op, q)| {
        Sre::event(SymbolicEvent { op: op.into(), args: vec!["_0".into()], ret: "_r".into(), qual: q, ghost: false })
    });
    let leaf = prop_oneof![1 => Just(Sre::Eps), 1 => Just(Sre::Any), 4 => ev];
    leaf.prop_recursive(3, 10, 2, |inner| {
        prop_oneof![
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Sre::concat(a, b)),
            2 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Sre::or(a, b)),
            2 => inner.clone().prop_map(Sre::star),
            1 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Sre::and(a, b)),
            1 => (inner.clone(), inner).prop_map(|(a, b)| Sre::diff(a, b)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, rng_seed: proptest::test_runner::RngSeed::Fixed(3), failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normalization_is_exact_on_short_traces(r in arb_sre()) {
        let a = ab();
        let o = FiniteDomain::new(small());
        let ts = norm_plan(&SfaEnv::new(&a, &o), &r, 3, 4096).unwrap();
        prop_assert!(same_language(&r, &ts, 3), "{}", r);
    }
}
