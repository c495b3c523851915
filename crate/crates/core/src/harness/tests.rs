use super::*;
use crate::dsl::typecheck_basic;
use crate::frontend::{parse_expr, parse_spec, STACK_SPEC, TRANSACTION_SPEC};
use crate::logic::{Domain, Sort, SortEnv};

fn int(i: i64) -> Const {
    Const::Int(i)
}

/// Feeds calls to a fresh handler, recording the trace as the interpreter would.
fn replay(name: &str, calls: &[(&str, Option<i64>)]) -> Vec<Result<Const, HarnessError>> {
    let mut h = make_handler(name).unwrap();
    let mut trace: Vec<Event> = vec![];
    let mut out = vec![];
    for (op, arg) in calls {
        let args: Vec<Const> = arg.iter().map(|&a| int(a)).collect();
        let r = handler_step(&mut *h, &trace, op, &args);
        if let Ok(v) = &r {
            trace.push(Event::new(*op, args, v.clone()));
        }
        out.push(r);
    }
    out
}

#[test]
fn buggy_stack_drops_pushes_when_full() {
    let calls = [("push", Some(1)), ("push", Some(2)), ("push", Some(3)), ("pop", None), ("pop", None), ("pop", None)];
    let r = replay("stack_buggy", &calls);
    assert_eq!(r[3], Ok(int(2)));
    assert_eq!(r[4], Ok(int(1)));
    assert!(matches!(&r[5], Err(HarnessError::Fault(f)) if f.msg.contains("empty")));
    let w = replay("stack_buggy_overwrite", &calls);
    assert_eq!(w[3], Ok(int(3)));
    assert_eq!(w[4], Ok(int(1)));
}

#[test]
fn conforming_stack_is_lifo() {
    for c in -3..=3 {
        assert_eq!(replay("stack_ok", &[("push", Some(c)), ("pop", None)])[1], Ok(int(c)));
    }
    let many: Vec<(&str, Option<i64>)> = (0..5).map(|i| ("push", Some(i))).chain((0..5).map(|_| ("pop", None))).collect();
    let pops: Vec<Const> = replay("stack_ok", &many)[5..].iter().map(|r| r.clone().unwrap()).collect();
    assert_eq!(pops, (0..5).rev().map(int).collect::<Vec<_>>());
    assert!(replay("stack_ok", &[("pop", None)])[0].is_err());
}

#[test]
fn sets_lose_inserts_when_full() {
    let calls = [("insert", Some(1)), ("insert", Some(2)), ("insert", Some(3)), ("mem", Some(3)), ("mem", Some(1))];
    let bug = replay("set_buggy", &calls);
    let ok = replay("set_ok", &calls);
    assert_eq!(ok[3], Ok(Const::Bool(true)));
    assert_ne!(bug[3], ok[3]);
    assert_eq!(bug[4], Ok(Const::Bool(true)));
}

#[test]
fn buggy_store_reads_the_latest_write() {
    let calls = [("write", Some(3)), ("readReq", None), ("write", Some(4)), ("readRsp", Some(0))];
    let bug = replay("kv_ra_buggy", &calls);
    assert_eq!(bug[1], Ok(int(0)));
    assert_eq!(bug[3], Ok(int(4)));
    assert_eq!(replay("kv_ra_ok", &calls)[3], Ok(int(3)));
    assert!(replay("kv_ra_ok", &[("readRsp", Some(7))])[0].is_err());
}

#[test]
fn unknown_names_are_errors() {
    assert!(matches!(make_handler("nope"), Err(HarnessError::UnknownHandler(_))));
    assert!(matches!(conforming_twin("nope"), Err(HarnessError::UnknownHandler(_))));
    assert!(matches!(&replay("stack_ok", &[("write", Some(1))])[0], Err(HarnessError::UnknownOp { op, .. }) if op == "write"));
}

#[test]
fn registry_pairs_with_conforming_handlers() {
    for (name, twin) in HANDLERS {
        assert_eq!(conforming_twin(name).unwrap(), *twin);
        let h = make_handler(name).unwrap();
        assert_eq!(h.name(), *name);
        assert_eq!(make_handler(twin).unwrap().ops(), h.ops());
    }
}

#[test]
fn random_baseline_typechecks_and_is_stable() {
    for src in [STACK_SPEC, TRANSACTION_SPEC] {
        let d = parse_spec(src).unwrap().delta;
        let e = random_baseline(&d, 10);
        assert_eq!(typecheck_basic(&e, &SortEnv::new(), &d).unwrap(), Sort::Unit);
        assert_eq!(random_baseline(&d, 10), e);
        assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        assert!(e.effect_ops().iter().all(|op| !d.alphabet()[op].ghost));
    }
}

#[test]
fn random_baseline_covers_every_operation() {
    let d = parse_spec(STACK_SPEC).unwrap().delta;
    let e = random_baseline(&d, 10);
    let mut h = make_handler("stack_ok").unwrap();
    let mut seen = std::collections::BTreeSet::new();
    let mut lens = std::collections::BTreeSet::new();
    for seed in 0..1000 {
        h.reset();
        let out = run(&e, &mut *h, seed, &RunConfig::default());
        lens.insert(out.trace().len());
        seen.extend(out.trace().iter().map(|ev| ev.op.clone()));
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), ["pop", "push"]);
    assert!(lens.contains(&0) && lens.iter().all(|&l| l <= 10));
}

#[test]
fn campaign_counts_faults_the_twin_does_not_share() {
    let cfg = CampaignConfig { executions: 200, ..CampaignConfig::default() };
    // three pushes then three pops: the buggy stack faults on the last pop
    let lost = parse_expr("push(1); push(2); push(3); let a = pop() in let b = pop() in let c = pop() in ()").unwrap();
    let r = run_campaign(&lost, "fixed", "stack_buggy", &cfg).unwrap();
    assert_eq!((r.violations, r.median()), (200, Some(1.0)));
    assert!(r.first_violation.is_some());
    // popping an empty stack faults on both, so it is not a violation
    let empty = parse_expr("let a = pop() in ()").unwrap();
    let r = run_campaign(&empty, "fixed", "stack_buggy", &cfg).unwrap();
    assert_eq!(r.violations, 0);
    assert_eq!(r.median(), None);
    assert!(r.to_string().contains(">200"));
}

#[test]
fn campaign_retries_exhausted_assumes() {
    let cfg = CampaignConfig {
        executions: 50,
        run: RunConfig { domain: Domain::new(0, 3), ..RunConfig::default() },
        ..CampaignConfig::default()
    };
    let never = parse_expr("assume x : int . x < 0 in push(x)").unwrap();
    let r = run_campaign(&never, "never", "stack_ok", &cfg).unwrap();
    assert_eq!(r.assume_retries, 50 * cfg.assume_retries);
    assert_eq!(r.violations, 0);
}

#[test]
fn campaigns_are_deterministic_and_job_independent() {
    let d = parse_spec(STACK_SPEC).unwrap().delta;
    let e = random_baseline(&d, 10);
    let one = CampaignConfig { executions: 500, seed: 9, ..CampaignConfig::default() };
    let a = run_campaign(&e, "random", "stack_buggy", &one).unwrap();
    let b = run_campaign(&e, "random", "stack_buggy", &CampaignConfig { jobs: 4, ..one.clone() }).unwrap();
    assert_eq!(a, b);
    assert!(a.violations > 0);
    assert!(a.gaps.iter().sum::<usize>() <= a.executions);
}

#[test]
fn tsv_layout() {
    let r = CampaignReport {
        handler: "h".into(),
        strategy: "s".into(),
        executions: 10,
        violations: 2,
        outcomes: BTreeMap::new(),
        assume_retries: 0,
        gaps: vec![2, 5],
        first_violation: None,
    };
    assert_eq!(tsv(&[r]), format!("{TSV_HEADER}\nh\ts\t3.50\t3.50\t10\n"));
}
