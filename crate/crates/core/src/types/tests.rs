use super::*;
use crate::frontend::{parse_spec, parse_sre, parse_ty, STACK_SPEC};
use crate::logic::{Domain, FiniteDomain};

fn stack() -> OperatorContext {
    parse_spec(STACK_SPEC).unwrap().delta
}

fn oracle() -> FiniteDomain {
    FiniteDomain::new(Domain::new(-4, 4))
}

fn val(pairs: &[(&str, i64)]) -> Valuation {
    pairs.iter().map(|(k, v)| (k.to_string(), Const::Int(*v))).collect()
}

fn ty(delta: &OperatorContext, s: &str) -> Ty {
    parse_ty(s, &delta.alphabet()).unwrap()
}

#[test]
fn erasure() {
    let d = stack();
    assert_eq!(Ty::base(Sort::Int, "nu == 3".parse().unwrap()).erase(), Sort::Int);
    assert_eq!(d.signature("push").unwrap().erase(), Sort::arrow(Sort::Int, Sort::Unit));
    let t = Ty::Inter(vec![Ty::top(Sort::Int), Ty::top(Sort::Bool)]);
    assert_eq!(t.erase(), Sort::Int);
}

#[test]
fn well_formedness() {
    let d = stack();
    let o = oracle();
    let c = Checker::new(&d, &o);
    let ctx = TypeContext::new();
    assert!(c.well_formed(&ctx, &Ty::top(Sort::Int)).is_ok());
    let empty_hist = Ty::hoare(Sre::Empty, NU, Ty::top(Sort::Unit), Sre::Eps);
    assert!(matches!(c.well_formed(&ctx, &empty_hist), Err(TypeError::WellFormedness { rule: "WfHF", .. })));
    let bad = Ty::Inter(vec![
        Ty::hoare(Sre::any_star(), NU, Ty::top(Sort::Int), Sre::Eps),
        Ty::hoare(Sre::any_star(), NU, Ty::top(Sort::Unit), Sre::Eps),
    ]);
    assert!(matches!(c.well_formed(&ctx, &bad), Err(TypeError::WellFormedness { rule: "WFInter", .. })));
    for (name, decl) in &d.ops {
        let sig = decl.sig.as_ref().unwrap();
        c.well_formed(&ctx, sig).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let unbound = Ty::base(Sort::Int, "nu < z".parse().unwrap());
    assert!(c.well_formed(&ctx, &unbound).is_err());
}

#[test]
fn pure_subtyping_is_underapproximate() {
    let d = stack();
    let o = oracle();
    let c = Checker::new(&d, &o);
    let ctx = TypeContext::new();
    let one = Ty::base(Sort::Int, "nu == 1".parse().unwrap());
    let pos = Ty::base(Sort::Int, "0 < nu".parse().unwrap());
    assert!(!c.sub_pure(&ctx, &one, &pos).unwrap());
    assert!(c.sub_pure(&ctx, &pos, &one).unwrap());
    assert!(c.sub_pure(&ctx, &pos, &pos).unwrap());
    assert!(matches!(c.sub_pure(&ctx, &pos, &Ty::top(Sort::Bool)), Err(TypeError::ErasureMismatch(..))));
}

#[test]
fn hoare_subtyping_variance() {
    let d = stack();
    let o = oracle();
    let c = Checker::new(&d, &o);
    let ctx = TypeContext::new();
    let h = "any* . <push>";
    let f = "<pop>";
    let base = ty(&d, &format!("[{h}] unit [{f}]"));
    let wider_h = ty(&d, &format!("[{h} | <pop>] unit [{f}]"));
    let wider_f = ty(&d, &format!("[{h}] unit [{f} | <push>]"));
    assert!(c.sub_uhat(&ctx, &base, &wider_h).unwrap());
    assert!(c.sub_uhat(&ctx, &wider_f, &base).unwrap());
    assert!(!c.sub_uhat(&ctx, &base, &wider_f).unwrap());
    assert!(!c.sub_uhat(&ctx, &wider_h, &base).unwrap());
}

/// The push/pop application walkthrough, steps 1 to 4.
#[test]
fn application_walkthrough() {
    let d = stack();
    let o = oracle();
    let c = Checker::new(&d, &o);
    let alpha = d.alphabet();

    // push: instantiate ghosts, then specialize the history.
    let push = c.instantiate_ghost(&TypeContext::new(), d.signature("push").unwrap(), &val(&[("n", 0), ("y", 0)])).unwrap();
    let want = ty(&d, "x:{int | 0 < nu} -> [LAST(<~pushI 0 0>)] unit [<push x> . <~pushI 1 x>]");
    assert_eq!(push.canonical(), want.canonical());
    let Ty::Arrow { param, param_ty, body } = &push else { panic!() };
    let ctx = TypeContext::new().with(param.clone(), (**param_ty).clone());
    let h0 = parse_sre("<~pushI 0 0> . <~popI 0 0>", &alpha).unwrap();
    let spec = c.specialize_history(&ctx, body, &h0).unwrap();
    assert_eq!(spec.canonical(), ty(&d, "[<~pushI 0 0> . <~popI 0 0>] unit [<push x> . <~pushI 1 x>]").canonical());

    // pop, step 1 is the stored signature itself.
    let pop = d.signature("pop").unwrap();
    assert_eq!(pop.ghost_prefix().len(), 2);
    let s2 = c.instantiate_ghost(&ctx, pop, &val(&[("n", 1), ("m", 0)])).unwrap();
    let want2 = ty(
        &d,
        "[LAST(<~popI 0 _>) & LAST(<~pushI 1 _>) & (any* . <~pushI 1 x> . any*)] x:int [<pop x> . <~popI 1 x>]",
    );
    assert!(c.sub_uhat(&ctx, &s2, &want2).unwrap() && c.sub_uhat(&ctx, &want2, &s2).unwrap());

    // step 3: align the return type.
    let s3 = ty(
        &d,
        "[LAST(<~popI 0 _>) & LAST(<~pushI 1 _>) & (any* . <~pushI 1 x> . any*)] x:{int | 0 < nu} [<pop x> . <~popI 1 x>]",
    );
    assert!(c.sub_uhat(&ctx, &s2, &s3).unwrap());

    // step 4: specialize to the calling context.
    let h1 = parse_sre("<~pushI 0 0> . <~popI 0 0> . <push x> . <~pushI 1 x>", &alpha).unwrap();
    let s4 = c.specialize_history(&ctx, &s3, &h1).unwrap();
    let want4 = ty(
        &d,
        "[<~pushI 0 0> . <~popI 0 0> . <push x> . <~pushI 1 x>] x:{int | 0 < nu} [<pop x> . <~popI 1 x>]",
    );
    assert_eq!(s4.canonical(), want4.canonical());
}

#[test]
fn specialization_premises() {
    let d = stack();
    let o = oracle();
    let c = Checker::new(&d, &o);
    let alpha = d.alphabet();
    let ctx = TypeContext::new();
    let sig = ty(&d, "[LAST(<~pushI 0 0>)] unit [<push 1>]");
    assert_eq!(
        c.specialize_history(&ctx, &sig, &Sre::Empty),
        Err(TypeError::SpecializationRejected("new history is empty"))
    );
    let outside = parse_sre("<~pushI 0 0> . <~pushI 1 1>", &alpha).unwrap();
    assert!(matches!(c.specialize_history(&ctx, &sig, &outside), Err(TypeError::SpecializationRejected(_))));
}

#[test]
fn instantiate_with_nothing_is_identity() {
    let d = stack();
    let sig = d.signature("push").unwrap();
    assert_eq!(sig.instantiate_ghost(&Valuation::new()), *sig);
}

#[test]
fn erasure_survives_instantiation() {
    let d = stack();
    for (_, decl) in &d.ops {
        let sig = decl.sig.as_ref().unwrap();
        let ghosts = sig.ghost_prefix();
        for v in ghost_valuations(&ghosts, &FiniteDomain::new(Domain::new(-1, 1))) {
            assert_eq!(sig.instantiate_ghost(&v).erase(), sig.erase());
        }
    }
}
