//! Spec text to synthesized generator to campaign, through the public API.

use std::sync::OnceLock;

use uhat_core::dsl::typecheck_basic;
use uhat_core::frontend::{parse_expr, STACK_SPEC, TRANSACTION_SPEC};
use uhat_core::logic::SortEnv;
use uhat_core::{parse_spec, run_campaign, synthesize, CampaignConfig, Sort, SpecFile, SynthConfig, SynthOutput};

fn generate(src: &str, prop: &str) -> (SpecFile, SynthOutput) {
    let spec = parse_spec(src).unwrap();
    let a = spec.property(prop).unwrap().clone();
    let mut env = SortEnv::new();
    a.infer_free_sorts(&spec.delta.alphabet(), &mut env).unwrap();
    let vars: Vec<(String, Sort)> = env.into_iter().collect();
    let out = synthesize(&spec.delta, &vars, &a, &SynthConfig::default()).unwrap();
    (spec, out)
}

fn lost_push() -> &'static (SpecFile, SynthOutput) {
    static O: OnceLock<(SpecFile, SynthOutput)> = OnceLock::new();
    O.get_or_init(|| generate(STACK_SPEC, "lost_push"))
}

fn atomic() -> &'static (SpecFile, SynthOutput) {
    static O: OnceLock<(SpecFile, SynthOutput)> = OnceLock::new();
    O.get_or_init(|| generate(TRANSACTION_SPEC, "atomic"))
}

#[test]
fn bundled_specs_parse() {
    for (src, props) in [(STACK_SPEC, &["pop_any", "lost_push"][..]), (TRANSACTION_SPEC, &["atomic"][..])] {
        let spec = parse_spec(src).unwrap();
        for p in props {
            assert!(spec.property(p).is_some(), "{p}");
        }
        assert!(!spec.delta.alphabet().is_empty());
    }
}

#[test]
fn generators_are_closed_programs() {
    for (spec, out) in [lost_push(), atomic()] {
        assert!(!out.programs.is_empty());
        for p in &out.programs {
            assert!(p.expr.free_vars().is_empty(), "{}", p.expr);
            assert_eq!(typecheck_basic(&p.expr, &SortEnv::new(), &spec.delta).unwrap(), Sort::Unit);
            assert_eq!(parse_expr(&p.expr.to_string()).unwrap(), p.expr);
        }
    }
}

#[test]
fn violations_need_a_bug() {
    let cfg = CampaignConfig { executions: 2000, seed: 3, jobs: 4, ..CampaignConfig::default() };
    for ((_, out), buggy, ok) in [(lost_push(), "stack_buggy", "stack_ok"), (atomic(), "kv_ra_buggy", "kv_ra_ok")] {
        let g = &out.programs[0].expr;
        let clean = run_campaign(g, "synthesized", ok, &cfg).unwrap();
        assert_eq!(clean.violations, 0, "{ok}: {:?}", clean.first_violation);
        let found = run_campaign(g, "synthesized", buggy, &cfg).unwrap();
        assert!(found.violations > 0, "{buggy}");
        assert!(found.median().unwrap() <= 5.0, "{buggy}: {found}");
    }
}
