use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use uhat_core::frontend::{parse_sre, STACK_SPEC, TRANSACTION_SPEC};
use uhat_core::logic::{FiniteDomain, SatOracle, SortEnv};
use uhat_core::sre::{includes, is_empty, SfaEnv};
use uhat_core::synth::norm_plan;
use uhat_core::{parse_spec, synthesize, Domain, Qualifier, Sort, SynthConfig};

// Each iteration gets a fresh oracle so the solver's memo table starts empty.
fn oracle() -> FiniteDomain {
    FiniteDomain::new(Domain::default())
}

fn solver(c: &mut Criterion) {
    let phi: Qualifier = "x < y && y < z && z < x + 4 && !(y == 0) && (x == 1 || z == 2)".parse().unwrap();
    let ctx: Vec<Qualifier> = vec!["0 < x".parse().unwrap()];
    let forall: Qualifier = "forall a : int . a < x || y < a + 3".parse().unwrap();
    c.bench_function("solver/linear", |b| {
        b.iter_batched(oracle, |o| o.check_sorted(black_box(&phi), &ctx, &SortEnv::new()).unwrap(), BatchSize::SmallInput)
    });
    c.bench_function("solver/forall", |b| {
        b.iter_batched(oracle, |o| o.sat(black_box(&forall), &[]).unwrap(), BatchSize::SmallInput)
    });
}

fn automata(c: &mut Criterion) {
    let spec = parse_spec(STACK_SPEC).unwrap();
    let a = spec.delta.alphabet();
    let r1 = parse_sre("any* . <push x | x == k> . any* . <pop y | y == k> . any*", &a).unwrap();
    let r2 = parse_sre("any* . <pop> . any*", &a).unwrap();
    let clash = parse_sre("(any* . <push x | x == k> . any*) & (<pop> | <push>)* \\ any* . <push x | x == k> . any*", &a).unwrap();
    c.bench_function("automata/includes", |b| {
        b.iter_batched(
            oracle,
            |o| includes(&SfaEnv::new(&a, &o), black_box(&r1), black_box(&r2)).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("automata/is_empty", |b| {
        b.iter_batched(oracle, |o| is_empty(&SfaEnv::new(&a, &o), black_box(&clash)).unwrap(), BatchSize::SmallInput)
    });
    let lost = spec.property("lost_push").unwrap().clone();
    c.bench_function("automata/norm_plan", |b| {
        b.iter_batched(oracle, |o| norm_plan(&SfaEnv::new(&a, &o), black_box(&lost), 2, 4096).unwrap(), BatchSize::SmallInput)
    });
}

fn synthesis(c: &mut Criterion) {
    let mut g = c.benchmark_group("synthesis");
    g.sample_size(10);
    for (name, src, prop) in [("pop_any", STACK_SPEC, "pop_any"), ("atomic", TRANSACTION_SPEC, "atomic")] {
        let spec = parse_spec(src).unwrap();
        let a = spec.property(prop).unwrap().clone();
        let mut env = SortEnv::new();
        a.infer_free_sorts(&spec.delta.alphabet(), &mut env).unwrap();
        let vars: Vec<(String, Sort)> = env.into_iter().collect();
        g.bench_function(name, |b| b.iter(|| synthesize(&spec.delta, &vars, &a, &SynthConfig::default()).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, solver, automata, synthesis);
criterion_main!(benches);
