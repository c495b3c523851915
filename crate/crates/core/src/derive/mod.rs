//! Generator programs from resolved abstract traces: straightline
//! derivation and the nondeterministic-loop recursion template.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::dsl::{Expr, UNIT};
use crate::logic::{fresh_variant, Const, Qualifier, SatOracle, Sort, SortEnv, Term};
use crate::sre::Sre;
use crate::synth::{AbstractTrace, Candidate, Segment, SynthConfig, SynthError, SynthReport, Synthesizer};
use crate::trace::Alphabet;
use crate::types::{Ty, TypeContext};

/// A derived program with the trace type it claims.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorProgram {
    pub expr: Expr,
    pub claimed: Ty,
    pub gamma: TypeContext,
    /// Abstract traces the program was derived from.
    pub sources: Vec<AbstractTrace>,
    /// Whether the recursion template was used for some source.
    pub recursive: bool,
}

/// `[eps] unit [pi without stars]`, tags dropped.
pub fn claimed_type(traces: &[AbstractTrace]) -> Ty {
    let future = Sre::or_all(traces.iter().map(|t| t.without_stars().to_sre().untagged()));
    Ty::hoare(Sre::Eps, "nu", Ty::top(Sort::Unit), future)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Stmt {
    Assume { var: String, sort: Sort, qual: Qualifier },
    Call { var: Option<String>, op: String, args: Vec<Expr> },
    Assert(Qualifier),
}

fn build(stmts: &[(usize, Stmt)], tail: Expr) -> Expr {
    stmts.iter().rev().fold(tail, |body, (_, s)| match s {
        Stmt::Assume { var, sort, qual } => {
            Expr::AssumeBind { var: var.clone(), sort: sort.clone(), qual: qual.clone(), body: Box::new(body) }
        }
        Stmt::Call { var: Some(x), op, args } => Expr::let_(x.clone(), Expr::EffOp(op.clone(), args.clone()), body),
        Stmt::Call { var: None, op, args } => then(Expr::EffOp(op.clone(), args.clone()), body),
        Stmt::Assert(q) => then(Expr::Assert(q.clone()), body),
    })
}

/// `e; body`, or just `e` when the body is unit.
fn then(e: Expr, body: Expr) -> Expr {
    if body == UNIT {
        e
    } else {
        Expr::seq(e, body)
    }
}

/// Concrete calls in order (segment, arguments, operation, result, result
/// sort) and the simplified constraint over program and context variables.
struct Layout {
    calls: Vec<(usize, Vec<(String, Sort)>, String, String, Sort)>,
    conjuncts: Vec<Qualifier>,
    sorts: SortEnv,
}

fn layout(alphabet: &Alphabet, gamma: &TypeContext, trace: &AbstractTrace) -> Result<Layout, SynthError> {
    let mut taken = gamma.names();
    let mut sorts = gamma.sorts();
    let mut conjuncts = gamma.qualifiers();
    let mut program = BTreeSet::new();
    let mut order = vec![];
    let mut units = vec![];
    for (k, seg) in trace.segments.iter().enumerate() {
        let Segment::Event { ev, resolved } = seg else { continue };
        if !resolved {
            return Err(SynthError::Internal(format!("unresolved event {ev} in derivation")));
        }
        let sig = alphabet.get(&ev.op).ok_or_else(|| SynthError::Internal(format!("unknown operation `{}`", ev.op)))?;
        let binder_sorts: Vec<Sort> = sig.args.iter().cloned().chain([sig.ret.clone()]).collect();
        let mut names = vec![];
        for (i, s) in binder_sorts.iter().enumerate() {
            let base = match (ev.ghost, i == sig.args.len()) {
                (true, _) => "g",
                (false, false) => "x",
                (false, true) => "y",
            };
            let n = fresh_variant(base, &taken);
            taken.insert(n.clone());
            sorts.insert(n.clone(), s.clone());
            if *s == Sort::Unit {
                units.push(n.clone());
            }
            names.push(n);
        }
        let renamed = ev.with_binders(&names);
        conjuncts.extend(renamed.qual.conjuncts());
        if !ev.ghost {
            let ret = names.pop().unwrap();
            let args: Vec<(String, Sort)> = names.into_iter().zip(sig.args.iter().cloned()).collect();
            for (a, _) in &args {
                program.insert(a.clone());
            }
            program.insert(ret.clone());
            order.push((k, args, ev.op.clone(), ret, sig.ret.clone()));
        }
    }
    let mut conjuncts: Vec<Qualifier> =
        conjuncts.into_iter().map(|q| units.iter().fold(q, |q, u| q.subst_const(u, &Const::Unit))).collect();
    eliminate_equalities(&mut conjuncts, &|v| !program.contains(v));
    if conjuncts.iter().any(|q| *q == Qualifier::False) {
        return Err(SynthError::Internal("derivation constraints are inconsistent".into()));
    }
    Ok(Layout { calls: order, conjuncts, sorts })
}

/// Substitutes away `u == t` for variables with `eliminable(u)`.
fn eliminate_equalities(conjuncts: &mut Vec<Qualifier>, eliminable: &dyn Fn(&str) -> bool) {
    loop {
        let found = conjuncts.iter().enumerate().find_map(|(i, q)| match q {
            Qualifier::Eq(a, b) => [(a, b), (b, a)].into_iter().find_map(|(x, t)| match x {
                Term::Var(u) if eliminable(u) && !t.mentions(u) => Some((i, u.clone(), t.clone())),
                _ => None,
            }),
            _ => None,
        });
        let Some((i, u, t)) = found else { break };
        conjuncts.remove(i);
        let next: Vec<Qualifier> = conjuncts.iter().map(|q| q.subst(&u, &t).simplify()).collect();
        *conjuncts = next.into_iter().flat_map(|q| q.conjuncts()).filter(|q| !q.is_true()).collect();
    }
}

/// The conjuncts connected to `v` through variables outside `bound`,
/// existentially closed over those variables.
fn component(conjuncts: &[Qualifier], v: &str, bound: &BTreeSet<String>, sorts: &SortEnv) -> Qualifier {
    let vars: Vec<BTreeSet<String>> = conjuncts.iter().map(|q| q.free_vars()).collect();
    let mut picked = vec![false; conjuncts.len()];
    let mut open: BTreeSet<String> = BTreeSet::new();
    for (i, vs) in vars.iter().enumerate() {
        if vs.contains(v) {
            picked[i] = true;
            open.extend(vs.iter().filter(|x| !bound.contains(*x)).cloned());
        }
    }
    loop {
        let mut grew = false;
        for (i, vs) in vars.iter().enumerate() {
            if !picked[i] && vs.iter().any(|x| open.contains(x)) {
                picked[i] = true;
                open.extend(vs.iter().filter(|x| !bound.contains(*x)).cloned());
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    let mut parts: Vec<Qualifier> = conjuncts.iter().zip(&picked).filter(|(_, p)| **p).map(|(q, _)| q.clone()).collect();
    eliminate_equalities(&mut parts, &|x| open.contains(x));
    // substitution can disconnect parts from `v`; those are satisfiable on their own
    let parts = component_plain(&parts, v, bound);
    let used: BTreeSet<String> = parts.iter().flat_map(|q| q.free_vars()).filter(|x| open.contains(x)).collect();
    // existentials get positional names so equal derivations print equally
    let mut taken: BTreeSet<String> = parts.iter().flat_map(|q| q.free_vars()).filter(|x| !open.contains(x)).collect();
    let mut map = BTreeMap::new();
    let mut qs = vec![];
    for x in used {
        let e = fresh_variant(&format!("e{}", qs.len() + 1), &taken);
        taken.insert(e.clone());
        qs.push((e.clone(), sorts.get(&x).cloned().unwrap_or(Sort::Int)));
        map.insert(x, e);
    }
    let body = Qualifier::and(parts.iter().map(|q| q.rename(&map)));
    Qualifier::exists(&qs, body).simplify()
}

fn component_plain(parts: &[Qualifier], v: &str, bound: &BTreeSet<String>) -> Vec<Qualifier> {
    let vars: Vec<BTreeSet<String>> = parts.iter().map(|q| q.free_vars()).collect();
    let mut picked: Vec<bool> = vars.iter().map(|vs| vs.contains(v)).collect();
    loop {
        let open: BTreeSet<&String> = vars
            .iter()
            .zip(&picked)
            .filter(|(_, p)| **p)
            .flat_map(|(vs, _)| vs.iter().filter(|x| !bound.contains(*x)))
            .collect();
        let mut grew = false;
        for (i, vs) in vars.iter().enumerate() {
            if !picked[i] && vs.iter().any(|x| open.contains(x)) {
                picked[i] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    parts.iter().zip(picked).filter(|(_, p)| *p).map(|(q, _)| q.clone()).collect()
}

/// Statements of the straightline derivation, each tagged with the segment
/// of the event it comes from.
fn statements(alphabet: &Alphabet, gamma: &TypeContext, trace: &AbstractTrace) -> Result<Vec<(usize, Stmt)>, SynthError> {
    let lay = layout(alphabet, gamma, trace)?;
    let mut bound = BTreeSet::new();
    let mut out = vec![];
    for (k, args, op, ret, ret_sort) in &lay.calls {
        let mut actuals = vec![];
        for (a, s) in args {
            if *s == Sort::Unit {
                actuals.push(UNIT);
                continue;
            }
            bound.insert(a.clone());
            let qual = component(&lay.conjuncts, a, &bound, &lay.sorts);
            out.push((*k, Stmt::Assume { var: a.clone(), sort: s.clone(), qual }));
            actuals.push(Expr::var(a.clone()));
        }
        if *ret_sort == Sort::Unit {
            out.push((*k, Stmt::Call { var: None, op: op.clone(), args: actuals }));
            continue;
        }
        bound.insert(ret.clone());
        out.push((*k, Stmt::Call { var: Some(ret.clone()), op: op.clone(), args: actuals }));
        let q = component(&lay.conjuncts, ret, &bound, &lay.sorts);
        if !q.is_true() {
            out.push((*k, Stmt::Assert(q)));
        }
    }
    Ok(out)
}

/// Straightline program for a resolved trace: stars are dropped, ghost events
/// only constrain, every argument is drawn by an assume and every result is
/// checked by an assert.
pub fn derive_trace(alphabet: &Alphabet, gamma: &TypeContext, trace: &AbstractTrace) -> Result<Expr, SynthError> {
    Ok(build(&statements(alphabet, gamma, trace)?, UNIT))
}

/// A split of a trace for the template
/// `let f = fix f(u:unit):unit = () (+) (e1; f(()); e2) in (e3; f(()); e4)`:
/// e3 is `[0, body_start)`, e1 is `[body_start, star)`, the star is the
/// recursive call, e2 is `(star, body_end)` and e4 is `[body_end, len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Matching {
    pub body_start: usize,
    pub star: usize,
    pub body_end: usize,
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e1=[{},{}) star={} e2=({},{})", self.body_start, self.star, self.star, self.star, self.body_end)
    }
}

fn has_concrete(t: &AbstractTrace, from: usize, to: usize) -> bool {
    t.segments[from..to].iter().any(|s| matches!(s, Segment::Event { ev, .. } if !ev.ghost))
}

/// Candidate splits: stars left to right, then longer loop bodies first.
/// Both halves of the body must perform an operation.
pub fn matchings(t: &AbstractTrace) -> Vec<Matching> {
    let mut out = vec![];
    for (star, seg) in t.segments.iter().enumerate() {
        if !matches!(seg, Segment::Star(_)) {
            continue;
        }
        for body_start in 0..star {
            if matches!(t.segments[body_start], Segment::Star(_)) || !has_concrete(t, body_start, star) {
                continue;
            }
            for body_end in (star + 1..=t.len()).rev() {
                if !has_concrete(t, star + 1, body_end) {
                    continue;
                }
                out.push(Matching { body_start, star, body_end });
            }
        }
    }
    // ending e2 just before or just after a star is the same split
    out.dedup_by(|a, b| a.star == b.star && a.body_start == b.body_start && events_in(t, a.star, a.body_end) == events_in(t, b.star, b.body_end));
    out
}

fn events_in(t: &AbstractTrace, from: usize, to: usize) -> Vec<usize> {
    (from..to).filter(|&i| matches!(t.segments[i], Segment::Event { .. })).collect()
}

/// `e3 . e1^i . e2^i . e4` without stars, qualifiers erased.
pub fn unrolling(t: &AbstractTrace, m: &Matching, i: usize) -> AbstractTrace {
    let t = t.erased();
    let part = |a: usize, b: usize| t.slice(a, b).without_stars();
    let mut segs = part(0, m.body_start).segments;
    for _ in 0..i {
        segs.extend(part(m.body_start, m.star).segments);
    }
    for _ in 0..i {
        segs.extend(part(m.star + 1, m.body_end).segments);
    }
    segs.extend(part(m.body_end, t.len()).segments);
    AbstractTrace::new(segs)
}

/// Every unrolling `0 <= i <= bound` passes [`unrolling_ok`]. Bound 0 accepts
/// every matching.
pub fn accepts_matching(s: &Synthesizer, t: &AbstractTrace, gamma: &TypeContext, m: &Matching, bound: usize) -> Result<bool, SynthError> {
    if bound == 0 {
        return Ok(true);
    }
    for i in 0..=bound {
        if !unrolling_ok(s, t, gamma, m, i)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Re-refines the erased `i`-fold unrolling. Some fully resolved refinement
/// must be consistent with the assumes of the template unrolled `i` times,
/// and must entail each of its asserts.
pub fn unrolling_ok(s: &Synthesizer, t: &AbstractTrace, gamma: &TypeContext, m: &Matching, i: usize) -> Result<bool, SynthError> {
    let stmts = statements(&s.alphabet, gamma, t)?;
    let program = unrolled_stmts(&stmts, m, i);
    let cfg = SynthConfig { max_candidates: 4, ..s.cfg.clone() };
    let mut sub = Synthesizer::new(s.delta, cfg);
    let cand = Candidate {
        gamma: TypeContext::new(),
        trace: unrolling(t, m, i),
        origin: "unrolling".into(),
        depth: 0,
        justifications: vec![],
    };
    let mut report = SynthReport::default();
    let resolved = sub.resolve(vec![cand], &mut report);

    let mut env = SortEnv::new();
    let mut calls: Vec<(Vec<Expr>, Option<String>)> = vec![];
    let mut assumes = vec![];
    let mut asserts = vec![];
    for st in &program {
        match st {
            Stmt::Assume { var, sort, qual } => {
                env.insert(var.clone(), sort.clone());
                assumes.push(qual.clone());
            }
            Stmt::Call { var, op, args } => {
                if let (Some(x), Some(sig)) = (var, s.alphabet.get(op)) {
                    env.insert(x.clone(), sig.ret.clone());
                }
                calls.push((args.clone(), var.clone()));
            }
            Stmt::Assert(q) => asserts.push(q.clone()),
        }
    }
    let assumed = Qualifier::and(assumes);
    let sat = |q: &Qualifier, env: &SortEnv| s.oracle.check_sorted(q, &[], env).map_err(|e| SynthError::Internal(e.to_string()));
    for c in resolved {
        let Ok(lay) = layout(&s.alphabet, &c.gamma, &c.trace) else { continue };
        if lay.calls.len() != calls.len() {
            continue;
        }
        let mut map = BTreeMap::new();
        for ((_, args, _, ret, _), (targs, tret)) in lay.calls.iter().zip(&calls) {
            for ((a, _), ta) in args.iter().zip(targs) {
                if let Expr::Var(x) = ta {
                    map.insert(a.clone(), x.clone());
                }
            }
            if let Some(x) = tret {
                map.insert(ret.clone(), x.clone());
            }
        }
        let mut env = env.clone();
        for (x, srt) in &lay.sorts {
            env.entry(map.get(x).cloned().unwrap_or_else(|| x.clone())).or_insert_with(|| srt.clone());
        }
        let base = Qualifier::and(lay.conjuncts.iter().map(|q| q.rename(&map)).chain([assumed.clone()]));
        if !sat(&base, &env)? {
            continue;
        }
        for b in &asserts {
            if sat(&Qualifier::and([base.clone(), Qualifier::not(b.clone())]), &env)? {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    Ok(false)
}

/// Statements of `e3 . e1^i . e2^i . e4`, loop-body variables renamed per copy.
fn unrolled_stmts(stmts: &[(usize, Stmt)], m: &Matching, i: usize) -> Vec<Stmt> {
    let pick = |a: usize, b: usize| -> Vec<Stmt> { stmts.iter().filter(|(k, _)| *k >= a && *k < b).map(|(_, s)| s.clone()).collect() };
    let (e3, e1, e2, e4) = (pick(0, m.body_start), pick(m.body_start, m.star), pick(m.star + 1, m.body_end), pick(m.body_end, usize::MAX));
    let local: Vec<String> = e1
        .iter()
        .chain(&e2)
        .filter_map(|s| match s {
            Stmt::Assume { var, .. } | Stmt::Call { var: Some(var), .. } => Some(var.clone()),
            _ => None,
        })
        .collect();
    let copy = |part: &[Stmt], j: usize| -> Vec<Stmt> {
        let map: BTreeMap<String, String> = local.iter().map(|v| (v.clone(), format!("{v}#{j}"))).collect();
        let ren = |x: &String| map.get(x).cloned().unwrap_or_else(|| x.clone());
        part.iter()
            .map(|s| match s {
                Stmt::Assume { var, sort, qual } => Stmt::Assume { var: ren(var), sort: sort.clone(), qual: qual.rename(&map) },
                Stmt::Call { var, op, args } => Stmt::Call {
                    var: var.as_ref().map(ren),
                    op: op.clone(),
                    args: args
                        .iter()
                        .map(|a| match a {
                            Expr::Var(x) => Expr::Var(ren(x)),
                            other => other.clone(),
                        })
                        .collect(),
                },
                Stmt::Assert(q) => Stmt::Assert(q.rename(&map)),
            })
            .collect()
    };
    let mut out = e3;
    for j in 1..=i {
        out.extend(copy(&e1, j));
    }
    for j in (1..=i).rev() {
        out.extend(copy(&e2, j));
    }
    out.extend(e4);
    out
}

/// Instantiates the template for `m`; `None` if a hole would use a variable
/// bound in another iteration.
pub fn instantiate(alphabet: &Alphabet, gamma: &TypeContext, t: &AbstractTrace, m: &Matching) -> Result<Option<Expr>, SynthError> {
    let stmts = statements(alphabet, gamma, t)?;
    let pick = |a: usize, b: usize| -> Vec<(usize, Stmt)> { stmts.iter().filter(|(k, _)| *k >= a && *k < b).cloned().collect() };
    let (e3, e1, e2, e4) = (pick(0, m.body_start), pick(m.body_start, m.star), pick(m.star + 1, m.body_end), pick(m.body_end, t.len()));
    let taken: BTreeSet<String> = gamma.names();
    let f = fresh_variant("f", &taken);
    let u = fresh_variant("u", &taken);
    let call = || Expr::App(Box::new(Expr::var(f.clone())), Box::new(UNIT));
    let body = Expr::choice(vec![UNIT, build(&e1, then(call(), build(&e2, UNIT)))]);
    let fix = Expr::Fix { name: f.clone(), param: u, param_sort: Sort::Unit, ret_sort: Sort::Unit, body: Box::new(body) };
    let e = build(&e3, Expr::let_(f.clone(), fix, then(call(), build(&e4, UNIT))));
    Ok(if e.free_vars().is_empty() { Some(e) } else { None })
}

/// The first matching that survives the unrolling check, instantiated.
pub fn syn_recursion(s: &Synthesizer, cand: &Candidate, bound: usize) -> Result<Option<(Matching, Expr)>, SynthError> {
    for m in matchings(&cand.trace) {
        let Some(e) = instantiate(&s.alphabet, &cand.gamma, &cand.trace, &m)? else { continue };
        if accepts_matching(s, &cand.trace, &cand.gamma, &m, bound)? {
            return Ok(Some((m, e)));
        }
    }
    Ok(None)
}

/// The program for one candidate: the recursive derivation when the template
/// matches (its one-fold unrolling is the straightline trace), else the
/// straightline one.
pub fn derive_candidate(s: &Synthesizer, cand: &Candidate) -> Result<GeneratorProgram, SynthError> {
    let (expr, recursive) = match syn_recursion(s, cand, s.cfg.unroll_bound)? {
        Some((_, e)) => (e, true),
        None => (derive_trace(&s.alphabet, &cand.gamma, &cand.trace)?, false),
    };
    Ok(GeneratorProgram {
        expr,
        claimed: claimed_type(std::slice::from_ref(&cand.trace)),
        gamma: cand.gamma.clone(),
        sources: vec![cand.trace.clone()],
        recursive,
    })
}

/// All candidates' programs as branches of one choice.
pub fn term_derive(s: &Synthesizer, cands: &[Candidate]) -> Result<GeneratorProgram, SynthError> {
    if cands.is_empty() {
        return Err(SynthError::Failed(vec!["no resolved candidates to derive from".into()]));
    }
    let progs = cands.iter().map(|c| derive_candidate(s, c)).collect::<Result<Vec<_>, _>>()?;
    Ok(combine(progs))
}

/// `p1 (+) .. (+) pn` with the union of the claimed futures.
pub fn combine(progs: Vec<GeneratorProgram>) -> GeneratorProgram {
    let mut gamma = TypeContext::new();
    let mut seen: BTreeMap<String, Ty> = BTreeMap::new();
    let mut sources = vec![];
    let mut branches = vec![];
    let mut recursive = false;
    for p in progs {
        for (n, t) in p.gamma.bindings {
            if seen.get(&n) != Some(&t) {
                seen.insert(n.clone(), t.clone());
                gamma.push(n, t);
            }
        }
        sources.extend(p.sources);
        recursive |= p.recursive;
        branches.push(p.expr);
    }
    GeneratorProgram { expr: Expr::choice(branches), claimed: claimed_type(&sources), gamma, sources, recursive }
}
