//! Abstract traces, normalization into them, and the refinement loop.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::derive::{self, GeneratorProgram};
use crate::logic::{Domain, FiniteDomain, Qualifier, SatOracle, Sort, Term};
use crate::sre::{accepting_paths, NormConfig, PathSegment, SfaEnv, Sre, SreError, SymbolicEvent, Tag};
use crate::trace::Alphabet;
use crate::types::{realizable_event, Checker, OperatorContext, Ty, TypeContext, TypeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error(transparent)]
    Sre(#[from] SreError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("synthesis failed: {}", .0.join("; "))]
    Failed(Vec<String>),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub max_refine_steps: usize,
    pub max_candidates: usize,
    pub timeout: Duration,
    pub star_bound: usize,
    pub unroll_bound: usize,
    pub domain: Domain,
    /// Upper bound on the abstract traces a single normalization may produce.
    pub max_traces: usize,
    pub norm: NormConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_refine_steps: 500,
            max_candidates: 3,
            timeout: Duration::from_secs(180),
            star_bound: 2,
            unroll_bound: 2,
            domain: Domain::default(),
            max_traces: 64,
            norm: NormConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Segment {
    Event { ev: SymbolicEvent, resolved: bool },
    /// `[e1 | .. | en]*`
    Star(Vec<SymbolicEvent>),
}

impl Segment {
    pub fn to_sre(&self) -> Sre {
        match self {
            Segment::Event { ev, resolved } => {
                Sre::tagged(ev.clone(), if *resolved { Tag::Resolved } else { Tag::Unresolved })
            }
            Segment::Star(evs) => {
                Sre::star(Sre::or_all(evs.iter().map(|e| Sre::tagged(e.clone(), Tag::Unresolved))))
            }
        }
    }
}

/// A sequence of events and starred alternations; the empty sequence is epsilon.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AbstractTrace {
    pub segments: Vec<Segment>,
}

impl AbstractTrace {
    pub fn eps() -> Self {
        AbstractTrace::default()
    }

    pub fn new(segments: Vec<Segment>) -> Self {
        AbstractTrace { segments }
    }

    pub fn to_sre(&self) -> Sre {
        Sre::concat_all(self.segments.iter().map(Segment::to_sre))
    }

    pub fn concat(&self, other: &AbstractTrace) -> AbstractTrace {
        let mut s = self.segments.clone();
        s.extend(other.segments.iter().cloned());
        AbstractTrace { segments: s }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_eps(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn first_unresolved(&self) -> Option<usize> {
        self.segments.iter().position(|s| matches!(s, Segment::Event { resolved: false, .. }))
    }

    pub fn count(&self, resolved: bool) -> usize {
        self.segments.iter().filter(|s| matches!(s, Segment::Event { resolved: r, .. } if *r == resolved)).count()
    }

    pub fn is_resolved(&self) -> bool {
        self.first_unresolved().is_none()
    }

    /// The events outside stars, in order.
    pub fn events(&self) -> impl Iterator<Item = &SymbolicEvent> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Event { ev, .. } => Some(ev),
            Segment::Star(_) => None,
        })
    }

    pub fn without_stars(&self) -> AbstractTrace {
        AbstractTrace { segments: self.segments.iter().filter(|s| matches!(s, Segment::Event { .. })).cloned().collect() }
    }

    pub fn slice(&self, from: usize, to: usize) -> AbstractTrace {
        AbstractTrace { segments: self.segments[from..to].to_vec() }
    }

    /// Every event qualifier set to true and every tag to unresolved.
    pub fn erased(&self) -> AbstractTrace {
        let erase = |e: &SymbolicEvent| e.with_qual(Qualifier::True).canonical();
        AbstractTrace {
            segments: self
                .segments
                .iter()
                .map(|s| match s {
                    Segment::Event { ev, .. } => Segment::Event { ev: erase(ev), resolved: false },
                    Segment::Star(evs) => Segment::Star(evs.iter().map(erase).collect()),
                })
                .collect(),
        }
    }

    /// Some concrete trace matches under some valuation of the context.
    /// Stars may be skipped, so only the events outside them constrain.
    pub fn feasible(&self, gamma: &TypeContext, alphabet: &Alphabet, oracle: &dyn SatOracle) -> Result<bool, SreError> {
        let mut env = gamma.sorts();
        let mut parts = vec![];
        for (k, ev) in self.events().enumerate() {
            let sig = alphabet.get(&ev.op).ok_or_else(|| SreError::UnknownOp(ev.op.clone()))?;
            let mut map = BTreeMap::new();
            for (i, (b, s)) in ev.binders().iter().zip(sig.args.iter().chain([&sig.ret])).enumerate() {
                let fresh = format!("#t{k}_{i}");
                env.insert(fresh.clone(), s.clone());
                map.insert(b.clone(), fresh);
            }
            parts.push(ev.qual.rename(&map));
        }
        Ok(oracle.check_sorted(&Qualifier::and(parts), &gamma.qualifiers(), &env)?)
    }

    pub fn free_vars(&self) -> std::collections::BTreeSet<String> {
        self.to_sre().free_vars()
    }
}

impl fmt::Display for AbstractTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.segments.is_empty() {
            return write!(f, "eps");
        }
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                write!(f, " . ")?;
            }
            match s {
                Segment::Event { ev, resolved } => write!(f, "{ev}^{}", if *resolved { "T" } else { "F" })?,
                Segment::Star(evs) => {
                    write!(f, "[")?;
                    for (j, e) in evs.iter().enumerate() {
                        if j > 0 {
                            write!(f, " | ")?;
                        }
                        write!(f, "{e}")?;
                    }
                    write!(f, "]*")?;
                }
            }
        }
        Ok(())
    }
}

/// `stem_k` names from one monotonic counter.
#[derive(Debug, Clone, Default)]
pub struct NameGen {
    next: usize,
}

impl NameGen {
    pub fn new() -> Self {
        NameGen::default()
    }

    pub fn fresh(&mut self, base: &str) -> String {
        let stem = base.trim_start_matches('_');
        let stem = match stem.rfind('_') {
            Some(i) if stem[i + 1..].chars().all(|c| c.is_ascii_digit()) => &stem[..i],
            _ => stem,
        };
        let stem = if stem.is_empty() || stem.chars().all(|c| c.is_ascii_digit()) { "v" } else { stem };
        self.next += 1;
        format!("{stem}_{}", self.next)
    }
}

/// How a resolved event was justified: the signature component used,
/// with ghosts, parameters and return renamed into the candidate context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Justification {
    pub event: SymbolicEvent,
    pub sig: Ty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub gamma: TypeContext,
    pub trace: AbstractTrace,
    pub origin: String,
    pub depth: usize,
    pub justifications: Vec<Justification>,
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} |- {})", self.gamma, self.trace)
    }
}

/// Normalization to abstract traces. Regexes with intersection or
/// difference are read off their minimal automaton, shortest paths first;
/// the others decompose syntactically, with stars over anything but single
/// events expanded to at most `star_bound` copies.
pub fn norm_plan(sfa: &SfaEnv, a: &Sre, star_bound: usize, max_traces: usize) -> Result<Vec<AbstractTrace>, SreError> {
    if a.is_normalized() {
        return decompose(a, sfa.alphabet, star_bound, max_traces);
    }
    let mut out = vec![];
    for path in accepting_paths(sfa, a, star_bound, max_traces)? {
        let t = AbstractTrace::new(
            path.into_iter()
                .map(|seg| match seg {
                    PathSegment::Event(ev, tag) => Segment::Event { ev, resolved: tag == Tag::Resolved },
                    PathSegment::Star(evs) => Segment::Star(evs),
                })
                .collect(),
        );
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

fn push_unique(out: &mut Vec<AbstractTrace>, t: AbstractTrace, cap: usize) -> Result<(), SreError> {
    if !out.contains(&t) {
        out.push(t);
        if out.len() > cap {
            return Err(SreError::CapacityExceeded(format!("more than {cap} abstract traces")));
        }
    }
    Ok(())
}

fn decompose(a: &Sre, alphabet: &Alphabet, bound: usize, cap: usize) -> Result<Vec<AbstractTrace>, SreError> {
    let single = |ev: SymbolicEvent, resolved: bool| AbstractTrace::new(vec![Segment::Event { ev, resolved }]);
    Ok(match a {
        Sre::Empty => vec![],
        Sre::Eps => vec![AbstractTrace::eps()],
        Sre::Any => alphabet.iter().map(|(op, sig)| single(SymbolicEvent::any_of(op, sig), false)).collect(),
        Sre::Event(e, tag) => vec![single((**e).clone(), *tag == Tag::Resolved)],
        Sre::Or(x, y) => {
            let mut out = decompose(x, alphabet, bound, cap)?;
            for t in decompose(y, alphabet, bound, cap)? {
                push_unique(&mut out, t, cap)?;
            }
            out
        }
        Sre::Concat(x, y) => {
            let xs = decompose(x, alphabet, bound, cap)?;
            if xs.is_empty() {
                return Ok(vec![]);
            }
            let ys = decompose(y, alphabet, bound, cap)?;
            let mut out = vec![];
            for p in &xs {
                for q in &ys {
                    push_unique(&mut out, p.concat(q), cap)?;
                }
            }
            out
        }
        Sre::Star(x) => {
            let parts: Vec<AbstractTrace> =
                decompose(x, alphabet, bound, cap)?.into_iter().filter(|t| !t.is_eps()).collect();
            if parts.is_empty() {
                return Ok(vec![AbstractTrace::eps()]);
            }
            if parts.iter().all(|t| t.len() == 1) {
                let mut evs: Vec<SymbolicEvent> = vec![];
                for t in &parts {
                    let more = match &t.segments[0] {
                        Segment::Event { ev, .. } => vec![ev.clone()],
                        Segment::Star(es) => es.clone(),
                    };
                    for e in more {
                        if !evs.contains(&e) {
                            evs.push(e);
                        }
                    }
                }
                return Ok(vec![AbstractTrace::new(vec![Segment::Star(evs)])]);
            }
            let mut out = vec![AbstractTrace::eps()];
            let mut layer = vec![AbstractTrace::eps()];
            for _ in 0..bound {
                let mut next = vec![];
                for p in &layer {
                    for q in &parts {
                        let t = p.concat(q);
                        if !next.contains(&t) {
                            next.push(t.clone());
                        }
                        push_unique(&mut out, t, cap)?;
                    }
                }
                layer = next;
            }
            out
        }
        Sre::And(..) | Sre::Diff(..) => {
            return Err(SreError::CapacityExceeded("boolean operator left after normalization".into()))
        }
    })
}

/// First event of a future regex and the remainder.
pub fn split_head(f: &Sre) -> Option<(SymbolicEvent, Sre)> {
    match f {
        Sre::Event(e, _) => Some(((**e).clone(), Sre::Eps)),
        Sre::Concat(a, b) => {
            let (h, rest) = split_head(a)?;
            Some((h, Sre::concat(rest, (**b).clone())))
        }
        _ => None,
    }
}

/// State shared by the refinement loop: operations, oracle, budgets and names.
pub struct Synthesizer<'a> {
    pub delta: &'a OperatorContext,
    pub alphabet: Alphabet,
    pub oracle: FiniteDomain,
    pub cfg: SynthConfig,
    pub names: NameGen,
}

impl<'a> Synthesizer<'a> {
    pub fn new(delta: &'a OperatorContext, cfg: SynthConfig) -> Self {
        Synthesizer { delta, alphabet: delta.alphabet(), oracle: FiniteDomain::new(cfg.domain), cfg, names: NameGen::new() }
    }

    pub fn sfa(&self, gamma: &TypeContext) -> SfaEnv<'_> {
        gamma.sfa(&self.alphabet, &self.oracle, self.cfg.norm)
    }

    pub fn checker(&self) -> Checker<'_> {
        let mut c = Checker::new(self.delta, &self.oracle);
        c.cfg = self.cfg.norm;
        c
    }

    pub fn norm_plan(&self, gamma: &TypeContext, a: &Sre) -> Result<Vec<AbstractTrace>, SreError> {
        norm_plan(&self.sfa(gamma), a, self.cfg.star_bound, self.cfg.max_traces)
    }

    /// Initial candidates for a property over the sorted variables `vars`.
    pub fn initial(&self, vars: &[(String, Sort)], a: &Sre) -> Result<Vec<Candidate>, SynthError> {
        let mut gamma = TypeContext::new();
        for (x, s) in vars {
            gamma.push(x.clone(), Ty::top(s.clone()));
        }
        Ok(self
            .norm_plan(&gamma, a)?
            .into_iter()
            .filter(|t| matches!(t.feasible(&gamma, &self.alphabet, &self.oracle), Ok(true)))
            .map(|trace| Candidate { gamma: gamma.clone(), trace, origin: a.to_string(), depth: 0, justifications: vec![] })
            .collect())
    }

    /// Refines the unresolved event at segment `k` against its operation's signature.
    pub fn refine(&mut self, cand: &Candidate, k: usize) -> Result<Vec<Candidate>, SynthError> {
        let Segment::Event { ev, resolved: false } = &cand.trace.segments[k] else {
            return Err(SynthError::Internal(format!("segment {k} is not an unresolved event")));
        };
        let target = ev.canonical();
        let pi_h = cand.trace.slice(0, k).to_sre();
        let pi_f = cand.trace.slice(k + 1, cand.trace.len()).to_sre();
        let mut gamma = cand.gamma.clone();
        let mut t = self.delta.signature(&target.op)?.clone();
        loop {
            t = match t {
                Ty::GhostVar { name, sort, body } => {
                    let f = self.names.fresh(&name);
                    gamma.push(f.clone(), Ty::top(sort));
                    body.subst(&name, &Term::var(f))
                }
                Ty::Arrow { param, param_ty, body } => {
                    let f = self.names.fresh(&param);
                    gamma.push(f.clone(), *param_ty);
                    body.subst(&param, &Term::var(f))
                }
                Ty::GhostOp { body, .. } => *body,
                other => break t = other,
            };
        }
        let comps = match t {
            Ty::Inter(ts) => ts,
            other => vec![other],
        };
        let mut out: Vec<Candidate> = vec![];
        for comp in comps {
            let Ty::Hoare { history, ret, ret_ty, future } = comp else {
                return Err(SynthError::Internal(format!("signature of `{}` does not end in a trace type", target.op)));
            };
            let r = self.names.fresh(&ret);
            let rv = Term::var(r.clone());
            let (history, future) = (history.subst(&ret, &rv), future.subst(&ret, &rv));
            let Some((head, rest)) = split_head(&future) else {
                return Err(SynthError::Internal(format!("future of `{}` does not start with an event", target.op)));
            };
            if head.op != target.op {
                return Err(SynthError::Internal(format!("future of `{}` starts with `{}`", target.op, head.op)));
            }
            let g = gamma.with(r.clone(), (*ret_ty).clone());
            let head = head.canonical();
            let refined = target.with_qual(Qualifier::and([target.qual.clone(), head.qual.clone()]).simplify());
            let hs = self.norm_plan(&g, &Sre::and(pi_h.clone(), history.clone()))?;
            if hs.is_empty() {
                continue;
            }
            let fs = self.norm_plan(&g, &Sre::and(pi_f.clone(), Sre::concat(rest.clone(), Sre::any_star())))?;
            let mut pairs: Vec<(usize, usize)> = (0..hs.len()).flat_map(|i| (0..fs.len()).map(move |j| (i, j))).collect();
            pairs.sort_by_key(|&(i, j)| hs[i].len() + fs[j].len());
            pairs.truncate(self.cfg.max_traces);
            let sig = Ty::Hoare { history, ret: r.clone(), ret_ty: ret_ty.clone(), future };
            let mid = AbstractTrace::new(vec![Segment::Event { ev: refined.clone(), resolved: true }]);
            for (i, j) in pairs {
                {
                    let trace = hs[i].concat(&mid).concat(&fs[j]);
                    if out.iter().any(|c| c.trace == trace && c.gamma == g) || !trace.feasible(&g, &self.alphabet, &self.oracle)? {
                        continue;
                    }
                    let mut justifications = cand.justifications.clone();
                    justifications.push(Justification { event: refined.clone(), sig: sig.clone() });
                    out.push(Candidate {
                        gamma: g.clone(),
                        trace,
                        origin: cand.origin.clone(),
                        depth: cand.depth + 1,
                        justifications,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Resolved events that no recorded justification accounts for.
    pub fn unrealizable_events(&self, cand: &Candidate) -> Result<Vec<usize>, SynthError> {
        let checker = self.checker();
        let mut bad = vec![];
        for (k, seg) in cand.trace.segments.iter().enumerate() {
            let Segment::Event { ev, resolved: true } = seg else { continue };
            if ev.ghost {
                continue;
            }
            let prefix = cand.trace.slice(0, k).to_sre();
            let suffix = cand.trace.slice(k + 1, cand.trace.len()).to_sre();
            let mut ok = false;
            for j in cand.justifications.iter().filter(|j| j.event.op == ev.op) {
                if realizable_event(&checker, &cand.gamma, &prefix, ev, &suffix, &j.sig)? {
                    ok = true;
                    break;
                }
            }
            if !ok {
                bad.push(k);
            }
        }
        Ok(bad)
    }

    /// The refinement loop. Candidates with fewer unresolved events, then
    /// shorter ones, then older ones go first; the leftmost unresolved event
    /// is refined.
    pub fn resolve(&mut self, initial: Vec<Candidate>, report: &mut SynthReport) -> Vec<Candidate> {
        let start = Instant::now();
        let mut queue = Worklist::default();
        for c in initial {
            queue.push(c);
        }
        let mut done: Vec<Candidate> = vec![];
        while let Some(c) = queue.pop() {
            if done.len() >= self.cfg.max_candidates {
                break;
            }
            let Some(k) = c.trace.first_unresolved() else {
                if !done.iter().any(|d| d.trace == c.trace && d.gamma == c.gamma) {
                    done.push(c);
                }
                continue;
            };
            if report.steps >= self.cfg.max_refine_steps {
                report.note("refinement step budget exhausted");
                break;
            }
            if start.elapsed() > self.cfg.timeout {
                report.note("timeout");
                break;
            }
            report.steps += 1;
            match self.refine(&c, k) {
                Ok(rs) => {
                    if rs.is_empty() {
                        if let Segment::Event { ev, .. } = &c.trace.segments[k] {
                            report.note(format!("no refinement of {ev} is consistent"));
                        }
                    }
                    for r in rs {
                        queue.push(r);
                    }
                }
                Err(e) => report.note(e.to_string()),
            }
        }
        report.elapsed = start.elapsed();
        done
    }
}

#[derive(Default)]
struct Worklist {
    heap: BinaryHeap<Reverse<(usize, usize, usize)>>,
    items: BTreeMap<usize, Candidate>,
    seq: usize,
}

impl Worklist {
    fn push(&mut self, c: Candidate) {
        self.seq += 1;
        self.heap.push(Reverse((c.trace.count(false), c.trace.len(), self.seq)));
        self.items.insert(self.seq, c);
    }

    fn pop(&mut self) -> Option<Candidate> {
        let Reverse((_, _, k)) = self.heap.pop()?;
        self.items.remove(&k)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SynthReport {
    pub steps: usize,
    pub elapsed: Duration,
    /// Distinct diagnostics with the number of times each occurred.
    pub notes: BTreeMap<String, usize>,
}

impl SynthReport {
    fn note(&mut self, msg: impl Into<String>) {
        *self.notes.entry(msg.into()).or_default() += 1;
    }

    pub fn diagnostics(&self) -> Vec<String> {
        self.notes.iter().map(|(m, n)| if *n > 1 { format!("{m} (x{n})") } else { m.clone() }).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub candidates: Vec<Candidate>,
    /// One program per distinct derivation, in candidate order.
    pub programs: Vec<GeneratorProgram>,
    pub report: SynthReport,
}

/// Synthesizes generators for property `a` over the sorted variables `vars`.
pub fn synthesize(
    delta: &OperatorContext,
    vars: &[(String, Sort)],
    a: &Sre,
    cfg: &SynthConfig,
) -> Result<SynthOutput, SynthError> {
    let mut s = Synthesizer::new(delta, cfg.clone());
    let mut report = SynthReport::default();
    let initial = s.initial(vars, a)?;
    if initial.is_empty() {
        return Err(SynthError::Failed(vec!["the property has no abstract traces".into()]));
    }
    let candidates = s.resolve(initial, &mut report);
    if candidates.is_empty() {
        let mut d = report.diagnostics();
        if d.is_empty() {
            d.push("no candidate could be resolved".into());
        }
        return Err(SynthError::Failed(d));
    }
    let mut programs: Vec<GeneratorProgram> = vec![];
    for c in &candidates {
        let p = derive::derive_candidate(&s, c)?;
        match programs.iter_mut().find(|q| q.expr == p.expr) {
            Some(q) => q.sources.extend(p.sources),
            None => programs.push(p),
        }
    }
    Ok(SynthOutput { candidates, programs, report })
}

#[cfg(test)]
mod tests;
