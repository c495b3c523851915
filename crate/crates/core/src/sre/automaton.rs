//! Minterm automata for symbolic regexes.
//!
//! Every `(op, qualifier)` pair occurring in the input becomes a predicate
//! over the canonical binders of `op`. Satisfiable boolean combinations of
//! an op's predicates (its minterms) form a finite alphabet, over which the
//! usual DFA constructions apply. Ambient variables are rigid: a path is
//! feasible when the minterms it uses are jointly satisfiable with the context.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::{SreError, Sre, SymbolicEvent, Tag};
use crate::logic::{Qualifier, SatOracle, SortEnv, Term};
use crate::trace::{Alphabet, Event};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormConfig {
    pub max_minterms: usize,
    pub max_branches: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { max_minterms: 512, max_branches: 64 }
    }
}

/// Everything an automata query needs: operations, oracle, ambient context.
pub struct SfaEnv<'a> {
    pub alphabet: &'a Alphabet,
    pub oracle: &'a dyn SatOracle,
    pub ctx: Vec<Qualifier>,
    pub env: SortEnv,
    pub cfg: NormConfig,
}

impl<'a> SfaEnv<'a> {
    pub fn new(alphabet: &'a Alphabet, oracle: &'a dyn SatOracle) -> Self {
        SfaEnv { alphabet, oracle, ctx: vec![], env: SortEnv::new(), cfg: NormConfig::default() }
    }

    pub fn with_ctx(mut self, ctx: Vec<Qualifier>, env: SortEnv) -> Self {
        self.ctx = ctx;
        self.env = env;
        self
    }

    pub fn with_cfg(mut self, cfg: NormConfig) -> Self {
        self.cfg = cfg;
        self
    }
}

#[derive(Debug, Clone)]
struct Letter {
    op: String,
    bits: Vec<bool>,
    tag: Tag,
    formula: Qualifier,
    ambient: bool,
}

struct Algebra {
    preds: BTreeMap<String, Vec<Qualifier>>,
    letters: Vec<Letter>,
    env: SortEnv,
    ctx: Vec<Qualifier>,
}

fn binder_names(arity: usize) -> Vec<String> {
    (0..arity).map(|i| format!("_{i}")).chain(["_r".to_string()]).collect()
}

impl Algebra {
    fn build(sfa: &SfaEnv, regexes: &[&Sre]) -> Result<Algebra, SreError> {
        let mut env = sfa.env.clone();
        for r in regexes {
            r.infer_free_sorts(sfa.alphabet, &mut env)?;
        }
        for q in &sfa.ctx {
            let mut e = env.clone();
            q.infer_sorts(&mut e)?;
            env = e;
        }
        let mut preds: BTreeMap<String, Vec<Qualifier>> = sfa.alphabet.keys().map(|k| (k.clone(), vec![])).collect();
        let mut tagged = false;
        for r in regexes {
            for e in r.events() {
                let sig = sfa.alphabet.get(&e.op).ok_or_else(|| SreError::UnknownOp(e.op.clone()))?;
                if sig.args.len() != e.args.len() {
                    return Err(SreError::Arity { op: e.op.clone(), expected: sig.args.len(), found: e.args.len() });
                }
                let c = e.canonical().qual;
                let list = preds.get_mut(&e.op).unwrap();
                if !c.is_true() && !list.contains(&c) {
                    list.push(c);
                }
            }
            tagged |= has_tags(r);
        }
        let tags: &[Tag] = if tagged { &[Tag::Unresolved, Tag::Resolved] } else { &[Tag::Any] };
        let mut letters = Vec::new();
        for (op, ps) in &preds {
            let sig = &sfa.alphabet[op];
            let mut local = env.clone();
            for (x, s) in binder_names(sig.args.len()).into_iter().zip(sig.args.iter().chain([&sig.ret])) {
                local.insert(x, s.clone());
            }
            let mut minterms = Vec::new();
            split(sfa, ps, 0, &mut vec![], &local, &mut minterms, sfa.cfg.max_minterms)?;
            let binders = binder_names(sig.args.len());
            for bits in minterms {
                let formula = minterm_formula(ps, &bits);
                let ambient = formula.free_vars().iter().any(|v| !binders.contains(v));
                for &tag in tags {
                    letters.push(Letter { op: op.clone(), bits: bits.clone(), tag, formula: formula.clone(), ambient });
                }
            }
            if letters.len() > sfa.cfg.max_minterms {
                return Err(SreError::CapacityExceeded(format!("more than {} minterms", sfa.cfg.max_minterms)));
            }
        }
        Ok(Algebra { preds, letters, env, ctx: sfa.ctx.clone() })
    }

    fn event_letters(&self, e: &SymbolicEvent, tag: Tag) -> Vec<bool> {
        let c = e.canonical().qual;
        let idx = self.preds.get(&e.op).and_then(|ps| ps.iter().position(|p| *p == c));
        self.letters
            .iter()
            .map(|l| {
                l.op == e.op && (tag == Tag::Any || l.tag == tag) && (c.is_true() || idx.map_or(false, |i| l.bits[i]))
            })
            .collect()
    }

    /// The letter's minterm over fresh copies of its binders.
    fn instance(&self, l: usize, stem: &str, alphabet: &Alphabet, env: &mut SortEnv) -> Qualifier {
        let letter = &self.letters[l];
        let sig = &alphabet[&letter.op];
        let binders = binder_names(sig.args.len());
        let mut map = BTreeMap::new();
        for (i, (b, s)) in binders.iter().zip(sig.args.iter().chain([&sig.ret])).enumerate() {
            let fresh = format!("#{stem}_{i}");
            env.insert(fresh.clone(), s.clone());
            map.insert(b.clone(), fresh);
        }
        letter.formula.rename(&map)
    }

    fn feasible(&self, sfa: &SfaEnv, parts: Vec<Qualifier>, env: &SortEnv) -> Result<bool, SreError> {
        let phi = Qualifier::and(parts);
        Ok(sfa.oracle.check_sorted(&phi, &self.ctx, env)?)
    }
}

fn has_tags(r: &Sre) -> bool {
    match r {
        Sre::Event(_, t) => *t != Tag::Any,
        Sre::Empty | Sre::Eps | Sre::Any => false,
        Sre::Or(a, b) | Sre::Concat(a, b) | Sre::Diff(a, b) | Sre::And(a, b) => has_tags(a) || has_tags(b),
        Sre::Star(a) => has_tags(a),
    }
}

fn minterm_formula(ps: &[Qualifier], bits: &[bool]) -> Qualifier {
    Qualifier::and(ps.iter().zip(bits).map(|(p, &b)| if b { p.clone() } else { Qualifier::not(p.clone()) }))
        .simplify()
}

fn split(
    sfa: &SfaEnv,
    ps: &[Qualifier],
    i: usize,
    prefix: &mut Vec<bool>,
    env: &SortEnv,
    out: &mut Vec<Vec<bool>>,
    cap: usize,
) -> Result<(), SreError> {
    let phi = minterm_formula(&ps[..i], prefix);
    if !sfa.oracle.check_sorted(&phi, &sfa.ctx, env)? {
        return Ok(());
    }
    if i == ps.len() {
        out.push(prefix.clone());
        if out.len() > cap {
            return Err(SreError::CapacityExceeded(format!("more than {cap} minterms")));
        }
        return Ok(());
    }
    for b in [true, false] {
        prefix.push(b);
        split(sfa, ps, i + 1, prefix, env, out, cap)?;
        prefix.pop();
    }
    Ok(())
}

/// Complete DFA with start state 0.
#[derive(Debug, Clone)]
struct Dfa {
    trans: Vec<Vec<usize>>,
    accept: Vec<bool>,
}

impl Dfa {
    fn empty(n: usize) -> Dfa {
        Dfa { trans: vec![vec![0; n]], accept: vec![false] }
    }

    fn eps(n: usize) -> Dfa {
        Dfa { trans: vec![vec![1; n], vec![1; n]], accept: vec![true, false] }
    }

    fn letters(set: &[bool]) -> Dfa {
        let n = set.len();
        let first = set.iter().map(|&b| if b { 1 } else { 2 }).collect();
        Dfa { trans: vec![first, vec![2; n], vec![2; n]], accept: vec![false, true, false] }
    }

    fn n_letters(&self) -> usize {
        self.trans[0].len()
    }

    fn product(a: &Dfa, b: &Dfa, f: impl Fn(bool, bool) -> bool) -> Dfa {
        let n = a.n_letters();
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut queue = VecDeque::new();
        let mut dfa = Dfa { trans: vec![], accept: vec![] };
        ids.insert((0, 0), 0);
        queue.push_back((0, 0));
        dfa.trans.push(vec![]);
        dfa.accept.push(f(a.accept[0], b.accept[0]));
        while let Some((p, q)) = queue.pop_front() {
            let id = ids[&(p, q)];
            let mut row = Vec::with_capacity(n);
            for l in 0..n {
                let key = (a.trans[p][l], b.trans[q][l]);
                let t = *ids.entry(key).or_insert_with(|| {
                    dfa.trans.push(vec![]);
                    dfa.accept.push(f(a.accept[key.0], b.accept[key.1]));
                    queue.push_back(key);
                    dfa.trans.len() - 1
                });
                row.push(t);
            }
            dfa.trans[id] = row;
        }
        dfa.minimize()
    }

    fn complement(&self) -> Dfa {
        Dfa { trans: self.trans.clone(), accept: self.accept.iter().map(|a| !a).collect() }
    }

    /// Subset construction for an NFA given by per-state successor lists
    /// and an epsilon closure function.
    fn determinize(
        n: usize,
        start: Vec<usize>,
        step: impl Fn(usize, usize) -> usize,
        close: impl Fn(&mut BTreeSet<usize>),
        accepting: impl Fn(&BTreeSet<usize>) -> bool,
    ) -> Dfa {
        let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut sets: Vec<Vec<usize>> = vec![];
        let mut dfa = Dfa { trans: vec![], accept: vec![] };
        let mut s0: BTreeSet<usize> = start.into_iter().collect();
        close(&mut s0);
        let key: Vec<usize> = s0.iter().copied().collect();
        ids.insert(key.clone(), 0);
        dfa.accept.push(accepting(&s0));
        dfa.trans.push(vec![]);
        sets.push(key);
        let mut i = 0;
        while i < sets.len() {
            let cur = sets[i].clone();
            let mut row = Vec::with_capacity(n);
            for l in 0..n {
                let mut next: BTreeSet<usize> = cur.iter().map(|&s| step(s, l)).collect();
                close(&mut next);
                let key: Vec<usize> = next.iter().copied().collect();
                let id = match ids.get(&key) {
                    Some(&id) => id,
                    None => {
                        let id = sets.len();
                        ids.insert(key.clone(), id);
                        dfa.accept.push(accepting(&next));
                        dfa.trans.push(vec![]);
                        sets.push(key);
                        id
                    }
                };
                row.push(id);
            }
            dfa.trans[i] = row;
            i += 1;
        }
        dfa.minimize()
    }

    fn concat(a: &Dfa, b: &Dfa) -> Dfa {
        let na = a.trans.len();
        Dfa::determinize(
            a.n_letters(),
            vec![0],
            |s, l| if s < na { a.trans[s][l] } else { na + b.trans[s - na][l] },
            |set| {
                if set.iter().any(|&s| s < na && a.accept[s]) {
                    set.insert(na);
                }
            },
            |set| set.iter().any(|&s| s >= na && b.accept[s - na]),
        )
    }

    fn star(a: &Dfa) -> Dfa {
        let na = a.trans.len();
        // State `na` is the fresh accepting start.
        Dfa::determinize(
            a.n_letters(),
            vec![na],
            |s, l| if s == na { usize::MAX } else { a.trans[s][l] },
            |set| {
                set.remove(&usize::MAX);
                if set.contains(&na) || set.iter().any(|&s| s < na && a.accept[s]) {
                    set.insert(0);
                }
            },
            |set| set.contains(&na) || set.iter().any(|&s| s < na && a.accept[s]),
        )
    }

    /// Moore partition refinement; also drops unreachable states.
    fn minimize(&self) -> Dfa {
        let n = self.n_letters();
        let mut class: Vec<usize> = self.accept.iter().map(|&a| a as usize).collect();
        loop {
            let mut sig_ids: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let mut next = Vec::with_capacity(class.len());
            for s in 0..self.trans.len() {
                let sig = (class[s], (0..n).map(|l| class[self.trans[s][l]]).collect::<Vec<_>>());
                let k = sig_ids.len();
                next.push(*sig_ids.entry(sig).or_insert(k));
            }
            let stable = sig_ids.len() == count_distinct(&class);
            class = next;
            if stable {
                break;
            }
        }
        // Renumber by BFS from the start state.
        let mut order: HashMap<usize, usize> = HashMap::new();
        let mut reps: Vec<usize> = vec![];
        let mut queue = VecDeque::new();
        order.insert(class[0], 0);
        reps.push(0);
        queue.push_back(0);
        while let Some(s) = queue.pop_front() {
            for l in 0..n {
                let t = self.trans[s][l];
                if !order.contains_key(&class[t]) {
                    order.insert(class[t], reps.len());
                    reps.push(t);
                    queue.push_back(t);
                }
            }
        }
        let trans = reps.iter().map(|&s| (0..n).map(|l| order[&class[self.trans[s][l]]]).collect()).collect();
        let accept = reps.iter().map(|&s| self.accept[s]).collect();
        Dfa { trans, accept }
    }

    /// States from which an accepting state is reachable.
    fn live(&self) -> Vec<bool> {
        let mut live = self.accept.clone();
        loop {
            let mut changed = false;
            for s in 0..self.trans.len() {
                if !live[s] && self.trans[s].iter().any(|&t| live[t]) {
                    live[s] = true;
                    changed = true;
                }
            }
            if !changed {
                return live;
            }
        }
    }
}

fn count_distinct(v: &[usize]) -> usize {
    v.iter().collect::<BTreeSet<_>>().len()
}

fn build(alg: &Algebra, r: &Sre) -> Dfa {
    let n = alg.letters.len();
    match r {
        Sre::Empty => Dfa::empty(n),
        Sre::Eps => Dfa::eps(n),
        Sre::Any => Dfa::letters(&vec![true; n]),
        Sre::Event(e, t) => Dfa::letters(&alg.event_letters(e, *t)),
        Sre::Or(a, b) => Dfa::product(&build(alg, a), &build(alg, b), |x, y| x || y),
        Sre::And(a, b) => Dfa::product(&build(alg, a), &build(alg, b), |x, y| x && y),
        Sre::Diff(a, b) => Dfa::product(&build(alg, a), &build(alg, b), |x, y| x && !y),
        Sre::Concat(a, b) => Dfa::concat(&build(alg, a), &build(alg, b)),
        Sre::Star(a) => Dfa::star(&build(alg, a)),
    }
}

/// Whether some accepting path is feasible under the context.
fn dfa_nonempty(sfa: &SfaEnv, alg: &Algebra, dfa: &Dfa) -> Result<bool, SreError> {
    if !alg.feasible(sfa, vec![], &alg.env)? {
        return Ok(false);
    }
    let live = dfa.live();
    if !live[0] {
        return Ok(false);
    }
    let mut memo: HashMap<Vec<usize>, bool> = HashMap::new();
    let mut seen: Vec<Vec<Vec<usize>>> = vec![vec![]; dfa.trans.len()];
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, vec![])];
    seen[0].push(vec![]);
    while let Some((q, used)) = stack.pop() {
        if dfa.accept[q] {
            return Ok(true);
        }
        for (l, &t) in dfa.trans[q].iter().enumerate() {
            if !live[t] {
                continue;
            }
            let mut next = used.clone();
            if alg.letters[l].ambient && !used.contains(&l) {
                next.push(l);
                next.sort_unstable();
                let ok = match memo.get(&next) {
                    Some(&ok) => ok,
                    None => {
                        let mut env = alg.env.clone();
                        let parts = next.iter().map(|&k| alg.instance(k, &format!("l{k}"), sfa.alphabet, &mut env)).collect();
                        let ok = alg.feasible(sfa, parts, &env)?;
                        memo.insert(next.clone(), ok);
                        ok
                    }
                };
                if !ok {
                    continue;
                }
            }
            if seen[t].iter().any(|s| is_subset(s, &next)) {
                continue;
            }
            seen[t].retain(|s| !is_subset(&next, s));
            seen[t].push(next.clone());
            stack.push((t, next));
        }
    }
    Ok(false)
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Events of a sequence built from events, `any`, epsilon and stars, with
/// every star taken zero times. `false` if other operators occur.
fn spine<'r>(r: &'r Sre, out: &mut Vec<&'r SymbolicEvent>) -> bool {
    match r {
        Sre::Eps | Sre::Any | Sre::Star(_) => true,
        Sre::Event(e, _) => {
            out.push(e);
            true
        }
        Sre::Concat(a, b) => spine(a, out) && spine(b, out),
        _ => false,
    }
}

/// Sufficient check for non-emptiness: the spine's events are jointly satisfiable.
fn spine_witness(sfa: &SfaEnv, a: &Sre) -> Result<bool, SreError> {
    let mut evs = vec![];
    if !spine(a, &mut evs) || sfa.alphabet.is_empty() {
        return Ok(false);
    }
    let mut env = sfa.env.clone();
    a.infer_free_sorts(sfa.alphabet, &mut env)?;
    let mut parts = vec![];
    for (i, e) in evs.iter().enumerate() {
        let Some(sig) = sfa.alphabet.get(&e.op) else { return Ok(false) };
        if sig.args.len() != e.args.len() {
            return Ok(false);
        }
        let names: Vec<String> = (0..=e.args.len()).map(|j| format!("#w{i}_{j}")).collect();
        for (n, s) in names.iter().zip(sig.args.iter().chain([&sig.ret])) {
            env.insert(n.clone(), s.clone());
        }
        parts.push(e.with_binders(&names).qual);
    }
    Ok(sfa.oracle.check_sorted(&Qualifier::and(parts), &sfa.ctx, &env)?)
}

/// True iff no trace is accepted under any valuation consistent with the context.
pub fn is_empty(sfa: &SfaEnv, a: &Sre) -> Result<bool, SreError> {
    let a = a.untagged();
    if spine_witness(sfa, &a)? {
        return Ok(false);
    }
    let alg = Algebra::build(sfa, &[&a])?;
    let dfa = build(&alg, &a);
    Ok(!dfa_nonempty(sfa, &alg, &dfa)?)
}

/// For every valuation consistent with the context, every trace of `a1` is a trace of `a2`.
pub fn includes(sfa: &SfaEnv, a1: &Sre, a2: &Sre) -> Result<bool, SreError> {
    let (a1, a2) = (a1.untagged(), a2.untagged());
    let alg = Algebra::build(sfa, &[&a1, &a2])?;
    let d = Dfa::product(&build(&alg, &a1), &build(&alg, &a2).complement(), |x, y| x && y);
    Ok(!dfa_nonempty(sfa, &alg, &d)?)
}

/// An equivalent regex without intersection or difference, shaped as a
/// union of sequences whose stars wrap alternations of single events where
/// the automaton allows it.
pub fn normalize_boolean_ops(sfa: &SfaEnv, a: &Sre) -> Result<Sre, SreError> {
    let alg = Algebra::build(sfa, &[a])?;
    let dfa = build(&alg, a);
    if !dfa_nonempty(sfa, &alg, &dfa)? {
        return Ok(Sre::Empty);
    }
    Emitter::new(sfa, &alg, &dfa).run()
}

struct Emitter<'s, 'a> {
    sfa: &'s SfaEnv<'a>,
    alg: &'s Algebra,
    dfa: &'s Dfa,
    live: Vec<bool>,
    scc: Vec<usize>,
    members: Vec<Vec<usize>>,
    inner: HashMap<(usize, usize), Sre>,
    paths: Vec<Sre>,
    edges: usize,
}

impl<'s, 'a> Emitter<'s, 'a> {
    fn new(sfa: &'s SfaEnv<'a>, alg: &'s Algebra, dfa: &'s Dfa) -> Self {
        let live = dfa.live();
        let (scc, count) = tarjan(dfa, &live);
        let mut members = vec![vec![]; count];
        for (s, &c) in scc.iter().enumerate() {
            if live[s] {
                members[c].push(s);
            }
        }
        Emitter { sfa, alg, dfa, live, scc, members, inner: HashMap::new(), paths: vec![], edges: 0 }
    }

    fn run(mut self) -> Result<Sre, SreError> {
        let env = self.alg.env.clone();
        self.walk(0, vec![], vec![], env)?;
        Ok(Sre::or_all(std::mem::take(&mut self.paths)))
    }

    fn letters_between(&self, p: usize, q: usize) -> Vec<usize> {
        (0..self.alg.letters.len()).filter(|&l| self.dfa.trans[p][l] == q).collect()
    }

    fn walk(&mut self, entry: usize, prefix: Vec<Sre>, mandatory: Vec<Qualifier>, menv: SortEnv) -> Result<(), SreError> {
        let c = self.scc[entry];
        let states = self.members[c].clone();
        for &x in &states {
            let inner = self.inner_regex(entry, x);
            let mut seq = prefix.clone();
            seq.push(inner);
            if self.dfa.accept[x] {
                self.paths.push(Sre::concat_all(seq.clone()));
                if self.paths.len() > self.sfa.cfg.max_branches {
                    return Err(SreError::CapacityExceeded(format!(
                        "more than {} branches",
                        self.sfa.cfg.max_branches
                    )));
                }
            }
            let mut targets: Vec<usize> = self.dfa.trans[x]
                .iter()
                .copied()
                .filter(|&t| self.live[t] && self.scc[t] != c)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            targets.sort_unstable();
            for t in targets {
                let letters = self.letters_between(x, t);
                let mut env = menv.clone();
                let mut must = mandatory.clone();
                if letters.iter().all(|&l| self.alg.letters[l].ambient) {
                    self.edges += 1;
                    let stem = format!("e{}", self.edges);
                    let alts: Vec<Qualifier> =
                        letters.iter().map(|&l| self.alg.instance(l, &stem, self.sfa.alphabet, &mut env)).collect();
                    must.push(Qualifier::or(alts));
                    if !self.alg.feasible(self.sfa, must.clone(), &env)? {
                        continue;
                    }
                }
                let mut next = seq.clone();
                next.push(edge_regex(self.alg, self.sfa.alphabet, &letters));
                self.walk(t, next, must, env)?;
            }
        }
        Ok(())
    }

    /// Regex for runs from `e` to `x` staying inside their component.
    fn inner_regex(&mut self, e: usize, x: usize) -> Sre {
        if let Some(r) = self.inner.get(&(e, x)) {
            return r.clone();
        }
        let states = self.members[self.scc[e]].clone();
        let r = if states.len() == 1 {
            let loops = self.letters_between(e, e);
            if loops.is_empty() {
                Sre::Eps
            } else {
                Sre::star(edge_regex(self.alg, self.sfa.alphabet, &loops))
            }
        } else {
            // State elimination over the component plus fresh source and sink.
            let k = states.len();
            let (src, dst) = (k, k + 1);
            let mut g: Vec<Vec<Sre>> = vec![vec![Sre::Empty; k + 2]; k + 2];
            for (i, &p) in states.iter().enumerate() {
                for (j, &q) in states.iter().enumerate() {
                    let ls = self.letters_between(p, q);
                    if !ls.is_empty() {
                        g[i][j] = edge_regex(self.alg, self.sfa.alphabet, &ls);
                    }
                }
            }
            let ei = states.iter().position(|&s| s == e).unwrap();
            let xi = states.iter().position(|&s| s == x).unwrap();
            g[src][ei] = Sre::Eps;
            g[xi][dst] = Sre::Eps;
            let mut alive: Vec<usize> = (0..k + 2).collect();
            for m in 0..k {
                alive.retain(|&v| v != m);
                let self_loop = Sre::star(g[m][m].clone());
                for &p in &alive {
                    if g[p][m] == Sre::Empty {
                        continue;
                    }
                    for &q in &alive {
                        if g[m][q] == Sre::Empty {
                            continue;
                        }
                        let via = Sre::concat_all([g[p][m].clone(), self_loop.clone(), g[m][q].clone()]);
                        g[p][q] = Sre::or(g[p][q].clone(), via);
                    }
                }
            }
            g[src][dst].clone()
        };
        self.inner.insert((e, x), r.clone());
        r
    }
}

/// Tarjan's algorithm over live states; returns component ids and count.
fn tarjan(dfa: &Dfa, live: &[bool]) -> (Vec<usize>, usize) {
    let n = dfa.trans.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = vec![];
    let mut next = 0;
    let mut count = 0;
    for root in 0..n {
        if index[root] != usize::MAX || !live[root] {
            continue;
        }
        // Iterative DFS: (state, next letter to try).
        let mut work = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on[root] = true;
        while let Some(&mut (v, ref mut li)) = work.last_mut() {
            if *li < dfa.trans[v].len() {
                let w = dfa.trans[v][*li];
                *li += 1;
                if !live[w] {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on[w] = true;
                    work.push((w, 0));
                } else if on[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(u, _)) = work.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on[w] = false;
                        comp[w] = count;
                        if w == v {
                            break;
                        }
                    }
                    count += 1;
                }
            }
        }
    }
    (comp, count)
}

/// Union of events covering exactly `letters`, grouped by operation and tag.
fn edge_regex(alg: &Algebra, alphabet: &Alphabet, letters: &[usize]) -> Sre {
    if letters.len() == alg.letters.len() {
        return Sre::Any;
    }
    let mut groups: BTreeMap<(String, Tag), Vec<usize>> = BTreeMap::new();
    for &l in letters {
        let le = &alg.letters[l];
        groups.entry((le.op.clone(), le.tag)).or_default().push(l);
    }
    let mut alts = vec![];
    for ((op, tag), ls) in groups {
        let sig = &alphabet[&op];
        let others: Vec<&Vec<bool>> = alg
            .letters
            .iter()
            .enumerate()
            .filter(|(i, l)| l.op == op && l.tag == tag && !ls.contains(i))
            .map(|(_, l)| &l.bits)
            .collect();
        let cubes = cover(ls.iter().map(|&l| &alg.letters[l].bits).collect(), &others);
        let ps = &alg.preds[&op];
        let qual = Qualifier::or(cubes.into_iter().map(|cube| {
            Qualifier::and(cube.into_iter().map(|(i, b)| if b { ps[i].clone() } else { Qualifier::not(ps[i].clone()) }))
        }))
        .simplify();
        let names = binder_names(sig.args.len());
        let ev = SymbolicEvent {
            op: op.clone(),
            args: names[..sig.args.len()].to_vec(),
            ret: names[sig.args.len()].clone(),
            qual,
            ghost: sig.ghost,
        };
        alts.push(Sre::tagged(ev, tag));
    }
    Sre::or_all(alts)
}

/// Greedy cube cover: widen each minterm by dropping literals as long as no
/// excluded minterm is covered; then drop subsumed cubes.
fn cover(on: Vec<&Vec<bool>>, off: &[&Vec<bool>]) -> Vec<Vec<(usize, bool)>> {
    let mut cubes: Vec<Vec<(usize, bool)>> = vec![];
    for m in on {
        let mut cube: Vec<(usize, bool)> = m.iter().copied().enumerate().collect();
        let mut i = 0;
        while i < cube.len() {
            let trial: Vec<(usize, bool)> = cube.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| *c).collect();
            if off.iter().any(|o| trial.iter().all(|&(k, b)| o[k] == b)) {
                i += 1;
            } else {
                cube = trial;
            }
        }
        if !cubes.contains(&cube) {
            cubes.push(cube);
        }
    }
    let all = cubes.clone();
    cubes.retain(|c| !all.iter().any(|d| d != c && d.iter().all(|lit| c.contains(lit))));
    cubes
}

/// Whether the ghost-free trace `alpha` is the erasure of some trace of `a`
/// under some valuation consistent with the context.
pub fn accepts_erased(sfa: &SfaEnv, a: &Sre, alpha: &[Event]) -> Result<bool, SreError> {
    let a = a.untagged();
    let alg = Algebra::build(sfa, &[&a])?;
    let dfa = build(&alg, &a);
    let live = dfa.live();
    if !live[0] {
        return Ok(false);
    }
    type Key = (usize, usize, Vec<usize>, BTreeSet<Qualifier>);
    let mut seen: BTreeSet<(usize, usize, Vec<usize>, Vec<String>)> = BTreeSet::new();
    let mut stack: Vec<Key> = vec![(0, 0, vec![], BTreeSet::new())];
    let mut memo: HashMap<(Vec<usize>, Vec<String>), bool> = HashMap::new();
    let mut check = |ghosts: &Vec<usize>, ground: &BTreeSet<Qualifier>| -> Result<bool, SreError> {
        let key = (ghosts.clone(), ground.iter().map(|q| q.to_string()).collect::<Vec<_>>());
        if let Some(&r) = memo.get(&key) {
            return Ok(r);
        }
        let mut env = alg.env.clone();
        let mut parts: Vec<Qualifier> =
            ghosts.iter().map(|&k| alg.instance(k, &format!("g{k}"), sfa.alphabet, &mut env)).collect();
        parts.extend(ground.iter().cloned());
        let r = alg.feasible(sfa, parts, &env)?;
        memo.insert(key, r);
        Ok(r)
    };
    while let Some((q, pos, ghosts, ground)) = stack.pop() {
        let sig_key = (q, pos, ghosts.clone(), ground.iter().map(|g| g.to_string()).collect::<Vec<_>>());
        if !seen.insert(sig_key) {
            continue;
        }
        if pos == alpha.len() && dfa.accept[q] {
            return Ok(true);
        }
        for (l, &t) in dfa.trans[q].iter().enumerate() {
            if !live[t] {
                continue;
            }
            let letter = &alg.letters[l];
            let sig = &sfa.alphabet[&letter.op];
            if sig.ghost {
                let mut g = ghosts.clone();
                if letter.ambient && !g.contains(&l) {
                    g.push(l);
                    g.sort_unstable();
                    if !check(&g, &ground)? {
                        continue;
                    }
                } else if !letter.ambient && t == q {
                    continue;
                }
                stack.push((t, pos, g, ground.clone()));
            } else if pos < alpha.len() && alpha[pos].op == letter.op && alpha[pos].args.len() == sig.args.len() {
                let ev = &alpha[pos];
                let names = binder_names(sig.args.len());
                let mut phi = letter.formula.clone();
                for (x, c) in names.iter().zip(ev.args.iter().chain([&ev.ret])) {
                    phi = phi.subst(x, &Term::Const(c.clone()));
                }
                let phi = phi.simplify();
                if phi == Qualifier::False {
                    continue;
                }
                let mut gr = ground.clone();
                if phi != Qualifier::True {
                    gr.insert(phi);
                    if !check(&ghosts, &gr)? {
                        continue;
                    }
                }
                stack.push((t, pos + 1, ghosts.clone(), gr));
            }
        }
    }
    Ok(false)
}


/// One piece of an automaton path: a single event, or the self-loop of a state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathSegment {
    Event(SymbolicEvent, Tag),
    Star(Vec<SymbolicEvent>),
}

/// Events covering `letters`, one per operation. Resolved letters only
/// travel alone, so an op keeps the resolved tag only if all its letters have it.
fn edge_events(alg: &Algebra, alphabet: &Alphabet, letters: &[usize]) -> Vec<(SymbolicEvent, Tag)> {
    let mut by_op: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &l in letters {
        by_op.entry(alg.letters[l].op.as_str()).or_default().push(l);
    }
    let mut out = vec![];
    for (op, ls) in by_op {
        let tag = if ls.iter().all(|&l| alg.letters[l].tag == Tag::Resolved) { Tag::Resolved } else { Tag::Unresolved };
        let ls: Vec<usize> =
            ls.into_iter().filter(|&l| alg.letters[l].tag == tag || alg.letters[l].tag == Tag::Any).collect();
        let sig = &alphabet[op];
        let others: Vec<&Vec<bool>> = alg
            .letters
            .iter()
            .enumerate()
            .filter(|(i, l)| l.op == op && (l.tag == tag || l.tag == Tag::Any) && !ls.contains(i))
            .map(|(_, l)| &l.bits)
            .collect();
        let mut bits: Vec<&Vec<bool>> = ls.iter().map(|&l| &alg.letters[l].bits).collect();
        bits.dedup();
        let ps = &alg.preds[op];
        let qual = Qualifier::or(cover(bits, &others).into_iter().map(|cube| {
            Qualifier::and(cube.into_iter().map(|(i, b)| if b { ps[i].clone() } else { Qualifier::not(ps[i].clone()) }))
        }))
        .simplify();
        let names = binder_names(sig.args.len());
        let ev = SymbolicEvent {
            op: op.to_string(),
            args: names[..sig.args.len()].to_vec(),
            ret: names[sig.args.len()].clone(),
            qual,
            ghost: sig.ghost,
        };
        out.push((ev, if tag == Tag::Any { Tag::Unresolved } else { tag }));
    }
    out
}

/// Accepting paths of the minimal automaton of `a`, shortest first. Each
/// state contributes its self-loop as a star; moves between states become
/// single events. A state is entered at most `visits` times, and paths whose
/// events cannot hold together under the context are dropped.
pub fn accepting_paths(sfa: &SfaEnv, a: &Sre, visits: usize, max_paths: usize) -> Result<Vec<Vec<PathSegment>>, SreError> {
    let alg = Algebra::build(sfa, &[a])?;
    let dfa = build(&alg, a);
    let live = dfa.live();
    if !live[0] || !alg.feasible(sfa, vec![], &alg.env)? {
        return Ok(vec![]);
    }
    let n = dfa.trans.len();
    let loops: Vec<Option<PathSegment>> = (0..n)
        .map(|s| {
            let ls: Vec<usize> = (0..alg.letters.len()).filter(|&l| dfa.trans[s][l] == s).collect();
            if ls.is_empty() {
                return None;
            }
            let mut evs: Vec<SymbolicEvent> = vec![];
            for (e, _) in edge_events(&alg, sfa.alphabet, &ls) {
                if !evs.contains(&e) {
                    evs.push(e);
                }
            }
            Some(PathSegment::Star(evs))
        })
        .collect();
    let moves: Vec<Vec<(usize, SymbolicEvent, Tag)>> = (0..n)
        .map(|s| {
            let targets: BTreeSet<usize> = dfa.trans[s].iter().copied().filter(|&t| t != s && live[t]).collect();
            let mut out = vec![];
            for t in targets {
                let ls: Vec<usize> = (0..alg.letters.len()).filter(|&l| dfa.trans[s][l] == t).collect();
                for (e, tag) in edge_events(&alg, sfa.alphabet, &ls) {
                    out.push((t, e, tag));
                }
            }
            out
        })
        .collect();

    struct Partial {
        state: usize,
        path: Vec<PathSegment>,
        seen: Vec<usize>,
        must: Vec<Qualifier>,
        env: SortEnv,
    }
    let enter = |p: &mut Partial, s: usize| {
        p.state = s;
        p.seen[s] += 1;
        if let Some(l) = &loops[s] {
            p.path.push(l.clone());
        }
    };
    let mut start = Partial { state: 0, path: vec![], seen: vec![0; n], must: vec![], env: alg.env.clone() };
    enter(&mut start, 0);
    let mut queue = VecDeque::from([start]);
    let mut out: Vec<Vec<PathSegment>> = vec![];
    let mut expanded = 0usize;
    let mut stems = 0usize;
    while let Some(p) = queue.pop_front() {
        if dfa.accept[p.state] {
            out.push(p.path.clone());
            if out.len() >= max_paths {
                break;
            }
        }
        expanded += 1;
        if expanded > max_paths * 64 {
            break;
        }
        for (t, e, tag) in &moves[p.state] {
            if p.seen[*t] >= visits.max(1) {
                continue;
            }
            let mut env = p.env.clone();
            let mut must = p.must.clone();
            if e.qual.free_vars().iter().any(|v| !e.binders().contains(v)) {
                stems += 1;
                let sig = &sfa.alphabet[&e.op];
                let mut map = BTreeMap::new();
                for (i, (b, s)) in e.binders().iter().zip(sig.args.iter().chain([&sig.ret])).enumerate() {
                    let fresh = format!("#p{stems}_{i}");
                    env.insert(fresh.clone(), s.clone());
                    map.insert(b.clone(), fresh);
                }
                must.push(e.qual.rename(&map));
                if !alg.feasible(sfa, must.clone(), &env)? {
                    continue;
                }
            }
            let mut next = Partial { state: p.state, path: p.path.clone(), seen: p.seen.clone(), must, env };
            next.path.push(PathSegment::Event(e.clone(), *tag));
            enter(&mut next, *t);
            queue.push_back(next);
        }
    }
    Ok(out)
}
