//! Symbolic regular expressions over qualified events.

mod automaton;

pub use automaton::{accepting_paths, accepts_erased, includes, is_empty, normalize_boolean_ops, NormConfig, PathSegment, SfaEnv};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::logic::{fresh_variant, Const, Domain, LogicError, Qualifier, Sort, SortEnv, Term, Valuation};
use crate::trace::{Alphabet, Event};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SreError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("event `{op}` has {found} binders, expected {expected}")]
    Arity { op: String, expected: usize, found: usize },
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
}

/// `<op x1 .. xn r | phi>`: matches one event of `op` whose payload satisfies `qual`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolicEvent {
    pub op: String,
    pub args: Vec<String>,
    pub ret: String,
    pub qual: Qualifier,
    pub ghost: bool,
}

impl SymbolicEvent {
    /// `<op>`: any event of `op`.
    pub fn any_of(op: &str, sig: &crate::trace::OpSig) -> Self {
        SymbolicEvent {
            op: op.to_string(),
            args: (0..sig.args.len()).map(|i| format!("_{i}")).collect(),
            ret: "_r".to_string(),
            qual: Qualifier::True,
            ghost: sig.ghost,
        }
    }

    pub fn binders(&self) -> Vec<String> {
        let mut b = self.args.clone();
        b.push(self.ret.clone());
        b
    }

    /// Free variables of the qualifier other than the event's own binders.
    pub fn ambient_vars(&self) -> BTreeSet<String> {
        let binders = self.binders();
        self.qual.free_vars().into_iter().filter(|v| !binders.contains(v)).collect()
    }

    /// Renames binders to `_0 .. _k-1` and `_r`.
    pub fn canonical(&self) -> SymbolicEvent {
        let names: Vec<String> = (0..self.args.len()).map(|i| format!("_{i}")).chain(["_r".to_string()]).collect();
        self.with_binders(&names)
    }

    /// Renames binders to `names` (args followed by ret).
    pub fn with_binders(&self, names: &[String]) -> SymbolicEvent {
        let map: BTreeMap<String, String> =
            self.binders().into_iter().zip(names.iter().cloned()).filter(|(a, b)| a != b).collect();
        SymbolicEvent {
            op: self.op.clone(),
            args: names[..self.args.len()].to_vec(),
            ret: names[self.args.len()].clone(),
            qual: self.qual.rename(&map),
            ghost: self.ghost,
        }
    }

    pub fn with_qual(&self, qual: Qualifier) -> SymbolicEvent {
        SymbolicEvent { qual, ..self.clone() }
    }

    /// Substitutes an ambient variable; binders shadow.
    pub fn subst(&self, name: &str, by: &Term) -> SymbolicEvent {
        if self.binders().iter().any(|b| b == name) {
            return self.clone();
        }
        let mut by_vars = BTreeSet::new();
        collect_term_vars(by, &mut by_vars);
        let clash: Vec<String> = self.binders().into_iter().filter(|b| by_vars.contains(b)).collect();
        let ev = if clash.is_empty() {
            self.clone()
        } else {
            let mut taken = self.qual.free_vars();
            taken.extend(by_vars.iter().cloned());
            taken.extend(self.binders());
            let names: Vec<String> = self
                .binders()
                .into_iter()
                .map(|b| {
                    if clash.contains(&b) {
                        let n = fresh_variant(&b, &taken);
                        taken.insert(n.clone());
                        n
                    } else {
                        b
                    }
                })
                .collect();
            self.with_binders(&names)
        };
        SymbolicEvent { qual: ev.qual.subst(name, by), ..ev }
    }

    /// Sorts of the binders according to the alphabet.
    pub fn binder_sorts(&self, alphabet: &Alphabet) -> Result<SortEnv, SreError> {
        let sig = alphabet.get(&self.op).ok_or_else(|| SreError::UnknownOp(self.op.clone()))?;
        if sig.args.len() != self.args.len() {
            return Err(SreError::Arity { op: self.op.clone(), expected: sig.args.len(), found: self.args.len() });
        }
        let mut env: SortEnv = self.args.iter().cloned().zip(sig.args.iter().cloned()).collect();
        env.insert(self.ret.clone(), sig.ret.clone());
        Ok(env)
    }

    /// Whether the concrete event matches under `sigma` (which closes ambient variables).
    pub fn matches(&self, e: &Event, sigma: &Valuation, domain: &Domain) -> Result<bool, SreError> {
        if e.op != self.op || e.args.len() != self.args.len() {
            return Ok(false);
        }
        if self.qual.is_true() {
            return Ok(true);
        }
        let mut s = sigma.clone();
        for (x, c) in self.args.iter().zip(&e.args) {
            s.insert(x.clone(), c.clone());
        }
        s.insert(self.ret.clone(), e.ret.clone());
        Ok(self.qual.eval(&s, domain)?)
    }
}

fn collect_term_vars(t: &Term, out: &mut BTreeSet<String>) {
    match t {
        Term::Const(_) => {}
        Term::Var(v) => {
            out.insert(v.clone());
        }
        Term::Add(a, b) | Term::Sub(a, b) => {
            collect_term_vars(a, out);
            collect_term_vars(b, out);
        }
    }
}

impl fmt::Display for SymbolicEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}{}", if self.ghost { "~" } else { "" }, self.op)?;
        if self.qual.is_true() {
            return write!(f, ">");
        }
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, " {} | {}>", self.ret, self.qual)
    }
}

/// Refinement status carried by events inside the synthesis loop. Regexes
/// written by users are `Any`; it matches both of the other two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Any,
    Unresolved,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sre {
    Empty,
    Eps,
    Any,
    Event(Box<SymbolicEvent>, Tag),
    Or(Box<Sre>, Box<Sre>),
    Concat(Box<Sre>, Box<Sre>),
    Star(Box<Sre>),
    Diff(Box<Sre>, Box<Sre>),
    And(Box<Sre>, Box<Sre>),
}

impl Sre {
    pub fn event(ev: SymbolicEvent) -> Sre {
        Sre::Event(Box::new(ev), Tag::Any)
    }

    pub fn tagged(ev: SymbolicEvent, tag: Tag) -> Sre {
        Sre::Event(Box::new(ev), tag)
    }

    pub fn or(a: Sre, b: Sre) -> Sre {
        match (a, b) {
            (Sre::Empty, x) | (x, Sre::Empty) => x,
            (a, b) if a == b => a,
            (a, b) => Sre::Or(Box::new(a), Box::new(b)),
        }
    }

    pub fn concat(a: Sre, b: Sre) -> Sre {
        match (a, b) {
            (Sre::Empty, _) | (_, Sre::Empty) => Sre::Empty,
            (Sre::Eps, x) | (x, Sre::Eps) => x,
            (a, b) => Sre::Concat(Box::new(a), Box::new(b)),
        }
    }

    pub fn star(a: Sre) -> Sre {
        match a {
            Sre::Empty | Sre::Eps => Sre::Eps,
            s @ Sre::Star(_) => s,
            a => Sre::Star(Box::new(a)),
        }
    }

    pub fn and(a: Sre, b: Sre) -> Sre {
        match (a, b) {
            (Sre::Empty, _) | (_, Sre::Empty) => Sre::Empty,
            (a, b) if a == b => a,
            (a, b) => Sre::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn diff(a: Sre, b: Sre) -> Sre {
        match (a, b) {
            (Sre::Empty, _) => Sre::Empty,
            (a, Sre::Empty) => a,
            (a, b) => Sre::Diff(Box::new(a), Box::new(b)),
        }
    }

    pub fn or_all(parts: impl IntoIterator<Item = Sre>) -> Sre {
        let mut it = parts.into_iter();
        let Some(first) = it.next() else { return Sre::Empty };
        it.fold(first, Sre::or)
    }

    pub fn concat_all(parts: impl IntoIterator<Item = Sre>) -> Sre {
        parts.into_iter().fold(Sre::Eps, Sre::concat)
    }

    pub fn any_star() -> Sre {
        Sre::Star(Box::new(Sre::Any))
    }

    /// `any* . ev . (any \ <op>)*`: `ev` is the last event of its operation.
    pub fn last(ev: SymbolicEvent) -> Sre {
        let op_any = SymbolicEvent { qual: Qualifier::True, ..ev.clone() };
        Sre::concat_all([Sre::any_star(), Sre::event(ev), Sre::star(Sre::diff(Sre::Any, Sre::event(op_any)))])
    }

    pub fn is_normalized(&self) -> bool {
        match self {
            Sre::Empty | Sre::Eps | Sre::Any | Sre::Event(..) => true,
            Sre::Or(a, b) | Sre::Concat(a, b) => a.is_normalized() && b.is_normalized(),
            Sre::Star(a) => a.is_normalized(),
            Sre::Diff(..) | Sre::And(..) => false,
        }
    }

    pub fn events(&self) -> Vec<&SymbolicEvent> {
        let mut out = Vec::new();
        self.collect_events(&mut out);
        out
    }

    fn collect_events<'a>(&'a self, out: &mut Vec<&'a SymbolicEvent>) {
        match self {
            Sre::Empty | Sre::Eps | Sre::Any => {}
            Sre::Event(e, _) => out.push(e),
            Sre::Or(a, b) | Sre::Concat(a, b) | Sre::Diff(a, b) | Sre::And(a, b) => {
                a.collect_events(out);
                b.collect_events(out);
            }
            Sre::Star(a) => a.collect_events(out),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        self.events().into_iter().flat_map(|e| e.ambient_vars()).collect()
    }

    pub fn map_events(&self, f: &mut impl FnMut(&SymbolicEvent, Tag) -> Sre) -> Sre {
        match self {
            Sre::Empty | Sre::Eps | Sre::Any => self.clone(),
            Sre::Event(e, t) => f(e, *t),
            Sre::Or(a, b) => Sre::Or(Box::new(a.map_events(f)), Box::new(b.map_events(f))),
            Sre::Concat(a, b) => Sre::Concat(Box::new(a.map_events(f)), Box::new(b.map_events(f))),
            Sre::Diff(a, b) => Sre::Diff(Box::new(a.map_events(f)), Box::new(b.map_events(f))),
            Sre::And(a, b) => Sre::And(Box::new(a.map_events(f)), Box::new(b.map_events(f))),
            Sre::Star(a) => Sre::Star(Box::new(a.map_events(f))),
        }
    }

    pub fn subst(&self, name: &str, by: &Term) -> Sre {
        self.map_events(&mut |e, t| Sre::tagged(e.subst(name, by), t))
    }

    pub fn subst_const(&self, name: &str, c: &Const) -> Sre {
        self.subst(name, &Term::Const(c.clone()))
    }

    pub fn rename(&self, map: &BTreeMap<String, String>) -> Sre {
        if map.is_empty() {
            return self.clone();
        }
        let mut out = self.clone();
        let mut stage = Vec::new();
        for (i, (from, to)) in map.iter().enumerate() {
            let tmp = format!("#s{i}");
            out = out.subst(from, &Term::Var(tmp.clone()));
            stage.push((tmp, to.clone()));
        }
        for (tmp, to) in stage {
            out = out.subst(&tmp, &Term::Var(to));
        }
        out
    }

    /// Simplifies every event qualifier.
    pub fn simplify_quals(&self) -> Sre {
        self.map_events(&mut |e, t| Sre::tagged(e.with_qual(e.qual.simplify()), t))
    }

    /// Binders renamed to canonical names, for alpha-equivalence comparisons.
    pub fn canonical(&self) -> Sre {
        self.map_events(&mut |e, t| Sre::tagged(e.canonical(), t))
    }

    /// Drops all tags back to `Any`.
    pub fn untagged(&self) -> Sre {
        self.map_events(&mut |e, _| Sre::event(e.clone()))
    }

    /// Checks ops, arities and ghost flags, and well-sortedness of every
    /// qualifier given sorts of the ambient variables.
    pub fn check(&self, alphabet: &Alphabet, ambient: &SortEnv) -> Result<(), SreError> {
        for e in self.events() {
            let sig = alphabet.get(&e.op).ok_or_else(|| SreError::UnknownOp(e.op.clone()))?;
            if sig.ghost != e.ghost {
                return Err(SreError::UnknownOp(format!(
                    "{}{} (ghost marker mismatch)",
                    if e.ghost { "~" } else { "" },
                    e.op
                )));
            }
            let mut env = ambient.clone();
            env.extend(e.binder_sorts(alphabet)?);
            e.qual.check_sorts(&BTreeMap::new(), &env)?;
        }
        Ok(())
    }

    /// Sorts for free variables, inferred from their use next to event binders.
    pub fn infer_free_sorts(&self, alphabet: &Alphabet, env: &mut SortEnv) -> Result<(), SreError> {
        for e in self.events() {
            let binders = e.binder_sorts(alphabet)?;
            let mut local = env.clone();
            local.extend(binders.clone());
            e.qual.infer_sorts(&mut local)?;
            for (k, v) in local {
                if !binders.contains_key(&k) {
                    env.entry(k).or_insert(v);
                }
            }
        }
        Ok(())
    }

    /// Trace-language membership.
    pub fn member(&self, alpha: &[Event], sigma: &Valuation, domain: &Domain) -> Result<bool, SreError> {
        let mut arena = Vec::new();
        let root = flatten(self, &mut arena);
        let mut m = Matcher { arena: &arena, alpha, sigma, domain, memo: HashMap::new() };
        m.matches(root, 0, alpha.len())
    }
}

enum Node<'a> {
    Empty,
    Eps,
    Any,
    Event(&'a SymbolicEvent),
    Or(usize, usize),
    Concat(usize, usize),
    Star(usize),
    Diff(usize, usize),
    And(usize, usize),
}

fn flatten<'a>(s: &'a Sre, arena: &mut Vec<Node<'a>>) -> usize {
    let node = match s {
        Sre::Empty => Node::Empty,
        Sre::Eps => Node::Eps,
        Sre::Any => Node::Any,
        Sre::Event(e, _) => Node::Event(e),
        Sre::Or(a, b) => Node::Or(flatten(a, arena), flatten(b, arena)),
        Sre::Concat(a, b) => Node::Concat(flatten(a, arena), flatten(b, arena)),
        Sre::Star(a) => Node::Star(flatten(a, arena)),
        Sre::Diff(a, b) => Node::Diff(flatten(a, arena), flatten(b, arena)),
        Sre::And(a, b) => Node::And(flatten(a, arena), flatten(b, arena)),
    };
    arena.push(node);
    arena.len() - 1
}

struct Matcher<'a> {
    arena: &'a [Node<'a>],
    alpha: &'a [Event],
    sigma: &'a Valuation,
    domain: &'a Domain,
    memo: HashMap<(usize, usize, usize), bool>,
}

impl Matcher<'_> {
    fn matches(&mut self, n: usize, i: usize, j: usize) -> Result<bool, SreError> {
        if let Some(&r) = self.memo.get(&(n, i, j)) {
            return Ok(r);
        }
        let r = match self.arena[n] {
            Node::Empty => false,
            Node::Eps => i == j,
            Node::Any => j == i + 1,
            Node::Event(e) => j == i + 1 && e.matches(&self.alpha[i], self.sigma, self.domain)?,
            Node::Or(a, b) => self.matches(a, i, j)? || self.matches(b, i, j)?,
            Node::And(a, b) => self.matches(a, i, j)? && self.matches(b, i, j)?,
            Node::Diff(a, b) => self.matches(a, i, j)? && !self.matches(b, i, j)?,
            Node::Concat(a, b) => {
                let mut found = false;
                for k in i..=j {
                    if self.matches(a, i, k)? && self.matches(b, k, j)? {
                        found = true;
                        break;
                    }
                }
                found
            }
            Node::Star(a) => {
                if i == j {
                    true
                } else {
                    let mut found = false;
                    for k in i + 1..=j {
                        if self.matches(a, i, k)? && self.matches(n, k, j)? {
                            found = true;
                            break;
                        }
                    }
                    found
                }
            }
        };
        self.memo.insert((n, i, j), r);
        Ok(r)
    }
}

// Precedence: 1 union, 2 intersection, 3 difference, 4 concat, 5 star, 6 atoms.
fn prec(s: &Sre) -> u8 {
    match s {
        Sre::Or(..) => 1,
        Sre::And(..) => 2,
        Sre::Diff(..) => 3,
        Sre::Concat(..) => 4,
        Sre::Star(_) => 5,
        _ => 6,
    }
}

fn fmt_sre(s: &Sre, ctx: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(s);
    if p < ctx {
        write!(f, "(")?;
    }
    match s {
        Sre::Empty => write!(f, "empty")?,
        Sre::Eps => write!(f, "eps")?,
        Sre::Any => write!(f, "any")?,
        Sre::Event(e, _) => write!(f, "{e}")?,
        Sre::Or(a, b) | Sre::And(a, b) | Sre::Concat(a, b) => {
            let op = match s {
                Sre::Or(..) => " | ",
                Sre::And(..) => " & ",
                _ => " . ",
            };
            fmt_sre(a, p, f)?;
            write!(f, "{op}")?;
            fmt_sre(b, p, f)?;
        }
        Sre::Diff(a, b) => {
            fmt_sre(a, p, f)?;
            write!(f, " \\ ")?;
            fmt_sre(b, p + 1, f)?;
        }
        Sre::Star(a) => {
            fmt_sre(a, 6, f)?;
            write!(f, "*")?;
        }
    }
    if p < ctx {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Sre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_sre(self, 0, f)
    }
}

/// All concrete events over `alphabet` with payloads drawn from `domain`.
pub fn enumerate_events(alphabet: &Alphabet, domain: &Domain) -> Vec<Event> {
    let mut out = Vec::new();
    for (op, sig) in alphabet {
        let mut payloads: Vec<Vec<Const>> = vec![vec![]];
        for s in sig.args.iter().chain([&sig.ret]) {
            let vals = domain.values(s);
            payloads = payloads
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v.clone());
                        q
                    })
                })
                .collect();
        }
        for mut p in payloads {
            let ret = p.pop().unwrap();
            out.push(Event { op: op.clone(), args: p, ret, ghost: sig.ghost });
        }
    }
    out
}

/// Sorts of an alphabet's operations as used by qualifier sort checks.
pub fn sort_of_op(alphabet: &Alphabet, op: &str) -> Option<Sort> {
    alphabet.get(op).map(|s| s.sort())
}

#[cfg(test)]
mod tests;
