//! Qualifiers over unit, bool and linear integer terms, valuations, and a
//! bounded-domain satisfiability oracle.

mod solver;

pub use solver::{BruteForce, FiniteDomain, SatOracle, SatResult};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Name of the distinguished value variable of refinement types.
pub const NU: &str = "nu";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("sort error: {0}")]
    Sort(String),
    #[error("unsupported theory: {0}")]
    UnsupportedTheory(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Unit,
    Bool,
    Int,
    Arrow(Box<Sort>, Box<Sort>),
}

impl Sort {
    pub fn arrow(from: Sort, to: Sort) -> Sort {
        Sort::Arrow(Box::new(from), Box::new(to))
    }

    pub fn is_base(&self) -> bool {
        !matches!(self, Sort::Arrow(..))
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Unit => write!(f, "unit"),
            Sort::Bool => write!(f, "bool"),
            Sort::Int => write!(f, "int"),
            Sort::Arrow(a, b) if a.is_base() => write!(f, "{a} -> {b}"),
            Sort::Arrow(a, b) => write!(f, "({a}) -> {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Const {
    Unit,
    Bool(bool),
    Int(i64),
}

impl Const {
    pub fn sort(&self) -> Sort {
        match self {
            Const::Unit => Sort::Unit,
            Const::Bool(_) => Sort::Bool,
            Const::Int(_) => Sort::Int,
        }
    }

    /// Integer encoding used by the solver: unit is 0, booleans are 0/1.
    pub fn as_int(&self) -> i64 {
        match self {
            Const::Unit => 0,
            Const::Bool(b) => *b as i64,
            Const::Int(i) => *i,
        }
    }

    pub fn from_int(sort: &Sort, v: i64) -> Const {
        match sort {
            Sort::Unit => Const::Unit,
            Sort::Bool => Const::Bool(v != 0),
            _ => Const::Int(v),
        }
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Unit => write!(f, "()"),
            Const::Bool(b) => write!(f, "{b}"),
            Const::Int(i) => write!(f, "{i}"),
        }
    }
}

/// Inclusive integer range that quantifiers and the solver range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Domain {
    pub lo: i64,
    pub hi: i64,
}

impl Domain {
    pub fn new(lo: i64, hi: i64) -> Self {
        assert!(lo <= hi, "empty domain {lo}..{hi}");
        Domain { lo, hi }
    }

    pub fn values(&self, sort: &Sort) -> Vec<Const> {
        match sort {
            Sort::Unit => vec![Const::Unit],
            Sort::Bool => vec![Const::Bool(false), Const::Bool(true)],
            _ => (self.lo..=self.hi).map(Const::Int).collect(),
        }
    }

    pub fn bounds(&self, sort: &Sort) -> (i64, i64) {
        match sort {
            Sort::Unit => (0, 0),
            Sort::Bool => (0, 1),
            _ => (self.lo, self.hi),
        }
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain { lo: -8, hi: 8 }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

pub type Valuation = BTreeMap<String, Const>;
pub type SortEnv = BTreeMap<String, Sort>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(Const),
    Var(String),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn int(i: i64) -> Term {
        Term::Const(Const::Int(i))
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::Sub(Box::new(a), Box::new(b))
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Term::Const(_) => false,
            Term::Var(v) => v == name,
            Term::Add(a, b) | Term::Sub(a, b) => a.mentions(name) || b.mentions(name),
        }
    }

    pub fn subst(&self, name: &str, by: &Term) -> Term {
        match self {
            Term::Var(v) if v == name => by.clone(),
            Term::Const(_) | Term::Var(_) => self.clone(),
            Term::Add(a, b) => Term::add(a.subst(name, by), b.subst(name, by)),
            Term::Sub(a, b) => Term::sub(a.subst(name, by), b.subst(name, by)),
        }
    }

    pub fn eval(&self, sigma: &Valuation) -> Result<Const, LogicError> {
        match self {
            Term::Const(c) => Ok(c.clone()),
            Term::Var(v) => sigma
                .get(v)
                .cloned()
                .ok_or_else(|| LogicError::Sort(format!("unbound variable `{v}`"))),
            Term::Add(a, b) | Term::Sub(a, b) => {
                let (x, y) = (a.eval(sigma)?, b.eval(sigma)?);
                match (x, y) {
                    (Const::Int(x), Const::Int(y)) => Ok(Const::Int(if matches!(self, Term::Add(..)) {
                        x + y
                    } else {
                        x - y
                    })),
                    _ => Err(LogicError::Sort(format!("arithmetic on non-int in `{self}`"))),
                }
            }
        }
    }

    pub fn simplify(&self) -> Term {
        match self {
            Term::Add(a, b) | Term::Sub(a, b) => {
                let is_add = matches!(self, Term::Add(..));
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Term::Const(Const::Int(x)), Term::Const(Const::Int(y))) => {
                        Term::int(if is_add { x + y } else { x - y })
                    }
                    (_, Term::Const(Const::Int(0))) => a,
                    (Term::Const(Const::Int(0)), _) if is_add => b,
                    _ if is_add => Term::add(a, b),
                    _ => Term::sub(a, b),
                }
            }
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => write!(f, "{v}"),
            Term::Add(a, b) => {
                write!(f, "{a} + ")?;
                fmt_rhs(b, f)
            }
            Term::Sub(a, b) => {
                write!(f, "{a} - ")?;
                fmt_rhs(b, f)
            }
        }
    }
}

fn fmt_rhs(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match t {
        Term::Add(..) | Term::Sub(..) => write!(f, "({t})"),
        _ => write!(f, "{t}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Qualifier {
    True,
    False,
    /// A bool-sorted term used as a formula.
    Atom(Term),
    Eq(Term, Term),
    Lt(Term, Term),
    Le(Term, Term),
    Not(Box<Qualifier>),
    And(Vec<Qualifier>),
    Or(Vec<Qualifier>),
    Implies(Box<Qualifier>, Box<Qualifier>),
    Forall(String, Sort, Box<Qualifier>),
    Exists(String, Sort, Box<Qualifier>),
}

impl Qualifier {
    pub fn eq(a: Term, b: Term) -> Self {
        Qualifier::Eq(a, b)
    }

    pub fn lt(a: Term, b: Term) -> Self {
        Qualifier::Lt(a, b)
    }

    pub fn le(a: Term, b: Term) -> Self {
        Qualifier::Le(a, b)
    }

    pub fn not(q: Qualifier) -> Self {
        Qualifier::Not(Box::new(q))
    }

    pub fn implies(a: Qualifier, b: Qualifier) -> Self {
        Qualifier::Implies(Box::new(a), Box::new(b))
    }

    /// Conjunction that flattens nested conjunctions and drops `true`.
    pub fn and(parts: impl IntoIterator<Item = Qualifier>) -> Self {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Qualifier::True => {}
                Qualifier::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Qualifier::True,
            1 => out.pop().unwrap(),
            _ => Qualifier::And(out),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Qualifier>) -> Self {
        let mut out = Vec::new();
        for p in parts {
            match p {
                Qualifier::False => {}
                Qualifier::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Qualifier::False,
            1 => out.pop().unwrap(),
            _ => Qualifier::Or(out),
        }
    }

    pub fn exists(vars: &[(String, Sort)], body: Qualifier) -> Self {
        vars.iter()
            .rev()
            .fold(body, |acc, (v, s)| Qualifier::Exists(v.clone(), s.clone(), Box::new(acc)))
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Qualifier::True)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let add_term = |t: &Term, bound: &Vec<String>, out: &mut BTreeSet<String>| {
            let mut vs = BTreeSet::new();
            t.collect_vars(&mut vs);
            for v in vs {
                if !bound.contains(&v) {
                    out.insert(v);
                }
            }
        };
        match self {
            Qualifier::True | Qualifier::False => {}
            Qualifier::Atom(t) => add_term(t, bound, out),
            Qualifier::Eq(a, b) | Qualifier::Lt(a, b) | Qualifier::Le(a, b) => {
                add_term(a, bound, out);
                add_term(b, bound, out);
            }
            Qualifier::Not(q) => q.collect_free(bound, out),
            Qualifier::And(qs) | Qualifier::Or(qs) => {
                for q in qs {
                    q.collect_free(bound, out);
                }
            }
            Qualifier::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Qualifier::Forall(x, _, q) | Qualifier::Exists(x, _, q) => {
                bound.push(x.clone());
                q.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.free_vars().contains(name)
    }

    /// Capture-avoiding substitution of a term for a free variable.
    pub fn subst(&self, name: &str, by: &Term) -> Qualifier {
        let mut by_vars = BTreeSet::new();
        by.collect_vars(&mut by_vars);
        self.subst_inner(name, by, &by_vars)
    }

    fn subst_inner(&self, name: &str, by: &Term, by_vars: &BTreeSet<String>) -> Qualifier {
        match self {
            Qualifier::True | Qualifier::False => self.clone(),
            Qualifier::Atom(t) => Qualifier::Atom(t.subst(name, by)),
            Qualifier::Eq(a, b) => Qualifier::Eq(a.subst(name, by), b.subst(name, by)),
            Qualifier::Lt(a, b) => Qualifier::Lt(a.subst(name, by), b.subst(name, by)),
            Qualifier::Le(a, b) => Qualifier::Le(a.subst(name, by), b.subst(name, by)),
            Qualifier::Not(q) => Qualifier::not(q.subst_inner(name, by, by_vars)),
            Qualifier::And(qs) => Qualifier::And(qs.iter().map(|q| q.subst_inner(name, by, by_vars)).collect()),
            Qualifier::Or(qs) => Qualifier::Or(qs.iter().map(|q| q.subst_inner(name, by, by_vars)).collect()),
            Qualifier::Implies(a, b) => {
                Qualifier::implies(a.subst_inner(name, by, by_vars), b.subst_inner(name, by, by_vars))
            }
            Qualifier::Forall(x, s, q) | Qualifier::Exists(x, s, q) => {
                let rebuild = |x: String, q: Qualifier| match self {
                    Qualifier::Forall(..) => Qualifier::Forall(x, s.clone(), Box::new(q)),
                    _ => Qualifier::Exists(x, s.clone(), Box::new(q)),
                };
                if x == name {
                    return self.clone();
                }
                if by_vars.contains(x) && q.mentions(name) {
                    let mut taken = q.free_vars();
                    taken.extend(by_vars.iter().cloned());
                    taken.insert(name.to_string());
                    let fresh = fresh_variant(x, &taken);
                    let renamed = q.subst(x, &Term::Var(fresh.clone()));
                    return rebuild(fresh, renamed.subst_inner(name, by, by_vars));
                }
                rebuild(x.clone(), q.subst_inner(name, by, by_vars))
            }
        }
    }

    pub fn subst_const(&self, name: &str, c: &Const) -> Qualifier {
        self.subst(name, &Term::Const(c.clone()))
    }

    pub fn subst_valuation(&self, sigma: &Valuation) -> Qualifier {
        sigma.iter().fold(self.clone(), |q, (v, c)| q.subst_const(v, c))
    }

    /// Simultaneous renaming of free variables.
    pub fn rename(&self, map: &BTreeMap<String, String>) -> Qualifier {
        if map.is_empty() {
            return self.clone();
        }
        // Route through placeholders so that swaps do not interfere.
        let mut q = self.clone();
        let mut stage = Vec::new();
        for (i, (from, to)) in map.iter().enumerate() {
            let tmp = format!("#r{i}");
            q = q.subst(from, &Term::Var(tmp.clone()));
            stage.push((tmp, to.clone()));
        }
        for (tmp, to) in stage {
            q = q.subst(&tmp, &Term::Var(to));
        }
        q
    }

    /// Ground evaluation; quantifiers range over `domain`.
    pub fn eval(&self, sigma: &Valuation, domain: &Domain) -> Result<bool, LogicError> {
        match self {
            Qualifier::True => Ok(true),
            Qualifier::False => Ok(false),
            Qualifier::Atom(t) => match t.eval(sigma)? {
                Const::Bool(b) => Ok(b),
                other => Err(LogicError::Sort(format!("expected bool, found `{other}`"))),
            },
            Qualifier::Eq(a, b) => {
                let (x, y) = (a.eval(sigma)?, b.eval(sigma)?);
                if x.sort() != y.sort() {
                    return Err(LogicError::Sort(format!("`{x}` and `{y}` compared at different sorts")));
                }
                Ok(x == y)
            }
            Qualifier::Lt(a, b) | Qualifier::Le(a, b) => match (a.eval(sigma)?, b.eval(sigma)?) {
                (Const::Int(x), Const::Int(y)) => Ok(if matches!(self, Qualifier::Lt(..)) { x < y } else { x <= y }),
                (x, y) => Err(LogicError::Sort(format!("ordering on non-int `{x}`, `{y}`"))),
            },
            Qualifier::Not(q) => Ok(!q.eval(sigma, domain)?),
            Qualifier::And(qs) => {
                for q in qs {
                    if !q.eval(sigma, domain)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Qualifier::Or(qs) => {
                for q in qs {
                    if q.eval(sigma, domain)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Qualifier::Implies(a, b) => Ok(!a.eval(sigma, domain)? || b.eval(sigma, domain)?),
            Qualifier::Forall(x, s, q) | Qualifier::Exists(x, s, q) => {
                let universal = matches!(self, Qualifier::Forall(..));
                let mut inner = sigma.clone();
                for c in domain.values(s) {
                    inner.insert(x.clone(), c);
                    if q.eval(&inner, domain)? != universal {
                        return Ok(!universal);
                    }
                }
                Ok(universal)
            }
        }
    }

    /// Constant folding and flattening; preserves meaning.
    pub fn simplify(&self) -> Qualifier {
        match self {
            Qualifier::True | Qualifier::False => self.clone(),
            Qualifier::Atom(t) => match t.simplify() {
                Term::Const(Const::Bool(b)) => bool_q(b),
                t => Qualifier::Atom(t),
            },
            Qualifier::Eq(a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Term::Const(x), Term::Const(y)) => bool_q(x == y),
                    _ if a == b => Qualifier::True,
                    _ => Qualifier::Eq(a, b),
                }
            }
            Qualifier::Lt(a, b) | Qualifier::Le(a, b) => {
                let strict = matches!(self, Qualifier::Lt(..));
                let (a, b) = (a.simplify(), b.simplify());
                match (&a, &b) {
                    (Term::Const(Const::Int(x)), Term::Const(Const::Int(y))) => {
                        bool_q(if strict { x < y } else { x <= y })
                    }
                    _ if a == b => bool_q(!strict),
                    _ if strict => Qualifier::Lt(a, b),
                    _ => Qualifier::Le(a, b),
                }
            }
            Qualifier::Not(q) => match q.simplify() {
                Qualifier::True => Qualifier::False,
                Qualifier::False => Qualifier::True,
                Qualifier::Not(inner) => *inner,
                q => Qualifier::not(q),
            },
            Qualifier::And(qs) => {
                let mut out: Vec<Qualifier> = Vec::new();
                for q in qs {
                    match q.simplify() {
                        Qualifier::False => return Qualifier::False,
                        Qualifier::True => {}
                        Qualifier::And(inner) => {
                            for i in inner {
                                if !out.contains(&i) {
                                    out.push(i);
                                }
                            }
                        }
                        q => {
                            if !out.contains(&q) {
                                out.push(q)
                            }
                        }
                    }
                }
                Qualifier::and(out)
            }
            Qualifier::Or(qs) => {
                let mut out: Vec<Qualifier> = Vec::new();
                for q in qs {
                    match q.simplify() {
                        Qualifier::True => return Qualifier::True,
                        Qualifier::False => {}
                        Qualifier::Or(inner) => {
                            for i in inner {
                                if !out.contains(&i) {
                                    out.push(i);
                                }
                            }
                        }
                        q => {
                            if !out.contains(&q) {
                                out.push(q)
                            }
                        }
                    }
                }
                Qualifier::or(out)
            }
            Qualifier::Implies(a, b) => match (a.simplify(), b.simplify()) {
                (Qualifier::False, _) | (_, Qualifier::True) => Qualifier::True,
                (Qualifier::True, b) => b,
                (a, Qualifier::False) => Qualifier::not(a).simplify(),
                (a, b) => Qualifier::implies(a, b),
            },
            Qualifier::Forall(x, s, q) | Qualifier::Exists(x, s, q) => {
                let body = q.simplify();
                if !body.mentions(x) {
                    return body;
                }
                match self {
                    Qualifier::Forall(..) => Qualifier::Forall(x.clone(), s.clone(), Box::new(body)),
                    _ => Qualifier::Exists(x.clone(), s.clone(), Box::new(body)),
                }
            }
        }
    }

    /// Top-level conjuncts.
    pub fn conjuncts(&self) -> Vec<Qualifier> {
        match self {
            Qualifier::True => vec![],
            Qualifier::And(qs) => qs.iter().flat_map(|q| q.conjuncts()).collect(),
            q => vec![q.clone()],
        }
    }

    /// Infers sorts of free variables not fixed by `env`, adding them to `env`.
    /// Unconstrained variables default to `int`.
    pub fn infer_sorts(&self, env: &mut SortEnv) -> Result<(), LogicError> {
        loop {
            let mut changed = false;
            self.infer_pass(&BTreeMap::new(), env, &mut changed)?;
            if !changed {
                break;
            }
        }
        for v in self.free_vars() {
            env.entry(v).or_insert(Sort::Int);
        }
        self.check_sorts(&BTreeMap::new(), env)
    }

    fn infer_pass(
        &self,
        bound: &BTreeMap<String, Sort>,
        env: &mut SortEnv,
        changed: &mut bool,
    ) -> Result<(), LogicError> {
        let mut fix = |t: &Term, s: Sort, env: &mut SortEnv| {
            if let Term::Var(v) = t {
                if !bound.contains_key(v) && !env.contains_key(v) {
                    env.insert(v.clone(), s);
                    *changed = true;
                }
            }
        };
        match self {
            Qualifier::True | Qualifier::False => {}
            Qualifier::Atom(t) => fix(t, Sort::Bool, env),
            Qualifier::Eq(a, b) => {
                let sa = term_sort(a, bound, env);
                let sb = term_sort(b, bound, env);
                match (sa, sb) {
                    (Some(s), None) => fix(b, s, env),
                    (None, Some(s)) => fix(a, s, env),
                    _ => {}
                }
            }
            Qualifier::Lt(a, b) | Qualifier::Le(a, b) => {
                for t in [a, b] {
                    let mut vs = BTreeSet::new();
                    t.collect_vars(&mut vs);
                    for v in vs {
                        fix(&Term::Var(v), Sort::Int, env);
                    }
                }
            }
            Qualifier::Not(q) => q.infer_pass(bound, env, changed)?,
            Qualifier::And(qs) | Qualifier::Or(qs) => {
                for q in qs {
                    q.infer_pass(bound, env, changed)?;
                }
            }
            Qualifier::Implies(a, b) => {
                a.infer_pass(bound, env, changed)?;
                b.infer_pass(bound, env, changed)?;
            }
            Qualifier::Forall(x, s, q) | Qualifier::Exists(x, s, q) => {
                let mut inner = bound.clone();
                inner.insert(x.clone(), s.clone());
                q.infer_pass(&inner, env, changed)?;
            }
        }
        // Arithmetic operands are integers wherever they appear.
        if let Qualifier::Eq(a, b) = self {
            for t in [a, b] {
                if matches!(t, Term::Add(..) | Term::Sub(..)) {
                    let mut vs = BTreeSet::new();
                    t.collect_vars(&mut vs);
                    for v in vs {
                        if !bound.contains_key(&v) && !env.contains_key(&v) {
                            env.insert(v, Sort::Int);
                            *changed = true;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks well-sortedness against a complete environment.
    pub fn check_sorts(&self, bound: &BTreeMap<String, Sort>, env: &SortEnv) -> Result<(), LogicError> {
        let sort_of = |t: &Term| -> Result<Sort, LogicError> { checked_term_sort(t, bound, env) };
        match self {
            Qualifier::True | Qualifier::False => Ok(()),
            Qualifier::Atom(t) => match sort_of(t)? {
                Sort::Bool => Ok(()),
                s => Err(LogicError::Sort(format!("`{t}` used as a formula but has sort {s}"))),
            },
            Qualifier::Eq(a, b) => {
                let (sa, sb) = (sort_of(a)?, sort_of(b)?);
                if sa != sb || !sa.is_base() {
                    return Err(LogicError::Sort(format!("`{a} == {b}` compares {sa} with {sb}")));
                }
                Ok(())
            }
            Qualifier::Lt(a, b) | Qualifier::Le(a, b) => {
                for t in [a, b] {
                    let s = sort_of(t)?;
                    if s != Sort::Int {
                        return Err(LogicError::Sort(format!("`{t}` ordered but has sort {s}")));
                    }
                }
                Ok(())
            }
            Qualifier::Not(q) => q.check_sorts(bound, env),
            Qualifier::And(qs) | Qualifier::Or(qs) => qs.iter().try_for_each(|q| q.check_sorts(bound, env)),
            Qualifier::Implies(a, b) => {
                a.check_sorts(bound, env)?;
                b.check_sorts(bound, env)
            }
            Qualifier::Forall(x, s, q) | Qualifier::Exists(x, s, q) => {
                if !s.is_base() {
                    return Err(LogicError::Sort(format!("quantifier over non-base sort {s}")));
                }
                let mut inner = bound.clone();
                inner.insert(x.clone(), s.clone());
                q.check_sorts(&inner, env)
            }
        }
    }
}

fn bool_q(b: bool) -> Qualifier {
    if b {
        Qualifier::True
    } else {
        Qualifier::False
    }
}

fn term_sort(t: &Term, bound: &BTreeMap<String, Sort>, env: &SortEnv) -> Option<Sort> {
    match t {
        Term::Const(c) => Some(c.sort()),
        Term::Var(v) => bound.get(v).or_else(|| env.get(v)).cloned(),
        Term::Add(..) | Term::Sub(..) => Some(Sort::Int),
    }
}

fn checked_term_sort(t: &Term, bound: &BTreeMap<String, Sort>, env: &SortEnv) -> Result<Sort, LogicError> {
    match t {
        Term::Const(c) => Ok(c.sort()),
        Term::Var(v) => bound
            .get(v)
            .or_else(|| env.get(v))
            .cloned()
            .ok_or_else(|| LogicError::Sort(format!("unbound variable `{v}`"))),
        Term::Add(a, b) | Term::Sub(a, b) => {
            for x in [a, b] {
                let s = checked_term_sort(x, bound, env)?;
                if s != Sort::Int {
                    return Err(LogicError::Sort(format!("`{x}` in arithmetic has sort {s}")));
                }
            }
            Ok(Sort::Int)
        }
    }
}

/// `base`, `base1`, `base2`, ... : the first variant not in `taken`.
pub fn fresh_variant(base: &str, taken: &BTreeSet<String>) -> String {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
    let stem = if stem.is_empty() { "v" } else { stem };
    (1..)
        .map(|i| format!("{stem}{i}"))
        .find(|n| !taken.contains(n))
        .unwrap()
}

impl fmt::Display for Qualifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_qual(self, 0, f)
    }
}

// Precedence: 1 implies (right assoc), 2 or, 3 and, 4 not, 5 atoms.
fn prec(q: &Qualifier) -> u8 {
    match q {
        Qualifier::Forall(..) | Qualifier::Exists(..) => 0,
        Qualifier::Implies(..) => 1,
        Qualifier::Or(_) => 2,
        Qualifier::And(_) => 3,
        Qualifier::Not(inner) if matches!(**inner, Qualifier::Eq(..)) => 5,
        Qualifier::Not(_) => 4,
        _ => 5,
    }
}

fn fmt_qual(q: &Qualifier, ctx: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(q);
    let paren = p < ctx;
    if paren {
        write!(f, "(")?;
    }
    match q {
        Qualifier::True => write!(f, "true")?,
        Qualifier::False => write!(f, "false")?,
        Qualifier::Atom(t) => write!(f, "{t}")?,
        Qualifier::Eq(a, b) => write!(f, "{a} == {b}")?,
        Qualifier::Lt(a, b) => write!(f, "{a} < {b}")?,
        Qualifier::Le(a, b) => write!(f, "{a} <= {b}")?,
        Qualifier::Not(inner) => match &**inner {
            Qualifier::Eq(a, b) => write!(f, "{a} != {b}")?,
            other => {
                write!(f, "!")?;
                fmt_qual(other, 5, f)?;
            }
        },
        Qualifier::And(qs) | Qualifier::Or(qs) => {
            let sep = if matches!(q, Qualifier::And(_)) { " && " } else { " || " };
            for (i, x) in qs.iter().enumerate() {
                if i > 0 {
                    write!(f, "{sep}")?;
                }
                fmt_qual(x, p + 1, f)?;
            }
        }
        Qualifier::Implies(a, b) => {
            fmt_qual(a, 2, f)?;
            write!(f, " => ")?;
            fmt_qual(b, 1, f)?;
        }
        Qualifier::Forall(x, s, body) | Qualifier::Exists(x, s, body) => {
            let kw = if matches!(q, Qualifier::Forall(..)) { "forall" } else { "exists" };
            write!(f, "{kw} {x}:{s}. ")?;
            fmt_qual(body, 0, f)?;
        }
    }
    if paren {
        write!(f, ")")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Qualifier {
        s.parse().unwrap()
    }

    fn val(pairs: &[(&str, i64)]) -> Valuation {
        pairs.iter().map(|(k, v)| (k.to_string(), Const::Int(*v))).collect()
    }

    #[test]
    fn eval_examples() {
        let d = Domain::default();
        assert!(Qualifier::True.eval(&Valuation::new(), &d).unwrap());
        assert!(!q("nu == 3 && 5 < nu").eval(&val(&[("nu", 3)]), &d).unwrap());
        assert!(q("y < x && 0 <= y").eval(&val(&[("x", 1), ("y", 0)]), &d).unwrap());
    }

    #[test]
    fn eval_unbound_is_sort_error() {
        let err = q("x == 1").eval(&Valuation::new(), &Domain::default()).unwrap_err();
        assert!(matches!(err, LogicError::Sort(_)));
    }

    #[test]
    fn eval_sort_mismatch() {
        let mut s = Valuation::new();
        s.insert("b".into(), Const::Bool(true));
        assert!(q("b < 3").eval(&s, &Domain::default()).is_err());
    }

    #[test]
    fn forall_expands_over_domain() {
        let d = Domain::new(0, 3);
        assert!(q("forall z:int. z <= 3").eval(&Valuation::new(), &d).unwrap());
        assert!(!q("forall z:int. z < 3").eval(&Valuation::new(), &d).unwrap());
        assert!(q("exists z:int. z == 3 && x < z").eval(&val(&[("x", 2)]), &d).unwrap());
    }

    #[test]
    fn substitution_avoids_capture() {
        let phi = q("exists y:int. x < y");
        let out = phi.subst("x", &Term::var("y"));
        assert!(out.free_vars().contains("y"));
        let d = Domain::new(0, 3);
        assert!(out.eval(&val(&[("y", 2)]), &d).unwrap());
        assert!(!out.eval(&val(&[("y", 3)]), &d).unwrap());
    }

    #[test]
    fn rename_swaps() {
        let phi = q("a < b");
        let map: BTreeMap<_, _> = [("a".to_string(), "b".to_string()), ("b".to_string(), "a".to_string())].into();
        assert_eq!(phi.rename(&map), q("b < a"));
    }

    #[test]
    fn simplify_folds_constants() {
        assert_eq!(q("a == 1 - 0 && b == x && 0 < 1 - 0").simplify(), q("a == 1 && b == x"));
        assert_eq!(q("!(1 == 1) || x == x").simplify(), Qualifier::True);
        assert_eq!(q("a == 0 + 1").simplify(), q("a == 1"));
    }

    #[test]
    fn infer_sorts_defaults_and_propagates() {
        let mut env = SortEnv::new();
        q("b && x == y + 1 && c == b").infer_sorts(&mut env).unwrap();
        assert_eq!(env["b"], Sort::Bool);
        assert_eq!(env["c"], Sort::Bool);
        assert_eq!(env["x"], Sort::Int);
        let mut env = SortEnv::new();
        assert!(q("b && b < 1").infer_sorts(&mut env).is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "x < y && (a == 1 || b != 2)",
            "!(x <= y) => z == x - (y - 1)",
            "forall z:int. z < x || x <= z",
            "exists r:int. r == x && true",
            "(a => b) => c",
        ] {
            let phi = q(s);
            assert_eq!(phi.to_string().parse::<Qualifier>().unwrap(), phi, "{s}");
        }
    }
}
