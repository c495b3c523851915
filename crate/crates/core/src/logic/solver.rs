//! Bounded-domain satisfiability.
//!
//! `FiniteDomain` translates a qualifier to negation normal form over linear
//! atoms, skolemizes positive existentials, expands universals over the
//! domain, and searches with bounds propagation. `BruteForce` enumerates
//! valuations and is the reference the former is tested against.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use super::{Const, Domain, LogicError, Qualifier, Sort, SortEnv, Term, Valuation};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Valuation),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

pub trait SatOracle: Send + Sync {
    fn domain(&self) -> Domain;

    /// Lexicographically smallest witness (by variable name) or `Unsat`.
    /// Free variables missing from `sorts` get inferred sorts.
    fn sat_sorted(&self, phi: &Qualifier, ctx: &[Qualifier], sorts: &SortEnv) -> Result<SatResult, LogicError>;

    /// Satisfiability without witness construction.
    fn check_sorted(&self, phi: &Qualifier, ctx: &[Qualifier], sorts: &SortEnv) -> Result<bool, LogicError> {
        Ok(self.sat_sorted(phi, ctx, sorts)?.is_sat())
    }

    fn sat(&self, phi: &Qualifier, ctx: &[Qualifier]) -> Result<SatResult, LogicError> {
        self.sat_sorted(phi, ctx, &SortEnv::new())
    }

    fn entails(&self, hyp: &[Qualifier], concl: &Qualifier) -> Result<bool, LogicError> {
        self.entails_sorted(hyp, concl, &SortEnv::new())
    }

    fn entails_sorted(&self, hyp: &[Qualifier], concl: &Qualifier, sorts: &SortEnv) -> Result<bool, LogicError> {
        Ok(!self.check_sorted(&Qualifier::not(concl.clone()), hyp, sorts)?)
    }
}

fn prepare(phi: &Qualifier, ctx: &[Qualifier], sorts: &SortEnv) -> Result<(Qualifier, SortEnv), LogicError> {
    let whole = Qualifier::and(std::iter::once(phi.clone()).chain(ctx.iter().cloned()));
    let mut env: SortEnv = sorts.clone();
    let free = whole.free_vars();
    env.retain(|k, _| free.contains(k));
    whole.infer_sorts(&mut env)?;
    Ok((whole, env))
}

/// Exhaustive enumeration in lexicographic order.
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub domain: Domain,
}

impl BruteForce {
    pub fn new(domain: Domain) -> Self {
        BruteForce { domain }
    }
}

impl SatOracle for BruteForce {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn sat_sorted(&self, phi: &Qualifier, ctx: &[Qualifier], sorts: &SortEnv) -> Result<SatResult, LogicError> {
        let (whole, env) = prepare(phi, ctx, sorts)?;
        let vars: Vec<(String, Sort)> = env.into_iter().collect();
        let mut sigma = Valuation::new();
        if enumerate(&whole, &vars, 0, &mut sigma, &self.domain)? {
            Ok(SatResult::Sat(sigma))
        } else {
            Ok(SatResult::Unsat)
        }
    }
}

fn enumerate(
    q: &Qualifier,
    vars: &[(String, Sort)],
    i: usize,
    sigma: &mut Valuation,
    domain: &Domain,
) -> Result<bool, LogicError> {
    if i == vars.len() {
        return q.eval(sigma, domain);
    }
    let (name, sort) = &vars[i];
    for c in domain.values(sort) {
        sigma.insert(name.clone(), c);
        if enumerate(q, vars, i + 1, sigma, domain)? {
            return Ok(true);
        }
    }
    sigma.remove(name);
    Ok(false)
}

type CheckKey = (Qualifier, Vec<Qualifier>, SortEnv);

/// Propagation-based search over the bounded domain. Satisfiability checks
/// are memoized; clones share the table.
#[derive(Debug, Clone)]
pub struct FiniteDomain {
    pub domain: Domain,
    memo: Arc<Mutex<HashMap<CheckKey, bool>>>,
}

impl FiniteDomain {
    pub fn new(domain: Domain) -> Self {
        FiniteDomain { domain, memo: Arc::default() }
    }
}

impl Default for FiniteDomain {
    fn default() -> Self {
        FiniteDomain::new(Domain::default())
    }
}

impl SatOracle for FiniteDomain {
    fn domain(&self) -> Domain {
        self.domain
    }

    fn sat_sorted(&self, phi: &Qualifier, ctx: &[Qualifier], sorts: &SortEnv) -> Result<SatResult, LogicError> {
        let (whole, env) = prepare(phi, ctx, sorts)?;
        let mut problem = Problem::new(&env, self.domain);
        let root = problem.translate(&whole, true, &BTreeMap::new())?;
        let mut dom = problem.initial_domains();
        if !search(&root, &mut dom.clone()) {
            return Ok(SatResult::Unsat);
        }
        // Fix the named variables one at a time to their smallest feasible value.
        for (idx, (name, _)) in problem.vars.iter().enumerate().take(problem.named) {
            let _ = name;
            let (mut lo, mut hi) = dom[idx];
            while lo < hi {
                let mid = lo + (hi - lo).div_euclid(2);
                let mut trial = dom.clone();
                trial[idx] = (trial[idx].0, mid);
                if search(&root, &mut trial) {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            dom[idx] = (lo, lo);
        }
        let sigma = problem.vars[..problem.named]
            .iter()
            .enumerate()
            .map(|(i, (n, s))| (n.clone(), Const::from_int(s, dom[i].0)))
            .collect();
        Ok(SatResult::Sat(sigma))
    }

    fn check_sorted(&self, phi: &Qualifier, ctx: &[Qualifier], sorts: &SortEnv) -> Result<bool, LogicError> {
        let key = (phi.clone(), ctx.to_vec(), sorts.clone());
        if let Some(&b) = self.memo.lock().unwrap().get(&key) {
            return Ok(b);
        }
        let (whole, env) = prepare(phi, ctx, sorts)?;
        let mut problem = Problem::new(&env, self.domain);
        let root = problem.translate(&whole, true, &BTreeMap::new())?;
        let mut dom = problem.initial_domains();
        let b = search(&root, &mut dom);
        self.memo.lock().unwrap().insert(key, b);
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rel {
    Eq,
    Ne,
    Le,
}

/// `sum(coeff * var) + k  rel  0`
#[derive(Debug, Clone)]
struct Atom {
    coeffs: Vec<(usize, i64)>,
    k: i64,
    rel: Rel,
}

#[derive(Debug, Clone)]
enum Node {
    True,
    False,
    Atom(Atom),
    And(Vec<Node>),
    Or(Vec<Node>),
}

struct Problem {
    vars: Vec<(String, Sort)>,
    /// Variables `0..named` are the formula's free variables, in name order;
    /// the rest are skolem constants.
    named: usize,
    domain: Domain,
}

type Lin = (BTreeMap<usize, i64>, i64);

impl Problem {
    fn new(env: &SortEnv, domain: Domain) -> Self {
        let vars: Vec<(String, Sort)> = env.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let named = vars.len();
        Problem { vars, named, domain }
    }

    fn initial_domains(&self) -> Vec<(i64, i64)> {
        self.vars.iter().map(|(_, s)| self.domain.bounds(s)).collect()
    }

    fn var_index(&self, name: &str, scope: &BTreeMap<String, usize>) -> Result<usize, LogicError> {
        if let Some(i) = scope.get(name) {
            return Ok(*i);
        }
        self.vars[..self.named]
            .binary_search_by(|(n, _)| n.as_str().cmp(name))
            .map_err(|_| LogicError::Sort(format!("unbound variable `{name}`")))
    }

    fn lin(&self, t: &Term, scope: &BTreeMap<String, usize>) -> Result<Lin, LogicError> {
        Ok(match t {
            Term::Const(c) => (BTreeMap::new(), c.as_int()),
            Term::Var(v) => {
                let i = self.var_index(v, scope)?;
                (BTreeMap::from([(i, 1)]), 0)
            }
            Term::Add(a, b) | Term::Sub(a, b) => {
                let sign = if matches!(t, Term::Add(..)) { 1 } else { -1 };
                let (mut ca, ka) = self.lin(a, scope)?;
                let (cb, kb) = self.lin(b, scope)?;
                for (i, c) in cb {
                    *ca.entry(i).or_insert(0) += sign * c;
                }
                ca.retain(|_, c| *c != 0);
                (ca, ka + sign * kb)
            }
        })
    }

    fn atom(&self, lin: Lin, rel: Rel) -> Node {
        let (coeffs, k) = lin;
        if coeffs.is_empty() {
            let truth = match rel {
                Rel::Eq => k == 0,
                Rel::Ne => k != 0,
                Rel::Le => k <= 0,
            };
            return if truth { Node::True } else { Node::False };
        }
        Node::Atom(Atom { coeffs: coeffs.into_iter().collect(), k, rel })
    }

    fn diff(&self, a: &Term, b: &Term, scope: &BTreeMap<String, usize>) -> Result<Lin, LogicError> {
        self.lin(&Term::sub(a.clone(), b.clone()), scope)
    }

    fn translate(
        &mut self,
        q: &Qualifier,
        pos: bool,
        scope: &BTreeMap<String, usize>,
    ) -> Result<Node, LogicError> {
        Ok(match q {
            Qualifier::True => {
                if pos {
                    Node::True
                } else {
                    Node::False
                }
            }
            Qualifier::False => {
                if pos {
                    Node::False
                } else {
                    Node::True
                }
            }
            Qualifier::Atom(t) => {
                let (c, k) = self.lin(t, scope)?;
                self.atom((c, k - if pos { 1 } else { 0 }), Rel::Eq)
            }
            Qualifier::Eq(a, b) => {
                let l = self.diff(a, b, scope)?;
                self.atom(l, if pos { Rel::Eq } else { Rel::Ne })
            }
            Qualifier::Lt(a, b) => {
                if pos {
                    let (c, k) = self.diff(a, b, scope)?;
                    self.atom((c, k + 1), Rel::Le)
                } else {
                    let l = self.diff(b, a, scope)?;
                    self.atom(l, Rel::Le)
                }
            }
            Qualifier::Le(a, b) => {
                if pos {
                    let l = self.diff(a, b, scope)?;
                    self.atom(l, Rel::Le)
                } else {
                    let (c, k) = self.diff(b, a, scope)?;
                    self.atom((c, k + 1), Rel::Le)
                }
            }
            Qualifier::Not(inner) => self.translate(inner, !pos, scope)?,
            Qualifier::And(qs) | Qualifier::Or(qs) => {
                let conj = matches!(q, Qualifier::And(_)) == pos;
                let kids = qs
                    .iter()
                    .map(|x| self.translate(x, pos, scope))
                    .collect::<Result<Vec<_>, _>>()?;
                if conj {
                    Node::And(kids)
                } else {
                    Node::Or(kids)
                }
            }
            Qualifier::Implies(a, b) => {
                let na = self.translate(a, !pos, scope)?;
                let nb = self.translate(b, pos, scope)?;
                if pos {
                    Node::Or(vec![na, nb])
                } else {
                    Node::And(vec![na, nb])
                }
            }
            Qualifier::Forall(x, s, body) | Qualifier::Exists(x, s, body) => {
                let existential = matches!(q, Qualifier::Exists(..)) == pos;
                if existential {
                    self.vars.push((format!("#sk{}", self.vars.len()), s.clone()));
                    let mut inner = scope.clone();
                    inner.insert(x.clone(), self.vars.len() - 1);
                    self.translate(body, pos, &inner)?
                } else {
                    let mut inner = scope.clone();
                    inner.remove(x);
                    let mut kids = Vec::new();
                    for c in self.domain.values(s) {
                        let inst = body.subst_const(x, &c);
                        kids.push(self.translate(&inst, pos, &inner)?);
                    }
                    Node::And(kids)
                }
            }
        })
    }
}

fn bounds(atom: &Atom, dom: &[(i64, i64)]) -> (i64, i64) {
    let (mut lo, mut hi) = (atom.k, atom.k);
    for &(i, c) in &atom.coeffs {
        let (a, b) = dom[i];
        if c > 0 {
            lo += c * a;
            hi += c * b;
        } else {
            lo += c * b;
            hi += c * a;
        }
    }
    (lo, hi)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Truth {
    True,
    False,
    Unknown,
}

fn atom_truth(atom: &Atom, dom: &[(i64, i64)]) -> Truth {
    let (lo, hi) = bounds(atom, dom);
    match atom.rel {
        Rel::Eq if lo == 0 && hi == 0 => Truth::True,
        Rel::Eq if lo > 0 || hi < 0 => Truth::False,
        Rel::Ne if lo == 0 && hi == 0 => Truth::False,
        Rel::Ne if lo > 0 || hi < 0 => Truth::True,
        Rel::Le if hi <= 0 => Truth::True,
        Rel::Le if lo > 0 => Truth::False,
        _ => Truth::Unknown,
    }
}

fn simplify(node: &Node, dom: &[(i64, i64)]) -> Node {
    match node {
        Node::True | Node::False => node.clone(),
        Node::Atom(a) => match atom_truth(a, dom) {
            Truth::True => Node::True,
            Truth::False => Node::False,
            Truth::Unknown => node.clone(),
        },
        Node::And(kids) => {
            let mut out = Vec::new();
            for k in kids {
                match simplify(k, dom) {
                    Node::False => return Node::False,
                    Node::True => {}
                    Node::And(inner) => out.extend(inner),
                    n => out.push(n),
                }
            }
            match out.len() {
                0 => Node::True,
                1 => out.pop().unwrap(),
                _ => Node::And(out),
            }
        }
        Node::Or(kids) => {
            let mut out = Vec::new();
            for k in kids {
                match simplify(k, dom) {
                    Node::True => return Node::True,
                    Node::False => {}
                    Node::Or(inner) => out.extend(inner),
                    n => out.push(n),
                }
            }
            match out.len() {
                0 => Node::False,
                1 => out.pop().unwrap(),
                _ => Node::Or(out),
            }
        }
    }
}

fn div_floor(a: i64, b: i64) -> i64 {
    let d = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        d - 1
    } else {
        d
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -div_floor(-a, b)
}

/// Tightens `dom` using `atom`; returns false on a wipe-out.
fn propagate_le(coeffs: &[(usize, i64)], k: i64, dom: &mut [(i64, i64)], changed: &mut bool) -> bool {
    // For each term: c*x <= -k - sum_{j != i} min(c_j x_j)
    let mins: Vec<i64> = coeffs
        .iter()
        .map(|&(i, c)| if c > 0 { c * dom[i].0 } else { c * dom[i].1 })
        .collect();
    let total: i64 = mins.iter().sum();
    for (pos, &(i, c)) in coeffs.iter().enumerate() {
        let rhs = -k - (total - mins[pos]);
        let (lo, hi) = dom[i];
        if c > 0 {
            let nh = div_floor(rhs, c);
            if nh < hi {
                dom[i].1 = nh;
                *changed = true;
            }
        } else {
            let nl = div_ceil(rhs, c);
            if nl > lo {
                dom[i].0 = nl;
                *changed = true;
            }
        }
        if dom[i].0 > dom[i].1 {
            return false;
        }
    }
    true
}

fn propagate(atom: &Atom, dom: &mut [(i64, i64)], changed: &mut bool) -> bool {
    match atom.rel {
        Rel::Le => propagate_le(&atom.coeffs, atom.k, dom, changed),
        Rel::Eq => {
            if !propagate_le(&atom.coeffs, atom.k, dom, changed) {
                return false;
            }
            let neg: Vec<(usize, i64)> = atom.coeffs.iter().map(|&(i, c)| (i, -c)).collect();
            propagate_le(&neg, -atom.k, dom, changed)
        }
        Rel::Ne => {
            let open: Vec<&(usize, i64)> = atom.coeffs.iter().filter(|(i, _)| dom[*i].0 != dom[*i].1).collect();
            if open.len() != 1 {
                return true;
            }
            let &(i, c) = open[0];
            let rest: i64 = atom.k
                + atom
                    .coeffs
                    .iter()
                    .filter(|(j, _)| *j != i)
                    .map(|&(j, cj)| cj * dom[j].0)
                    .sum::<i64>();
            if rest % c != 0 {
                return true;
            }
            let v = -rest / c;
            if dom[i].0 == v {
                dom[i].0 += 1;
                *changed = true;
            } else if dom[i].1 == v {
                dom[i].1 -= 1;
                *changed = true;
            }
            dom[i].0 <= dom[i].1
        }
    }
}

/// `x := sum(coeffs) + k` applied to every atom of `node`.
fn substitute(node: &Node, x: usize, coeffs: &[(usize, i64)], k: i64) -> Node {
    match node {
        Node::True | Node::False => node.clone(),
        Node::Atom(a) => {
            let Some(&(_, c)) = a.coeffs.iter().find(|(v, _)| *v == x) else { return node.clone() };
            let mut m: BTreeMap<usize, i64> = a.coeffs.iter().filter(|(v, _)| *v != x).copied().collect();
            for &(v, d) in coeffs {
                *m.entry(v).or_insert(0) += c * d;
            }
            m.retain(|_, c| *c != 0);
            let atom = Atom { coeffs: m.into_iter().collect(), k: a.k + c * k, rel: a.rel };
            if atom.coeffs.is_empty() {
                return if atom_truth(&atom, &[]) == Truth::True { Node::True } else { Node::False };
            }
            Node::Atom(atom)
        }
        Node::And(kids) => Node::And(kids.iter().map(|n| substitute(n, x, coeffs, k)).collect()),
        Node::Or(kids) => Node::Or(kids.iter().map(|n| substitute(n, x, coeffs, k)).collect()),
    }
}

/// A top-level equality with a unit coefficient on an open variable.
fn eliminable(cur: &Node, dom: &[(i64, i64)]) -> Option<(usize, Vec<(usize, i64)>, i64)> {
    let kids: &[Node] = match cur {
        Node::And(kids) => kids,
        n @ Node::Atom(_) => std::slice::from_ref(n),
        _ => return None,
    };
    for n in kids {
        let Node::Atom(a) = n else { continue };
        if a.rel != Rel::Eq || a.coeffs.len() < 2 {
            continue;
        }
        if let Some(&(x, c)) = a.coeffs.iter().find(|&&(v, c)| c.abs() == 1 && dom[v].0 < dom[v].1) {
            // c*x + rest + k == 0  =>  x = -c*(rest + k)
            let rest = a.coeffs.iter().filter(|(v, _)| *v != x).map(|&(v, d)| (v, -c * d)).collect();
            return Some((x, rest, -c * a.k));
        }
    }
    None
}

fn search(node: &Node, dom: &mut Vec<(i64, i64)>) -> bool {
    let mut cur = node.clone();
    loop {
        cur = simplify(&cur, dom);
        match cur {
            Node::True => return true,
            Node::False => return false,
            _ => {}
        }
        if let Some((x, rest, k)) = eliminable(&cur, dom) {
            // Keep x within its current bounds after it leaves the formula.
            let (lo, hi) = dom[x];
            let upper = Atom { coeffs: rest.clone(), k: k - hi, rel: Rel::Le };
            let lower = Atom { coeffs: rest.iter().map(|&(v, c)| (v, -c)).collect(), k: lo - k, rel: Rel::Le };
            cur = Node::And(vec![substitute(&cur, x, &rest, k), Node::Atom(upper), Node::Atom(lower)]);
            continue;
        }
        let mut changed = false;
        let units: Vec<&Atom> = match &cur {
            Node::Atom(a) => vec![a],
            Node::And(kids) => kids.iter().filter_map(|k| if let Node::Atom(a) = k { Some(a) } else { None }).collect(),
            _ => vec![],
        };
        for a in units {
            if !propagate(a, dom, &mut changed) {
                return false;
            }
        }
        if !changed {
            break;
        }
    }
    let kids: Vec<Node> = match &cur {
        Node::And(kids) => kids.clone(),
        other => vec![other.clone()],
    };
    // Branch on the narrowest disjunction.
    if let Some((pos, _)) = kids
        .iter()
        .enumerate()
        .filter_map(|(p, k)| if let Node::Or(ds) = k { Some((p, ds.len())) } else { None })
        .min_by_key(|&(_, n)| n)
    {
        let Node::Or(disjuncts) = &kids[pos] else { unreachable!() };
        for d in disjuncts {
            let mut next = kids.clone();
            next[pos] = d.clone();
            let mut trial = dom.clone();
            if search(&Node::And(next), &mut trial) {
                *dom = trial;
                return true;
            }
        }
        return false;
    }
    // Only undecided atoms remain: split the smallest open domain.
    let mut vars = BTreeSet::new();
    for k in &kids {
        if let Node::Atom(a) = k {
            for &(v, _) in &a.coeffs {
                if dom[v].0 < dom[v].1 {
                    vars.insert(v);
                }
            }
        }
    }
    let Some(&v) = vars.iter().min_by_key(|&&v| (dom[v].1 - dom[v].0, v)) else {
        return false;
    };
    let (lo, hi) = dom[v];
    let mid = lo + (hi - lo).div_euclid(2);
    for half in [(lo, mid), (mid + 1, hi)] {
        let mut trial = dom.clone();
        trial[v] = half;
        if search(&cur, &mut trial) {
            *dom = trial;
            return true;
        }
    }
    false
}
