//! Refinement types, trace types and the checks the synthesizer relies on.

mod realize;

pub use realize::realizable_event;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::logic::{Const, LogicError, Qualifier, SatOracle, Sort, SortEnv, Term, Valuation, NU};
use crate::sre::{includes, is_empty, NormConfig, SfaEnv, Sre, SreError};
use crate::trace::{Alphabet, OpSig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("ill-formed type ({rule}): {msg}")]
    WellFormedness { rule: &'static str, msg: String },
    #[error("erasures differ: {0} vs {1}")]
    ErasureMismatch(Sort, Sort),
    #[error("history specialization rejected: {0}")]
    SpecializationRejected(&'static str),
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error(transparent)]
    Sre(#[from] SreError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

fn wf(rule: &'static str, msg: impl Into<String>) -> TypeError {
    TypeError::WellFormedness { rule, msg: msg.into() }
}

/// Pure refinement types, trace types and intersections in one tree.
/// Typing contexts only ever hold the pure fragment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ty {
    /// `{b | phi}` with `nu` bound in `phi`.
    Base { sort: Sort, qual: Qualifier },
    /// `x:t -> body`.
    Arrow { param: String, param_ty: Box<Ty>, body: Box<Ty> },
    /// `x:b ~> body`: ghost variable, instantiated by subtyping.
    GhostVar { name: String, sort: Sort, body: Box<Ty> },
    /// `~op:s ~> body`: ghost operation in scope of `body`.
    GhostOp { op: String, sort: Sort, body: Box<Ty> },
    /// `[H] x:t [F]`; `ret` scopes over both regexes.
    Hoare { history: Sre, ret: String, ret_ty: Box<Ty>, future: Sre },
    Inter(Vec<Ty>),
}

impl Ty {
    pub fn base(sort: Sort, qual: Qualifier) -> Ty {
        Ty::Base { sort, qual }
    }

    pub fn top(sort: Sort) -> Ty {
        Ty::Base { sort, qual: Qualifier::True }
    }

    pub fn hoare(history: Sre, ret: impl Into<String>, ret_ty: Ty, future: Sre) -> Ty {
        Ty::Hoare { history, ret: ret.into(), ret_ty: Box::new(ret_ty), future }
    }

    pub fn arrow(param: impl Into<String>, param_ty: Ty, body: Ty) -> Ty {
        Ty::Arrow { param: param.into(), param_ty: Box::new(param_ty), body: Box::new(body) }
    }

    pub fn ghost(name: impl Into<String>, sort: Sort, body: Ty) -> Ty {
        Ty::GhostVar { name: name.into(), sort, body: Box::new(body) }
    }

    pub fn erase(&self) -> Sort {
        match self {
            Ty::Base { sort, .. } => sort.clone(),
            Ty::Arrow { param_ty, body, .. } => Sort::arrow(param_ty.erase(), body.erase()),
            Ty::GhostVar { body, .. } | Ty::GhostOp { body, .. } => body.erase(),
            Ty::Hoare { ret_ty, .. } => ret_ty.erase(),
            Ty::Inter(ts) => ts.first().map(|t| t.erase()).unwrap_or(Sort::Unit),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, Ty::Base { .. } | Ty::Arrow { .. } | Ty::GhostVar { .. } | Ty::GhostOp { .. })
    }

    /// The qualifier of a base type with `nu` replaced by `x`.
    pub fn qual_for(&self, x: &str) -> Option<Qualifier> {
        match self {
            Ty::Base { qual, .. } => Some(qual.subst(NU, &Term::var(x))),
            _ => None,
        }
    }

    pub fn subst(&self, name: &str, by: &Term) -> Ty {
        match self {
            Ty::Base { sort, qual } => {
                let qual = if name == NU { qual.clone() } else { qual.subst(name, by) };
                Ty::Base { sort: sort.clone(), qual }
            }
            Ty::Arrow { param, param_ty, body } => Ty::Arrow {
                param: param.clone(),
                param_ty: Box::new(param_ty.subst(name, by)),
                body: Box::new(if param == name { (**body).clone() } else { body.subst(name, by) }),
            },
            Ty::GhostVar { name: g, sort, body } => Ty::GhostVar {
                name: g.clone(),
                sort: sort.clone(),
                body: Box::new(if g == name { (**body).clone() } else { body.subst(name, by) }),
            },
            Ty::GhostOp { op, sort, body } => {
                Ty::GhostOp { op: op.clone(), sort: sort.clone(), body: Box::new(body.subst(name, by)) }
            }
            Ty::Hoare { history, ret, ret_ty, future } => {
                if ret == name {
                    self.clone()
                } else {
                    Ty::Hoare {
                        history: history.subst(name, by),
                        ret: ret.clone(),
                        ret_ty: Box::new(ret_ty.subst(name, by)),
                        future: future.subst(name, by),
                    }
                }
            }
            Ty::Inter(ts) => Ty::Inter(ts.iter().map(|t| t.subst(name, by)).collect()),
        }
    }

    /// Renames a binder occurring at the top of this type (ghost, parameter
    /// or return) and its uses.
    pub fn rename_binder(&self, from: &str, to: &str) -> Ty {
        let v = Term::var(to);
        match self {
            Ty::Arrow { param, param_ty, body } if param == from => {
                Ty::Arrow { param: to.into(), param_ty: param_ty.clone(), body: Box::new(body.subst(from, &v)) }
            }
            Ty::GhostVar { name, sort, body } if name == from => {
                Ty::GhostVar { name: to.into(), sort: sort.clone(), body: Box::new(body.subst(from, &v)) }
            }
            Ty::Hoare { history, ret, ret_ty, future } if ret == from => Ty::Hoare {
                history: history.subst(from, &v),
                ret: to.into(),
                ret_ty: ret_ty.clone(),
                future: future.subst(from, &v),
            },
            _ => self.clone(),
        }
    }

    /// Constant folding in every qualifier.
    pub fn simplify(&self) -> Ty {
        match self {
            Ty::Base { sort, qual } => Ty::Base { sort: sort.clone(), qual: qual.simplify() },
            Ty::Arrow { param, param_ty, body } => {
                Ty::Arrow { param: param.clone(), param_ty: Box::new(param_ty.simplify()), body: Box::new(body.simplify()) }
            }
            Ty::GhostVar { name, sort, body } => {
                Ty::GhostVar { name: name.clone(), sort: sort.clone(), body: Box::new(body.simplify()) }
            }
            Ty::GhostOp { op, sort, body } => {
                Ty::GhostOp { op: op.clone(), sort: sort.clone(), body: Box::new(body.simplify()) }
            }
            Ty::Hoare { history, ret, ret_ty, future } => Ty::Hoare {
                history: history.simplify_quals(),
                ret: ret.clone(),
                ret_ty: Box::new(ret_ty.simplify()),
                future: future.simplify_quals(),
            },
            Ty::Inter(ts) => Ty::Inter(ts.iter().map(|t| t.simplify()).collect()),
        }
    }

    /// Alpha-normal form for structural comparison.
    pub fn canonical(&self) -> Ty {
        match self {
            Ty::Base { .. } => self.simplify(),
            Ty::Arrow { param, param_ty, body } => Ty::Arrow {
                param: param.clone(),
                param_ty: Box::new(param_ty.canonical()),
                body: Box::new(body.canonical()),
            },
            Ty::GhostVar { name, sort, body } => {
                Ty::GhostVar { name: name.clone(), sort: sort.clone(), body: Box::new(body.canonical()) }
            }
            Ty::GhostOp { op, sort, body } => {
                Ty::GhostOp { op: op.clone(), sort: sort.clone(), body: Box::new(body.canonical()) }
            }
            Ty::Hoare { history, ret, ret_ty, future } => Ty::Hoare {
                history: history.simplify_quals().canonical(),
                ret: ret.clone(),
                ret_ty: Box::new(ret_ty.canonical()),
                future: future.simplify_quals().canonical(),
            },
            Ty::Inter(ts) => Ty::Inter(ts.iter().map(|t| t.canonical()).collect()),
        }
    }

    /// Ghost variables bound at the top of the type, outermost first.
    pub fn ghost_prefix(&self) -> Vec<(String, Sort)> {
        let mut out = vec![];
        let mut t = self;
        while let Ty::GhostVar { name, sort, body } = t {
            out.push((name.clone(), sort.clone()));
            t = body;
        }
        out
    }

    /// SubG: substitutes constants for a prefix of the top-level ghost
    /// variables and strips their binders.
    pub fn instantiate_ghost(&self, bindings: &Valuation) -> Ty {
        match self {
            Ty::GhostVar { name, body, .. } if bindings.contains_key(name) => {
                body.subst(name, &Term::Const(bindings[name].clone())).instantiate_ghost(bindings)
            }
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Base { sort, qual } if qual.is_true() => write!(f, "{sort}"),
            Ty::Base { sort, qual } => write!(f, "{{{sort} | {qual}}}"),
            Ty::Arrow { param, param_ty, body } => {
                if matches!(**param_ty, Ty::Base { .. }) {
                    write!(f, "{param}:{param_ty} -> {}", Body(body))
                } else {
                    write!(f, "{param}:({param_ty}) -> {}", Body(body))
                }
            }
            Ty::GhostVar { name, sort, body } => write!(f, "{name}:{sort} ~> {}", Body(body)),
            Ty::GhostOp { op, sort, body } => write!(f, "~{op}:{sort} ~> {}", Body(body)),
            Ty::Hoare { history, ret, ret_ty, future } => {
                if ret == NU {
                    write!(f, "[{history}] {ret_ty} [{future}]")
                } else {
                    write!(f, "[{history}] {ret}:{ret_ty} [{future}]")
                }
            }
            Ty::Inter(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " /\\ ")?;
                    }
                    if matches!(t, Ty::Inter(_) | Ty::GhostVar { .. } | Ty::GhostOp { .. } | Ty::Arrow { .. }) {
                        write!(f, "({t})")?;
                    } else {
                        write!(f, "{t}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

struct Body<'a>(&'a Ty);

impl fmt::Display for Body<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Ty::Inter(_) => write!(f, "({})", self.0),
            t => write!(f, "{t}"),
        }
    }
}

/// Ordered variable bindings to pure types.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TypeContext {
    pub bindings: Vec<(String, Ty)>,
}

impl TypeContext {
    pub fn new() -> Self {
        TypeContext::default()
    }

    pub fn push(&mut self, name: impl Into<String>, ty: Ty) {
        self.bindings.push((name.into(), ty));
    }

    pub fn with(&self, name: impl Into<String>, ty: Ty) -> TypeContext {
        let mut c = self.clone();
        c.push(name, ty);
        c
    }

    pub fn get(&self, name: &str) -> Option<&Ty> {
        self.bindings.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.bindings.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Base-type refinements with `nu` instantiated by the bound name.
    pub fn qualifiers(&self) -> Vec<Qualifier> {
        self.bindings
            .iter()
            .filter_map(|(n, t)| t.qual_for(n))
            .filter(|q| !q.is_true())
            .collect()
    }

    pub fn sorts(&self) -> SortEnv {
        self.bindings
            .iter()
            .filter(|(_, t)| matches!(t, Ty::Base { .. }))
            .map(|(n, t)| (n.clone(), t.erase()))
            .collect()
    }

    /// An automata environment carrying this context.
    pub fn sfa<'a>(&self, alphabet: &'a Alphabet, oracle: &'a dyn SatOracle, cfg: NormConfig) -> SfaEnv<'a> {
        SfaEnv::new(alphabet, oracle).with_ctx(self.qualifiers(), self.sorts()).with_cfg(cfg)
    }
}

impl fmt::Display for TypeContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match t {
                Ty::Base { .. } => write!(f, "{n}:{t}")?,
                _ => write!(f, "{n}:({t})")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Pure,
    Effect,
    Ghost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpDecl {
    pub kind: OpKind,
    pub params: Vec<Sort>,
    pub ret: Sort,
    pub sig: Option<Ty>,
}

impl OpDecl {
    pub fn op_sig(&self) -> OpSig {
        OpSig::new(self.params.clone(), self.ret.clone(), self.kind == OpKind::Ghost)
    }
}

/// Operator context: declared operations with their signatures.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperatorContext {
    pub ops: BTreeMap<String, OpDecl>,
}

impl OperatorContext {
    pub fn new() -> Self {
        OperatorContext::default()
    }

    pub fn get(&self, op: &str) -> Result<&OpDecl, TypeError> {
        self.ops.get(op).ok_or_else(|| TypeError::UnknownOp(op.to_string()))
    }

    pub fn signature(&self, op: &str) -> Result<&Ty, TypeError> {
        self.get(op)?.sig.as_ref().ok_or_else(|| TypeError::UnknownOp(format!("{op} (no signature)")))
    }

    /// Effectful and ghost operations as a trace alphabet.
    pub fn alphabet(&self) -> Alphabet {
        self.ops.iter().filter(|(_, d)| d.kind != OpKind::Pure).map(|(n, d)| (n.clone(), d.op_sig())).collect()
    }

    pub fn effect_ops(&self) -> Vec<&str> {
        self.ops.iter().filter(|(_, d)| d.kind == OpKind::Effect).map(|(n, _)| n.as_str()).collect()
    }
}

/// Shared state for the algorithmic checks.
pub struct Checker<'a> {
    pub delta: &'a OperatorContext,
    pub alphabet: Alphabet,
    pub oracle: &'a dyn SatOracle,
    pub cfg: NormConfig,
}

impl<'a> Checker<'a> {
    pub fn new(delta: &'a OperatorContext, oracle: &'a dyn SatOracle) -> Self {
        Checker { delta, alphabet: delta.alphabet(), oracle, cfg: NormConfig::default() }
    }

    pub fn sfa(&self, ctx: &TypeContext) -> SfaEnv<'_> {
        ctx.sfa(&self.alphabet, self.oracle, self.cfg)
    }

    pub fn well_formed(&self, ctx: &TypeContext, t: &Ty) -> Result<(), TypeError> {
        match t {
            Ty::Base { sort, qual } => {
                if !sort.is_base() {
                    return Err(wf("WfPBase", format!("{sort} is not a base sort")));
                }
                let mut env = ctx.sorts();
                env.insert(NU.into(), sort.clone());
                qual.check_sorts(&BTreeMap::new(), &env).map_err(|e| wf("WfPBase", e.to_string()))
            }
            Ty::Arrow { param, param_ty, body } => {
                self.well_formed(ctx, param_ty).map_err(|e| relabel(e, "WfPArr"))?;
                self.well_formed(&ctx.with(param.clone(), (**param_ty).clone()), body)
            }
            Ty::GhostVar { name, sort, body } => {
                if !sort.is_base() {
                    return Err(wf("WfGArr", format!("ghost `{name}` must have a base sort")));
                }
                self.well_formed(&ctx.with(name.clone(), Ty::top(sort.clone())), body)
            }
            Ty::GhostOp { op, body, .. } => {
                if !self.alphabet.get(op).map_or(false, |s| s.ghost) {
                    return Err(wf("WfGEvent", format!("`{op}` is not a declared ghost operation")));
                }
                self.well_formed(ctx, body)
            }
            Ty::Hoare { history, ret, ret_ty, future } => {
                if !matches!(**ret_ty, Ty::Base { .. }) {
                    return Err(wf("WfHF", "return type must be a base refinement"));
                }
                self.well_formed(ctx, ret_ty)?;
                let inner = ctx.with(ret.clone(), (**ret_ty).clone());
                let env = inner.sorts();
                history.check(&self.alphabet, &env).map_err(|e| wf("WfHF", e.to_string()))?;
                future.check(&self.alphabet, &env).map_err(|e| wf("WfHF", e.to_string()))?;
                if is_empty(&self.sfa(&inner), history)? {
                    return Err(wf("WfHF", "history regex is empty"));
                }
                Ok(())
            }
            Ty::Inter(ts) => {
                let Some(first) = ts.first() else {
                    return Err(wf("WFInter", "empty intersection"));
                };
                let e = first.erase();
                for t in ts {
                    if t.erase() != e {
                        return Err(wf("WFInter", format!("components erase to {} and {}", e, t.erase())));
                    }
                    self.well_formed(ctx, t)?;
                }
                Ok(())
            }
        }
    }

    /// Underapproximate pure subtyping: `{b|p1} <: {b|p2}` iff `p2` entails `p1`.
    pub fn sub_pure(&self, ctx: &TypeContext, t1: &Ty, t2: &Ty) -> Result<bool, TypeError> {
        let (e1, e2) = (t1.erase(), t2.erase());
        if e1 != e2 {
            return Err(TypeError::ErasureMismatch(e1, e2));
        }
        match (t1, t2) {
            (Ty::Base { sort, qual: q1 }, Ty::Base { qual: q2, .. }) => {
                let mut env = ctx.sorts();
                env.insert(NU.into(), sort.clone());
                let mut hyp = ctx.qualifiers();
                hyp.push(q2.clone());
                Ok(self.oracle.entails_sorted(&hyp, q1, &env)?)
            }
            (Ty::Arrow { param: x1, param_ty: p1, body: b1 }, Ty::Arrow { param: x2, param_ty: p2, body: b2 }) => {
                if !self.sub_pure(ctx, p2, p1)? {
                    return Ok(false);
                }
                let b1 = if x1 != x2 { b1.subst(x1, &Term::var(x2)) } else { (**b1).clone() };
                self.sub(&ctx.with(x2.clone(), (**p2).clone()), &b1, b2)
            }
            (Ty::GhostVar { name, sort, body }, _) => {
                self.sub(&ctx.with(name.clone(), Ty::top(sort.clone())), body, t2)
            }
            (_, Ty::GhostVar { name, sort, body }) => {
                self.sub(&ctx.with(name.clone(), Ty::top(sort.clone())), t1, body)
            }
            _ => Ok(t1 == t2),
        }
    }

    /// Subtyping over any pair of types.
    pub fn sub(&self, ctx: &TypeContext, t1: &Ty, t2: &Ty) -> Result<bool, TypeError> {
        match (t1, t2) {
            (Ty::Hoare { .. } | Ty::Inter(_), _) | (_, Ty::Hoare { .. } | Ty::Inter(_)) => self.sub_uhat(ctx, t1, t2),
            _ => self.sub_pure(ctx, t1, t2),
        }
    }

    /// SubHF together with the intersection rules.
    pub fn sub_uhat(&self, ctx: &TypeContext, t1: &Ty, t2: &Ty) -> Result<bool, TypeError> {
        if let Ty::Inter(ts) = t2 {
            for t in ts {
                if !self.sub_uhat(ctx, t1, t)? {
                    return Ok(false);
                }
            }
            return Ok(true);
        }
        if let Ty::Inter(ts) = t1 {
            for t in ts {
                if self.sub_uhat(ctx, t, t2)? {
                    return Ok(true);
                }
            }
            return Ok(false);
        }
        match (t1, t2) {
            (
                Ty::Hoare { history: h1, ret: x1, ret_ty: r1, future: f1 },
                Ty::Hoare { history: h2, ret: x2, ret_ty: r2, future: f2 },
            ) => {
                if !self.sub_pure(ctx, r1, r2)? {
                    return Ok(false);
                }
                let (h2, f2) = if x1 != x2 {
                    let v = Term::var(x1);
                    (h2.subst(x2, &v), f2.subst(x2, &v))
                } else {
                    (h2.clone(), f2.clone())
                };
                let inner = ctx.with(x1.clone(), (**r1).clone());
                let sfa = self.sfa(&inner);
                Ok(includes(&sfa, &f2, f1)? && includes(&sfa, h1, &h2)?)
            }
            _ => self.sub_pure(ctx, t1, t2),
        }
    }

    /// TOpHis: replace the history by a non-empty sub-language of it.
    pub fn specialize_history(&self, ctx: &TypeContext, sig: &Ty, h_new: &Sre) -> Result<Ty, TypeError> {
        let Ty::Hoare { history, ret, ret_ty, future } = sig else {
            return Err(wf("WfHF", "specialization needs a trace type"));
        };
        let inner = ctx.with(ret.clone(), (**ret_ty).clone());
        let sfa = self.sfa(&inner);
        if is_empty(&sfa, h_new)? {
            return Err(TypeError::SpecializationRejected("new history is empty"));
        }
        if !includes(&sfa, h_new, history)? {
            return Err(TypeError::SpecializationRejected("new history is not included in the signature's"));
        }
        Ok(Ty::Hoare { history: h_new.clone(), ret: ret.clone(), ret_ty: ret_ty.clone(), future: future.clone() })
    }

    /// Checked SubG: instantiate ghosts and require the result to be well formed.
    pub fn instantiate_ghost(&self, ctx: &TypeContext, sig: &Ty, bindings: &Valuation) -> Result<Ty, TypeError> {
        let t = sig.instantiate_ghost(bindings).simplify();
        let mut probe = ctx.clone();
        let mut cur = &t;
        loop {
            match cur {
                Ty::Arrow { param, param_ty, body } => {
                    self.well_formed(&probe, param_ty)?;
                    probe.push(param.clone(), (**param_ty).clone());
                    cur = body;
                }
                Ty::GhostVar { name, sort, body } => {
                    probe.push(name.clone(), Ty::top(sort.clone()));
                    cur = body;
                }
                other => {
                    self.well_formed(&probe, other)?;
                    break;
                }
            }
        }
        Ok(t)
    }
}

fn relabel(e: TypeError, rule: &'static str) -> TypeError {
    match e {
        TypeError::WellFormedness { msg, .. } => TypeError::WellFormedness { rule, msg },
        other => other,
    }
}

/// Constants for every ghost variable, enumerated in the oracle's domain.
pub fn ghost_valuations(ghosts: &[(String, Sort)], oracle: &dyn SatOracle) -> Vec<Valuation> {
    let d = oracle.domain();
    let mut out: Vec<Valuation> = vec![Valuation::new()];
    for (g, s) in ghosts {
        let vals: Vec<Const> = d.values(s);
        out = out
            .into_iter()
            .flat_map(|v| {
                vals.iter().map(move |c| {
                    let mut w = v.clone();
                    w.insert(g.clone(), c.clone());
                    w
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests;
