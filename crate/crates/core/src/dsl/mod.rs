//! The generator language: terms, basic typing and a small-step interpreter.

mod interp;

pub use interp::{run, step, AssumeMode, EffectHandler, RunConfig, RunOutcome, StepError, SutFault};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::logic::{Const, Qualifier, Sort, SortEnv, Term};
use crate::types::OperatorContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PureOp {
    Add,
    Sub,
    Eq,
    Lt,
    Le,
}

impl PureOp {
    pub fn symbol(self) -> &'static str {
        match self {
            PureOp::Add => "+",
            PureOp::Sub => "-",
            PureOp::Eq => "==",
            PureOp::Lt => "<",
            PureOp::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Const),
    Var(String),
    Lam { param: String, sort: Sort, body: Box<Expr> },
    Fix { name: String, param: String, param_sort: Sort, ret_sort: Sort, body: Box<Expr> },
    /// Uniform choice among the branches.
    Choice(Vec<Expr>),
    App(Box<Expr>, Box<Expr>),
    PureOp(PureOp, Box<Expr>, Box<Expr>),
    EffOp(String, Vec<Expr>),
    /// `let x = e1 in e2`; the name `_` is `e1; e2`.
    Let(String, Box<Expr>, Box<Expr>),
    Assume(Qualifier),
    Assert(Qualifier),
    /// `assume x : s . phi in e`: bind `x` to some value satisfying `phi`.
    AssumeBind { var: String, sort: Sort, qual: Qualifier, body: Box<Expr> },
}

pub const UNIT: Expr = Expr::Const(Const::Unit);

impl Expr {
    pub fn var(x: impl Into<String>) -> Expr {
        Expr::Var(x.into())
    }

    pub fn int(i: i64) -> Expr {
        Expr::Const(Const::Int(i))
    }

    pub fn let_(x: impl Into<String>, e1: Expr, e2: Expr) -> Expr {
        Expr::Let(x.into(), Box::new(e1), Box::new(e2))
    }

    /// `e1; e2` with unit identities removed.
    pub fn seq(e1: Expr, e2: Expr) -> Expr {
        match (e1, e2) {
            (Expr::Const(Const::Unit), e) => e,
            (e1, e2) => Expr::Let("_".into(), Box::new(e1), Box::new(e2)),
        }
    }

    pub fn seq_all(parts: impl IntoIterator<Item = Expr>) -> Expr {
        let parts: Vec<Expr> = parts.into_iter().collect();
        parts.into_iter().rev().fold(None, |acc, e| Some(match acc { None => e, Some(rest) => Expr::seq(e, rest) }))
            .unwrap_or(UNIT)
    }

    pub fn choice(branches: Vec<Expr>) -> Expr {
        match branches.len() {
            0 => UNIT,
            1 => branches.into_iter().next().unwrap(),
            _ => Expr::Choice(branches),
        }
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Var(_) | Expr::Lam { .. } | Expr::Fix { .. })
    }

    /// Substitutes a closed value for a free variable.
    pub fn subst(&self, x: &str, v: &Expr) -> Expr {
        let q = |phi: &Qualifier| match v {
            Expr::Const(c) => phi.subst_const(x, c),
            Expr::Var(y) => phi.subst(x, &Term::var(y)),
            _ => phi.clone(),
        };
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(y) => {
                if y == x {
                    v.clone()
                } else {
                    self.clone()
                }
            }
            Expr::Lam { param, sort, body } => Expr::Lam {
                param: param.clone(),
                sort: sort.clone(),
                body: Box::new(if param == x { (**body).clone() } else { body.subst(x, v) }),
            },
            Expr::Fix { name, param, param_sort, ret_sort, body } => Expr::Fix {
                name: name.clone(),
                param: param.clone(),
                param_sort: param_sort.clone(),
                ret_sort: ret_sort.clone(),
                body: Box::new(if name == x || param == x { (**body).clone() } else { body.subst(x, v) }),
            },
            Expr::Choice(es) => Expr::Choice(es.iter().map(|e| e.subst(x, v)).collect()),
            Expr::App(a, b) => Expr::App(Box::new(a.subst(x, v)), Box::new(b.subst(x, v))),
            Expr::PureOp(op, a, b) => Expr::PureOp(*op, Box::new(a.subst(x, v)), Box::new(b.subst(x, v))),
            Expr::EffOp(op, args) => Expr::EffOp(op.clone(), args.iter().map(|e| e.subst(x, v)).collect()),
            Expr::Let(y, e1, e2) => Expr::Let(
                y.clone(),
                Box::new(e1.subst(x, v)),
                Box::new(if y == x { (**e2).clone() } else { e2.subst(x, v) }),
            ),
            Expr::Assume(phi) => Expr::Assume(q(phi)),
            Expr::Assert(phi) => Expr::Assert(q(phi)),
            Expr::AssumeBind { var, sort, qual, body } => {
                if var == x {
                    self.clone()
                } else {
                    Expr::AssumeBind { var: var.clone(), sort: sort.clone(), qual: q(qual), body: Box::new(body.subst(x, v)) }
                }
            }
        }
    }

    /// Operation names applied anywhere in the term.
    pub fn effect_ops(&self) -> Vec<String> {
        let mut out = vec![];
        self.walk(&mut |e| {
            if let Expr::EffOp(op, _) = e {
                if !out.contains(op) {
                    out.push(op.clone());
                }
            }
        });
        out
    }

    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Assume(_) | Expr::Assert(_) => {}
            Expr::Lam { body, .. } | Expr::Fix { body, .. } | Expr::AssumeBind { body, .. } => body.walk(f),
            Expr::Choice(es) | Expr::EffOp(_, es) => es.iter().for_each(|e| e.walk(f)),
            Expr::App(a, b) | Expr::PureOp(_, a, b) | Expr::Let(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }

    /// Free variables, including those of qualifiers.
    pub fn free_vars(&self) -> std::collections::BTreeSet<String> {
        use std::collections::BTreeSet;
        fn go(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            let add_q = |q: &Qualifier, bound: &Vec<String>, out: &mut BTreeSet<String>| {
                for v in q.free_vars() {
                    if !bound.contains(&v) {
                        out.insert(v);
                    }
                }
            };
            match e {
                Expr::Const(_) => {}
                Expr::Var(x) => {
                    if !bound.contains(x) {
                        out.insert(x.clone());
                    }
                }
                Expr::Lam { param, body, .. } => {
                    bound.push(param.clone());
                    go(body, bound, out);
                    bound.pop();
                }
                Expr::Fix { name, param, body, .. } => {
                    bound.push(name.clone());
                    bound.push(param.clone());
                    go(body, bound, out);
                    bound.pop();
                    bound.pop();
                }
                Expr::Choice(es) | Expr::EffOp(_, es) => es.iter().for_each(|e| go(e, bound, out)),
                Expr::App(a, b) | Expr::PureOp(_, a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                Expr::Let(x, a, b) => {
                    go(a, bound, out);
                    bound.push(x.clone());
                    go(b, bound, out);
                    bound.pop();
                }
                Expr::Assume(q) | Expr::Assert(q) => add_q(q, bound, out),
                Expr::AssumeBind { var, qual, body, .. } => {
                    bound.push(var.clone());
                    add_q(qual, bound, out);
                    go(body, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut vec![], &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("basic typing ({rule}): {msg}")]
pub struct BasicTypeError {
    pub rule: &'static str,
    pub msg: String,
}

fn bt(rule: &'static str, msg: impl Into<String>) -> BasicTypeError {
    BasicTypeError { rule, msg: msg.into() }
}

pub fn typecheck_basic(e: &Expr, env: &SortEnv, delta: &OperatorContext) -> Result<Sort, BasicTypeError> {
    match e {
        Expr::Const(c) => Ok(c.sort()),
        Expr::Var(x) => env.get(x).cloned().ok_or_else(|| bt("BtVar", format!("unbound variable `{x}`"))),
        Expr::Lam { param, sort, body } => {
            let mut inner = env.clone();
            inner.insert(param.clone(), sort.clone());
            Ok(Sort::arrow(sort.clone(), typecheck_basic(body, &inner, delta)?))
        }
        Expr::Fix { name, param, param_sort, ret_sort, body } => {
            let fs = Sort::arrow(param_sort.clone(), ret_sort.clone());
            let mut inner = env.clone();
            inner.insert(name.clone(), fs.clone());
            inner.insert(param.clone(), param_sort.clone());
            let got = typecheck_basic(body, &inner, delta)?;
            if got != *ret_sort {
                return Err(bt("BtFix", format!("body has sort {got}, expected {ret_sort}")));
            }
            Ok(fs)
        }
        Expr::Choice(es) => {
            let mut sort = None;
            for b in es {
                let s = typecheck_basic(b, env, delta)?;
                match &sort {
                    None => sort = Some(s),
                    Some(t) if *t != s => return Err(bt("BtChoice", format!("branches have sorts {t} and {s}"))),
                    _ => {}
                }
            }
            sort.ok_or_else(|| bt("BtChoice", "no branches"))
        }
        Expr::App(f, a) => match typecheck_basic(f, env, delta)? {
            Sort::Arrow(from, to) => {
                let got = typecheck_basic(a, env, delta)?;
                if got != *from {
                    return Err(bt("BtApp", format!("argument has sort {got}, expected {from}")));
                }
                Ok(*to)
            }
            s => Err(bt("BtApp", format!("applying a value of sort {s}"))),
        },
        Expr::PureOp(op, a, b) => {
            let (sa, sb) = (typecheck_basic(a, env, delta)?, typecheck_basic(b, env, delta)?);
            match op {
                PureOp::Add | PureOp::Sub | PureOp::Lt | PureOp::Le => {
                    if sa != Sort::Int || sb != Sort::Int {
                        return Err(bt("BtOpApp", format!("`{}` expects int operands", op.symbol())));
                    }
                    Ok(if matches!(op, PureOp::Add | PureOp::Sub) { Sort::Int } else { Sort::Bool })
                }
                PureOp::Eq => {
                    if sa != sb || !sa.is_base() {
                        return Err(bt("BtOpApp", format!("`==` on {sa} and {sb}")));
                    }
                    Ok(Sort::Bool)
                }
            }
        }
        Expr::EffOp(op, args) => {
            let decl = delta.get(op).map_err(|_| bt("BtEfOpApp", format!("unknown operation `{op}`")))?;
            let want: &[Sort] = &decl.params;
            let nullary = want.is_empty() && args.len() == 1 && matches!(args[0], Expr::Const(Const::Unit));
            if !nullary {
                if want.len() != args.len() {
                    return Err(bt("BtEfOpApp", format!("`{op}` takes {} arguments", want.len())));
                }
                for (a, s) in args.iter().zip(want) {
                    let got = typecheck_basic(a, env, delta)?;
                    if got != *s {
                        return Err(bt("BtEfOpApp", format!("`{op}` argument has sort {got}, expected {s}")));
                    }
                }
            }
            Ok(decl.ret.clone())
        }
        Expr::Let(x, e1, e2) => {
            let s1 = typecheck_basic(e1, env, delta)?;
            let mut inner = env.clone();
            if x != "_" {
                inner.insert(x.clone(), s1);
            }
            typecheck_basic(e2, &inner, delta)
        }
        Expr::Assume(q) => {
            q.check_sorts(&BTreeMap::new(), env).map_err(|e| bt("BtAssume", e.to_string()))?;
            Ok(Sort::Unit)
        }
        Expr::Assert(q) => {
            q.check_sorts(&BTreeMap::new(), env).map_err(|e| bt("BtAssert", e.to_string()))?;
            Ok(Sort::Unit)
        }
        Expr::AssumeBind { var, sort, qual, body } => {
            let mut inner = env.clone();
            inner.insert(var.clone(), sort.clone());
            qual.check_sorts(&BTreeMap::new(), &inner).map_err(|e| bt("BtAssume", e.to_string()))?;
            typecheck_basic(body, &inner, delta)
        }
    }
}

// Printing precedence: 1 sequence and binding forms, 2 choice, 4 operators, 5 atoms.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Let(..) | Expr::Lam { .. } | Expr::Fix { .. } | Expr::AssumeBind { .. } => 1,
        Expr::Choice(_) => 2,
        Expr::PureOp(..) | Expr::Assume(_) | Expr::Assert(_) => 4,
        _ => 5,
    }
}

fn fmt_expr(e: &Expr, ctx: u8, indent: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let paren = prec(e) < ctx;
    if paren {
        write!(f, "(")?;
    }
    let nl = |f: &mut fmt::Formatter<'_>, n: usize| write!(f, "\n{}", "  ".repeat(n));
    match e {
        Expr::Const(Const::Int(i)) if *i < 0 => write!(f, "{i}")?,
        Expr::Const(c) => write!(f, "{c}")?,
        Expr::Var(x) => write!(f, "{x}")?,
        Expr::Lam { param, sort, body } => {
            write!(f, "fun ({param}:{sort}) ->")?;
            nl(f, indent + 1)?;
            fmt_expr(body, 1, indent + 1, f)?;
        }
        Expr::Fix { name, param, param_sort, ret_sort, body } => {
            write!(f, "fix {name}({param}:{param_sort}) : {ret_sort} =")?;
            nl(f, indent + 1)?;
            fmt_expr(body, 1, indent + 1, f)?;
        }
        Expr::Choice(es) => {
            for (i, b) in es.iter().enumerate() {
                if i > 0 {
                    nl(f, indent)?;
                    write!(f, "(+) ")?;
                }
                fmt_expr(b, 3, indent + 1, f)?;
            }
        }
        Expr::App(a, b) => {
            fmt_expr(a, 5, indent, f)?;
            write!(f, "(")?;
            fmt_expr(b, 0, indent, f)?;
            write!(f, ")")?;
        }
        Expr::PureOp(op, a, b) => {
            fmt_expr(a, 5, indent, f)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(b, 5, indent, f)?;
        }
        Expr::EffOp(op, args) => {
            write!(f, "{op}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                fmt_expr(a, 0, indent, f)?;
            }
            write!(f, ")")?;
        }
        Expr::Let(x, e1, e2) => {
            if x == "_" {
                fmt_expr(e1, 2, indent, f)?;
                write!(f, ";")?;
            } else {
                write!(f, "let {x} = ")?;
                fmt_expr(e1, 1, indent + 1, f)?;
                write!(f, " in")?;
            }
            nl(f, indent)?;
            fmt_expr(e2, 1, indent, f)?;
        }
        Expr::Assume(q) => write!(f, "assume {q}")?,
        Expr::Assert(q) => write!(f, "assert {q}")?,
        Expr::AssumeBind { var, sort, qual, body } => {
            write!(f, "assume {var} : {sort} . {qual} in")?;
            nl(f, indent)?;
            fmt_expr(body, 1, indent, f)?;
        }
    }
    if paren {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, 0, 0, f)
    }
}

#[cfg(test)]
mod tests;
