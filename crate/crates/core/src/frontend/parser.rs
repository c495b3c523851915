use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{Spanned, Tok};
use super::ParseError;
use crate::dsl::{Expr, PureOp};
use crate::logic::{Const, Qualifier, Sort, Term, NU};
use crate::sre::{Sre, SymbolicEvent};
use crate::trace::Alphabet;
use crate::types::Ty;

pub struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    pub alphabet: Option<&'a Alphabet>,
    pub aliases: BTreeMap<String, Sort>,
    /// Set while parsing an event qualifier: `>` at paren depth 0 closes the event.
    event_depth: Option<usize>,
    /// Variables bound in the expression being parsed.
    scope: Vec<String>,
}

const KEYWORDS: &[&str] = &[
    "true", "false", "forall", "exists", "let", "in", "assume", "assert", "fun", "fix", "empty", "eps", "any", "LAST",
];

pub type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    pub fn new(toks: Vec<Spanned>, alphabet: Option<&'a Alphabet>) -> Self {
        Parser { toks, pos: 0, alphabet, aliases: BTreeMap::new(), event_depth: None, scope: vec![] }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn set_pos(&mut self, p: usize) {
        self.pos = p;
    }

    pub fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (l, c) = self.here();
        Err(ParseError::syntax(l, c, msg))
    }

    pub fn semantic<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (l, c) = self.here();
        Err(ParseError::semantic(l, c, msg))
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!("expected {}, found {}", t.describe(), self.peek().describe()))
        }
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", self.peek().describe()))
        }
    }

    pub fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", t.describe())),
        }
    }

    pub fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    pub fn finish(&self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.err(format!("unexpected {}", self.peek().describe()))
        }
    }

    // ---- sorts ----

    pub fn sort(&mut self) -> PResult<Sort> {
        let a = self.base_sort()?;
        if self.eat(&Tok::Arrow) {
            Ok(Sort::arrow(a, self.sort()?))
        } else {
            Ok(a)
        }
    }

    pub fn base_sort(&mut self) -> PResult<Sort> {
        if self.eat(&Tok::LParen) {
            let s = self.sort()?;
            self.expect(&Tok::RParen)?;
            return Ok(s);
        }
        let name = match self.peek().clone() {
            Tok::Ident(s) => s,
            t => return self.err(format!("expected a sort, found {}", t.describe())),
        };
        let s = match name.as_str() {
            "int" => Sort::Int,
            "bool" => Sort::Bool,
            "unit" => Sort::Unit,
            other => match self.aliases.get(other) {
                Some(s) => s.clone(),
                None => return self.semantic(format!("unknown sort `{other}`")),
            },
        };
        self.bump();
        Ok(s)
    }

    // ---- qualifiers ----

    pub fn qualifier(&mut self) -> PResult<Qualifier> {
        let lhs = self.q_or()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.qualifier()?;
            Ok(Qualifier::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn q_or(&mut self) -> PResult<Qualifier> {
        let mut parts = vec![self.q_and()?];
        while self.eat(&Tok::OrOr) {
            parts.push(self.q_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Qualifier::Or(parts) })
    }

    fn q_and(&mut self) -> PResult<Qualifier> {
        let mut parts = vec![self.q_unary()?];
        while self.eat(&Tok::AndAnd) {
            parts.push(self.q_unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Qualifier::And(parts) })
    }

    fn q_unary(&mut self) -> PResult<Qualifier> {
        if self.eat(&Tok::Bang) {
            return Ok(Qualifier::not(self.q_unary()?));
        }
        for kw in ["forall", "exists"] {
            if self.eat_kw(kw) {
                let x = self.ident()?;
                self.expect(&Tok::Colon)?;
                let s = self.base_sort()?;
                self.expect(&Tok::Dot)?;
                let body = self.qualifier()?;
                return Ok(if kw == "forall" {
                    Qualifier::Forall(x, s, Box::new(body))
                } else {
                    Qualifier::Exists(x, s, Box::new(body))
                });
            }
        }
        self.q_atom()
    }

    fn q_atom(&mut self) -> PResult<Qualifier> {
        if *self.peek() == Tok::LParen {
            let save = self.pos;
            if let Ok(q) = self.comparison() {
                return Ok(q);
            }
            self.pos = save;
            self.bump();
            let depth = self.event_depth.map(|d| d + 1);
            let old = std::mem::replace(&mut self.event_depth, depth);
            let q = self.qualifier();
            self.event_depth = old;
            let q = q?;
            self.expect(&Tok::RParen)?;
            return Ok(q);
        }
        self.comparison()
    }

    fn closes_event(&self) -> bool {
        self.event_depth == Some(0)
    }

    fn comparison(&mut self) -> PResult<Qualifier> {
        let a = self.term()?;
        let op = self.peek().clone();
        let q = match op {
            Tok::EqEq | Tok::Ne | Tok::Lt | Tok::Le => {
                self.bump();
                let b = self.term()?;
                match op {
                    Tok::EqEq => Qualifier::eq(a, b),
                    Tok::Ne => Qualifier::not(Qualifier::eq(a, b)),
                    Tok::Lt => Qualifier::lt(a, b),
                    _ => Qualifier::le(a, b),
                }
            }
            Tok::Gt | Tok::Ge if !self.closes_event() => {
                self.bump();
                let b = self.term()?;
                if op == Tok::Gt {
                    Qualifier::lt(b, a)
                } else {
                    Qualifier::le(b, a)
                }
            }
            _ => match a {
                Term::Const(Const::Bool(true)) => Qualifier::True,
                Term::Const(Const::Bool(false)) => Qualifier::False,
                Term::Var(_) => Qualifier::Atom(a),
                other => return self.err(format!("`{other}` is not a formula")),
            },
        };
        Ok(q)
    }

    pub fn term(&mut self) -> PResult<Term> {
        let mut t = self.term_atom()?;
        loop {
            if self.eat(&Tok::Plus) {
                t = Term::add(t, self.term_atom()?);
            } else if *self.peek() == Tok::Minus {
                self.bump();
                t = Term::sub(t, self.term_atom()?);
            } else {
                return Ok(t);
            }
        }
    }

    fn term_atom(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Term::int(i))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(i) => Ok(Term::int(-i)),
                    t => self.err(format!("expected integer after `-`, found {}", t.describe())),
                }
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Term::Const(Const::Bool(s == "true")))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) || s == NU => {
                self.bump();
                Ok(Term::Var(s))
            }
            Tok::LParen => {
                self.bump();
                if self.eat(&Tok::RParen) {
                    return Ok(Term::Const(Const::Unit));
                }
                let t = self.term()?;
                self.expect(&Tok::RParen)?;
                Ok(t)
            }
            t => self.err(format!("expected a term, found {}", t.describe())),
        }
    }

    // ---- symbolic regexes ----

    pub fn sre(&mut self) -> PResult<Sre> {
        let mut r = self.sre_and()?;
        while self.eat(&Tok::Bar) {
            r = Sre::Or(Box::new(r), Box::new(self.sre_and()?));
        }
        Ok(r)
    }

    fn sre_and(&mut self) -> PResult<Sre> {
        let mut r = self.sre_diff()?;
        while self.eat(&Tok::Amp) {
            r = Sre::And(Box::new(r), Box::new(self.sre_diff()?));
        }
        Ok(r)
    }

    fn sre_diff(&mut self) -> PResult<Sre> {
        let mut r = self.sre_concat()?;
        while self.eat(&Tok::Backslash) {
            r = Sre::Diff(Box::new(r), Box::new(self.sre_concat()?));
        }
        Ok(r)
    }

    fn sre_concat(&mut self) -> PResult<Sre> {
        let mut r = self.sre_postfix()?;
        while self.eat(&Tok::Dot) {
            r = Sre::Concat(Box::new(r), Box::new(self.sre_postfix()?));
        }
        Ok(r)
    }

    fn sre_postfix(&mut self) -> PResult<Sre> {
        let mut r = self.sre_atom()?;
        while self.eat(&Tok::Star) {
            r = Sre::Star(Box::new(r));
        }
        Ok(r)
    }

    fn sre_atom(&mut self) -> PResult<Sre> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "empty" => {
                self.bump();
                Ok(Sre::Empty)
            }
            Tok::Ident(s) if s == "eps" => {
                self.bump();
                Ok(Sre::Eps)
            }
            Tok::Ident(s) if s == "any" => {
                self.bump();
                Ok(Sre::Any)
            }
            Tok::Ident(s) if s == "LAST" => {
                self.bump();
                self.expect(&Tok::LParen)?;
                let ev = self.event()?;
                self.expect(&Tok::RParen)?;
                Ok(Sre::last(ev))
            }
            Tok::Lt => Ok(Sre::event(self.event()?)),
            Tok::LParen => {
                self.bump();
                let r = self.sre()?;
                self.expect(&Tok::RParen)?;
                Ok(r)
            }
            t => self.err(format!("expected a regex, found {}", t.describe())),
        }
    }

    /// `<~?op names | phi>` or `<~?op values>`.
    pub fn event(&mut self) -> PResult<SymbolicEvent> {
        self.expect(&Tok::Lt)?;
        let tilde = self.eat(&Tok::Tilde);
        let op = self.ident()?;
        let Some(alphabet) = self.alphabet else {
            return self.semantic("events need declared operations");
        };
        let Some(sig) = alphabet.get(&op).cloned() else {
            return self.semantic(format!("unknown operation `{op}`"));
        };
        if tilde && !sig.ghost {
            return self.semantic(format!("`{op}` is not a ghost operation"));
        }
        let k = sig.args.len();
        let named = self.event_has_bar();
        let ev = if named {
            let mut names = vec![];
            while !matches!(self.peek(), Tok::Bar) {
                names.push(match self.bump() {
                    Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) || s == NU => s,
                    t => return self.err(format!("expected a binder name, found {}", t.describe())),
                });
            }
            self.bump();
            if names.len() > k + 1 {
                return self.semantic(format!("`{op}` binds at most {} names", k + 1));
            }
            let mut args: Vec<String> = vec![];
            for i in 0..k {
                args.push(match names.get(i) {
                    Some(n) if n != "_" => n.clone(),
                    _ => format!("_{i}"),
                });
            }
            let ret = match names.get(k) {
                Some(n) if n != "_" => n.clone(),
                _ => "_r".to_string(),
            };
            let mut seen = BTreeSet::new();
            for n in args.iter().chain([&ret]) {
                if !seen.insert(n.clone()) {
                    return self.semantic(format!("binder `{n}` repeated in event"));
                }
            }
            let old = self.event_depth.replace(0);
            let q = self.qualifier();
            self.event_depth = old;
            SymbolicEvent { op, args, ret, qual: q?, ghost: sig.ghost }
        } else {
            let mut vals: Vec<Option<Term>> = vec![];
            while *self.peek() != Tok::Gt {
                if self.is_kw("_") {
                    self.bump();
                    vals.push(None);
                } else {
                    vals.push(Some(self.term_atom()?));
                }
            }
            if vals.len() > k + 1 {
                return self.semantic(format!("`{op}` takes {k} arguments and one result"));
            }
            let args: Vec<String> = (0..k).map(|i| format!("_{i}")).collect();
            let ret = "_r".to_string();
            let binders: Vec<&String> = args.iter().chain([&ret]).collect();
            let qual = Qualifier::and(
                vals.into_iter()
                    .zip(binders)
                    .filter_map(|(v, b)| v.map(|t| Qualifier::eq(Term::Var(b.clone()), t))),
            );
            SymbolicEvent { op, args, ret, qual, ghost: sig.ghost }
        };
        self.expect(&Tok::Gt)?;
        Ok(ev)
    }

    fn event_has_bar(&self) -> bool {
        let mut depth = 0usize;
        let mut k = self.pos;
        loop {
            match &self.toks[k].tok {
                Tok::LParen => depth += 1,
                Tok::RParen => depth = depth.saturating_sub(1),
                Tok::Bar if depth == 0 => return true,
                Tok::Gt if depth == 0 => return false,
                Tok::Eof => return false,
                _ => {}
            }
            k += 1;
        }
    }

    // ---- types ----

    pub fn ty(&mut self) -> PResult<Ty> {
        let mut parts = vec![self.ty_single()?];
        while self.eat(&Tok::Meet) {
            parts.push(self.ty_single()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Ty::Inter(parts) })
    }

    fn ty_single(&mut self) -> PResult<Ty> {
        match self.peek().clone() {
            Tok::LBracket => self.hoare(),
            Tok::Tilde => {
                self.bump();
                let op = self.ident()?;
                self.expect(&Tok::Colon)?;
                let s = self.sort()?;
                self.expect(&Tok::GhostArrow)?;
                Ok(Ty::GhostOp { op, sort: s, body: Box::new(self.ty_single()?) })
            }
            Tok::LParen => {
                self.bump();
                let t = self.ty()?;
                self.expect(&Tok::RParen)?;
                if self.eat(&Tok::Arrow) {
                    return Ok(Ty::arrow("_", t, self.ty_single()?));
                }
                Ok(t)
            }
            Tok::Ident(_) if *self.peek_at(1) == Tok::Colon => {
                let x = self.ident()?;
                self.bump();
                let t = self.base_ty()?;
                if self.eat(&Tok::GhostArrow) {
                    let Ty::Base { sort, qual } = t else { unreachable!() };
                    if !qual.is_true() {
                        return self.semantic("ghost variables range over unrefined sorts");
                    }
                    return Ok(Ty::ghost(x, sort, self.ty_single()?));
                }
                self.expect(&Tok::Arrow)?;
                Ok(Ty::arrow(x, t, self.ty_single()?))
            }
            _ => {
                let t = self.base_ty()?;
                if self.eat(&Tok::Arrow) {
                    return Ok(Ty::arrow("_", t, self.ty_single()?));
                }
                Ok(t)
            }
        }
    }

    /// `{b | phi}` or `b`.
    pub fn base_ty(&mut self) -> PResult<Ty> {
        if self.eat(&Tok::LBrace) {
            let s = self.base_sort()?;
            self.expect(&Tok::Bar)?;
            let q = self.qualifier()?;
            self.expect(&Tok::RBrace)?;
            Ok(Ty::base(s, q))
        } else {
            Ok(Ty::top(self.base_sort()?))
        }
    }

    /// `[H] x:t [F]` or `[H] t [F]`.
    pub fn hoare(&mut self) -> PResult<Ty> {
        self.expect(&Tok::LBracket)?;
        let h = self.sre()?;
        self.expect(&Tok::RBracket)?;
        let (ret, t) = if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon {
            let x = self.ident()?;
            self.bump();
            (x, self.base_ty()?)
        } else {
            (NU.to_string(), self.base_ty()?)
        };
        self.expect(&Tok::LBracket)?;
        let f = self.sre()?;
        self.expect(&Tok::RBracket)?;
        Ok(Ty::hoare(h, ret, t, f))
    }

    // ---- expressions ----

    pub fn expr(&mut self) -> PResult<Expr> {
        let first = self.e_choice()?;
        if self.eat(&Tok::Semi) {
            let rest = self.expr()?;
            Ok(Expr::Let("_".into(), Box::new(first), Box::new(rest)))
        } else {
            Ok(first)
        }
    }

    fn e_choice(&mut self) -> PResult<Expr> {
        let mut parts = vec![self.e_simple()?];
        while self.eat(&Tok::Choice) {
            parts.push(self.e_simple()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::Choice(parts) })
    }

    fn bound<T>(&mut self, names: &[String], f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let n = self.scope.len();
        self.scope.extend(names.iter().cloned());
        let r = f(self);
        self.scope.truncate(n);
        r
    }

    fn e_simple(&mut self) -> PResult<Expr> {
        if self.eat_kw("let") {
            let x = match self.peek().clone() {
                Tok::Ident(s) if s == "_" => {
                    self.bump();
                    s
                }
                _ => self.ident()?,
            };
            self.expect(&Tok::Assign)?;
            let e1 = self.expr()?;
            self.expect_kw("in")?;
            let e2 = self.bound(&[x.clone()], |p| p.expr())?;
            return Ok(Expr::Let(x, Box::new(e1), Box::new(e2)));
        }
        if self.eat_kw("assume") {
            if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon {
                let var = self.ident()?;
                self.bump();
                let sort = self.base_sort()?;
                self.expect(&Tok::Dot)?;
                let qual = self.qualifier()?;
                self.expect_kw("in")?;
                let body = self.bound(&[var.clone()], |p| p.expr())?;
                return Ok(Expr::AssumeBind { var, sort, qual, body: Box::new(body) });
            }
            return Ok(Expr::Assume(self.qualifier()?));
        }
        if self.eat_kw("assert") {
            return Ok(Expr::Assert(self.qualifier()?));
        }
        if self.eat_kw("fun") {
            self.expect(&Tok::LParen)?;
            let param = self.ident()?;
            self.expect(&Tok::Colon)?;
            let sort = self.sort()?;
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Arrow)?;
            let body = self.bound(&[param.clone()], |p| p.expr())?;
            return Ok(Expr::Lam { param, sort, body: Box::new(body) });
        }
        if self.eat_kw("fix") {
            let name = self.ident()?;
            self.expect(&Tok::LParen)?;
            let param = self.ident()?;
            self.expect(&Tok::Colon)?;
            let param_sort = self.sort()?;
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Colon)?;
            let ret_sort = self.sort()?;
            self.expect(&Tok::Assign)?;
            let body = self.bound(&[name.clone(), param.clone()], |p| p.expr())?;
            return Ok(Expr::Fix { name, param, param_sort, ret_sort, body: Box::new(body) });
        }
        let a = self.e_atom()?;
        let op = match self.peek() {
            Tok::Plus => PureOp::Add,
            Tok::Minus => PureOp::Sub,
            Tok::EqEq => PureOp::Eq,
            Tok::Lt => PureOp::Lt,
            Tok::Le => PureOp::Le,
            _ => return Ok(a),
        };
        self.bump();
        let b = self.e_atom()?;
        Ok(Expr::PureOp(op, Box::new(a), Box::new(b)))
    }

    fn e_atom(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::int(i))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(i) => Ok(Expr::int(-i)),
                    t => self.err(format!("expected integer after `-`, found {}", t.describe())),
                }
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Const(Const::Bool(s == "true")))
            }
            Tok::LParen => {
                self.bump();
                if self.eat(&Tok::RParen) {
                    return Ok(Expr::Const(Const::Unit));
                }
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                self.call_suffix(e)
            }
            Tok::Ident(_) => {
                let x = self.ident()?;
                if *self.peek() == Tok::LParen {
                    if self.scope.contains(&x) {
                        return self.call_suffix(Expr::Var(x));
                    }
                    self.bump();
                    let mut args = vec![];
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            self.expect(&Tok::Comma)?;
                        }
                    }
                    return Ok(Expr::EffOp(x, args));
                }
                Ok(Expr::Var(x))
            }
            t => self.err(format!("expected an expression, found {}", t.describe())),
        }
    }

    fn call_suffix(&mut self, mut f: Expr) -> PResult<Expr> {
        while *self.peek() == Tok::LParen {
            self.bump();
            if self.eat(&Tok::RParen) {
                f = Expr::App(Box::new(f), Box::new(Expr::Const(Const::Unit)));
                continue;
            }
            loop {
                let a = self.expr()?;
                f = Expr::App(Box::new(f), Box::new(a));
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(&Tok::Comma)?;
            }
        }
        Ok(f)
    }
}
