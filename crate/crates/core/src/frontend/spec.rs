use std::collections::BTreeMap;
use std::fmt;

use super::lexer::{lex, Tok};
use super::parser::Parser;
use super::ParseError;
use crate::logic::{Sort, SortEnv};
use crate::sre::Sre;
use crate::types::{OpDecl, OpKind, OperatorContext, Ty};

/// A parsed `.uhat` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecFile {
    pub sorts: BTreeMap<String, Sort>,
    pub delta: OperatorContext,
    pub properties: BTreeMap<String, Sre>,
    pub config: BTreeMap<String, String>,
}

impl SpecFile {
    pub fn property(&self, name: &str) -> Option<&Sre> {
        self.properties.get(name)
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_config(src: &str) -> Result<BTreeMap<String, String>, ParseError> {
    let mut out = BTreeMap::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ParseError::syntax(i + 1, 1, "expected `key = value`"));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ParseError::syntax(i + 1, 1, "empty configuration key"));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

struct Pending {
    name: String,
    start: usize,
    end: usize,
}

fn is_item_start(t: &Tok) -> bool {
    matches!(t, Tok::Ident(s) if matches!(s.as_str(), "op" | "ghost" | "property" | "sort"))
}

/// Advances to the end of the current item; returns the token index where it ends.
fn skip_item(p: &mut Parser) -> usize {
    let mut depth = 0usize;
    loop {
        let t = p.peek().clone();
        match t {
            Tok::Eof => return p.pos(),
            Tok::Semi if depth == 0 => {
                let end = p.pos();
                p.bump();
                return end;
            }
            ref t if depth == 0 && is_item_start(t) => return p.pos(),
            Tok::LParen | Tok::LBracket | Tok::LBrace => depth += 1,
            Tok::RParen | Tok::RBracket | Tok::RBrace => depth = depth.saturating_sub(1),
            _ => {}
        }
        p.bump();
    }
}

pub fn parse_spec(src: &str) -> Result<SpecFile, ParseError> {
    let mut spec = SpecFile::default();
    // Config lines hold free-form values; take them out before lexing.
    let mut body = String::with_capacity(src.len());
    for (i, line) in src.lines().enumerate() {
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix("config ") {
            let rest = rest.split('#').next().unwrap_or("").trim().trim_end_matches(';');
            let Some((k, v)) = rest.split_once('=') else {
                return Err(ParseError::syntax(i + 1, 1, "expected `config key = value`"));
            };
            spec.config.insert(k.trim().to_string(), v.trim().to_string());
            body.push('\n');
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let toks = lex(&body)?;

    // Pass 1: sorts and operation headers.
    let mut p = Parser::new(toks.clone(), None);
    let mut sigs: Vec<(Pending, Vec<(String, Ty)>, (usize, usize))> = vec![];
    let mut props: Vec<Pending> = vec![];
    while !p.at_eof() {
        let here = p.here();
        if p.eat_kw("sort") {
            let name = p.ident()?;
            p.expect(&Tok::Assign)?;
            let s = p.sort()?;
            p.aliases.insert(name.clone(), s.clone());
            spec.sorts.insert(name, s);
            p.eat(&Tok::Semi);
        } else if p.eat_kw("property") {
            let name = p.ident()?;
            p.expect(&Tok::Assign)?;
            let start = p.pos();
            let end = skip_item(&mut p);
            props.push(Pending { name, start, end });
        } else if p.is_kw("op") || p.is_kw("ghost") {
            let ghost = p.eat_kw("ghost");
            p.expect_kw("op")?;
            let name = p.ident()?;
            if spec.delta.ops.contains_key(&name) {
                return p.semantic(format!("operation `{name}` declared twice"));
            }
            p.expect(&Tok::LParen)?;
            let mut params = vec![];
            if !p.eat(&Tok::RParen) {
                loop {
                    let pname = p.ident()?;
                    p.expect(&Tok::Colon)?;
                    let t = p.base_ty()?;
                    params.push((pname, t));
                    if p.eat(&Tok::RParen) {
                        break;
                    }
                    p.expect(&Tok::Comma)?;
                }
            }
            p.expect(&Tok::Arrow)?;
            let ret = p.base_sort()?;
            let start = p.pos();
            let end = skip_item(&mut p);
            let kind = if ghost { OpKind::Ghost } else { OpKind::Effect };
            spec.delta.ops.insert(
                name.clone(),
                OpDecl { kind, params: params.iter().map(|(_, t)| t.erase()).collect(), ret, sig: None },
            );
            sigs.push((Pending { name, start, end }, params, here));
        } else {
            return p.err(format!("expected a declaration, found {}", p.peek().describe()));
        }
    }

    // Pass 2: signatures and properties against the full alphabet.
    let alphabet = spec.delta.alphabet();
    let mut q = Parser::new(toks, Some(&alphabet));
    q.aliases = p.aliases.clone();
    for (pending, params, _) in sigs {
        if pending.start == pending.end {
            continue;
        }
        q.set_pos(pending.start);
        let mut ghosts = vec![];
        while matches!(q.peek(), Tok::Ident(_)) && *q.peek_at(1) == Tok::Colon {
            let g = q.ident()?;
            q.bump();
            let s = q.base_sort()?;
            q.expect(&Tok::GhostArrow)?;
            ghosts.push((g, s));
        }
        let body = q.ty()?;
        if q.pos() != pending.end {
            return q.err(format!("unexpected {} in signature of `{}`", q.peek().describe(), pending.name));
        }
        let mut sig = params.iter().rev().fold(body, |acc, (x, t)| Ty::arrow(x.clone(), t.clone(), acc));
        sig = ghosts.into_iter().rev().fold(sig, |acc, (g, s)| Ty::ghost(g, s, acc));
        let decl = &spec.delta.ops[&pending.name];
        let want = decl.params.iter().rev().fold(decl.ret.clone(), |acc, s| Sort::arrow(s.clone(), acc));
        if sig.erase() != want {
            q.set_pos(pending.start);
            return q.semantic(format!(
                "signature of `{}` erases to {}, but the declaration says {}",
                pending.name,
                sig.erase(),
                want
            ));
        }
        spec.delta.ops.get_mut(&pending.name).unwrap().sig = Some(sig);
    }
    for pending in props {
        q.set_pos(pending.start);
        let r = q.sre()?;
        if q.pos() != pending.end {
            return q.err(format!("unexpected {} in property `{}`", q.peek().describe(), pending.name));
        }
        let mut env = SortEnv::new();
        if let Err(e) = r.infer_free_sorts(&alphabet, &mut env).and_then(|_| r.check(&alphabet, &env)) {
            q.set_pos(pending.start);
            return q.semantic(format!("property `{}`: {e}", pending.name));
        }
        if let Some(v) = r.free_vars().into_iter().find(|v| v.starts_with('_')) {
            q.set_pos(pending.start);
            return q.semantic(format!("property `{}` uses reserved name `{v}`", pending.name));
        }
        spec.properties.insert(pending.name, r);
    }
    Ok(spec)
}

/// Splits a signature into shared ghosts, named parameters and the body.
pub fn split_signature(sig: &Ty) -> (Vec<(String, Sort)>, Vec<(String, Ty)>, &Ty) {
    let mut ghosts = vec![];
    let mut t = sig;
    while let Ty::GhostVar { name, sort, body } = t {
        ghosts.push((name.clone(), sort.clone()));
        t = body;
    }
    let mut params = vec![];
    while let Ty::Arrow { param, param_ty, body } = t {
        params.push((param.clone(), (**param_ty).clone()));
        t = body;
    }
    (ghosts, params, t)
}

impl fmt::Display for SpecFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.config {
            writeln!(f, "config {k} = {v}")?;
        }
        for (n, s) in &self.sorts {
            writeln!(f, "sort {n} = {s}")?;
        }
        for (name, d) in &self.delta.ops {
            let kw = if d.kind == OpKind::Ghost { "ghost op" } else { "op" };
            match &d.sig {
                None => {
                    let ps: Vec<String> = d.params.iter().enumerate().map(|(i, s)| format!("a{i}: {s}")).collect();
                    writeln!(f, "{kw} {name}({}) -> {};", ps.join(", "), d.ret)?;
                }
                Some(sig) => {
                    let (ghosts, params, body) = split_signature(sig);
                    let ps: Vec<String> = params.iter().map(|(x, t)| format!("{x}: {t}")).collect();
                    writeln!(f, "{kw} {name}({}) -> {}", ps.join(", "), d.ret)?;
                    write!(f, " ")?;
                    for (g, s) in &ghosts {
                        write!(f, " {g}:{s} ~>")?;
                    }
                    writeln!(f, " {body};")?;
                }
            }
        }
        for (n, r) in &self.properties {
            writeln!(f, "property {n} = {r};")?;
        }
        Ok(())
    }
}
