//! Concrete events and traces.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::logic::{Const, Sort};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Basic type of an operation as seen by traces and regexes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpSig {
    pub args: Vec<Sort>,
    pub ret: Sort,
    pub ghost: bool,
}

impl OpSig {
    pub fn new(args: Vec<Sort>, ret: Sort, ghost: bool) -> Self {
        OpSig { args, ret, ghost }
    }

    /// `a1 -> ... -> an -> ret`, with `unit -> ret` for nullary operations.
    pub fn sort(&self) -> Sort {
        let args = if self.args.is_empty() { vec![Sort::Unit] } else { self.args.clone() };
        args.into_iter().rev().fold(self.ret.clone(), |acc, a| Sort::arrow(a, acc))
    }
}

pub type Alphabet = BTreeMap<String, OpSig>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub op: String,
    pub args: Vec<Const>,
    pub ret: Const,
    pub ghost: bool,
}

impl Event {
    pub fn new(op: impl Into<String>, args: Vec<Const>, ret: Const) -> Self {
        Event { op: op.into(), args, ret, ghost: false }
    }

    pub fn ghost(op: impl Into<String>, args: Vec<Const>, ret: Const) -> Self {
        Event { op: op.into(), args, ret, ghost: true }
    }

    pub fn well_formed(&self, alphabet: &Alphabet) -> Result<bool, TraceError> {
        let sig = alphabet.get(&self.op).ok_or_else(|| TraceError::UnknownOp(self.op.clone()))?;
        Ok(sig.ghost == self.ghost
            && sig.args.len() == self.args.len()
            && sig.args.iter().zip(&self.args).all(|(s, c)| *s == c.sort())
            && sig.ret == self.ret.sort())
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}{}", if self.ghost { "~" } else { "" }, self.op)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, " {}>", self.ret)
    }
}

pub type Trace = Vec<Event>;

pub fn erase_ghost(alpha: &[Event]) -> Trace {
    alpha.iter().filter(|e| !e.ghost).cloned().collect()
}

pub fn well_formed(alpha: &[Event], alphabet: &Alphabet) -> Result<bool, TraceError> {
    for e in alpha {
        if !e.well_formed(alphabet)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn show(alpha: &[Event]) -> String {
    let parts: Vec<String> = alpha.iter().map(|e| e.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

/// One `op=<name> args=[c1,...] ret=<c> ghost=<0|1>` record per line.
pub fn to_text(alpha: &[Event]) -> String {
    let mut out = String::new();
    for e in alpha {
        let args: Vec<String> = e.args.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("op={} args=[{}] ret={} ghost={}\n", e.op, args.join(","), e.ret, e.ghost as u8));
    }
    out
}

pub fn parse_const(s: &str) -> Option<Const> {
    match s.trim() {
        "()" => Some(Const::Unit),
        "true" => Some(Const::Bool(true)),
        "false" => Some(Const::Bool(false)),
        other => other.parse::<i64>().ok().map(Const::Int),
    }
}

pub fn from_text(text: &str) -> Result<Trace, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| TraceError::Format { line: i + 1, msg: msg.to_string() };
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut rest = line;
        while !rest.is_empty() {
            let eq = rest.find('=').ok_or_else(|| err("expected key=value"))?;
            let key = rest[..eq].trim();
            let after = &rest[eq + 1..];
            let end = if after.starts_with('[') {
                after.find(']').map(|p| p + 1).ok_or_else(|| err("unterminated argument list"))?
            } else {
                after.find(char::is_whitespace).unwrap_or(after.len())
            };
            fields.insert(key, &after[..end]);
            rest = after[end..].trim_start();
        }
        let op = fields.get("op").ok_or_else(|| err("missing op"))?;
        let args_raw = fields.get("args").ok_or_else(|| err("missing args"))?;
        let inner = args_raw
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| err("args must be bracketed"))?;
        let args = if inner.trim().is_empty() {
            vec![]
        } else {
            inner
                .split(',')
                .map(|c| parse_const(c).ok_or_else(|| err("bad constant")))
                .collect::<Result<Vec<_>, _>>()?
        };
        let ret = parse_const(fields.get("ret").ok_or_else(|| err("missing ret"))?).ok_or_else(|| err("bad ret"))?;
        let ghost = match fields.get("ghost").copied().unwrap_or("0") {
            "0" => false,
            "1" => true,
            _ => return Err(err("ghost must be 0 or 1")),
        };
        out.push(Event { op: op.to_string(), args, ret, ghost });
    }
    Ok(out)
}
