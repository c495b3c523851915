//! Concrete syntax: qualifiers, regexes, types, generator programs and spec files.

mod lexer;
mod parser;
mod spec;

pub use spec::{parse_config, parse_spec, split_signature, SpecFile};

/// Bundled specifications.
pub const STACK_SPEC: &str = include_str!("../../specs/stack.uhat");
pub const TRANSACTION_SPEC: &str = include_str!("../../specs/transaction.uhat");

/// Looks up a bundled specification by name (`stack`, `transaction`).
pub fn builtin_spec(name: &str) -> Option<&'static str> {
    match name {
        "stack" => Some(STACK_SPEC),
        "transaction" | "kv" => Some(TRANSACTION_SPEC),
        _ => None,
    }
}

use std::fmt;
use std::str::FromStr;

use crate::dsl::Expr;
use crate::logic::{Qualifier, Sort};
use crate::sre::Sre;
use crate::trace::Alphabet;
use crate::types::Ty;

use parser::Parser;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ErrorKind,
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError { kind: ErrorKind::Syntax, line, col, msg: msg.into() }
    }

    pub fn semantic(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError { kind: ErrorKind::Semantic, line, col, msg: msg.into() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Syntax => "parse error",
            ErrorKind::Semantic => "semantic error",
        };
        write!(f, "{kind} at {}:{}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

fn with_parser<'a, T>(
    src: &str,
    alphabet: Option<&'a Alphabet>,
    f: impl FnOnce(&mut Parser<'a>) -> Result<T, ParseError>,
) -> Result<T, ParseError> {
    let toks = lexer::lex(src)?;
    let mut p = Parser::new(toks, alphabet);
    let out = f(&mut p)?;
    p.finish()?;
    Ok(out)
}

pub fn parse_qualifier(src: &str) -> Result<Qualifier, ParseError> {
    with_parser(src, None, |p| p.qualifier())
}

pub fn parse_sort(src: &str) -> Result<Sort, ParseError> {
    with_parser(src, None, |p| p.sort())
}

pub fn parse_sre(src: &str, alphabet: &Alphabet) -> Result<Sre, ParseError> {
    with_parser(src, Some(alphabet), |p| p.sre())
}

pub fn parse_ty(src: &str, alphabet: &Alphabet) -> Result<Ty, ParseError> {
    with_parser(src, Some(alphabet), |p| p.ty())
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    with_parser(src, None, |p| p.expr())
}

impl FromStr for Qualifier {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_qualifier(s)
    }
}

impl FromStr for Sort {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_sort(s)
    }
}

impl FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}
