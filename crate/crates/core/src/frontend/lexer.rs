use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Ne,
    Assign,
    AndAnd,
    OrOr,
    Bang,
    Implies,
    Plus,
    Minus,
    Dot,
    DotDot,
    Star,
    Bar,
    Amp,
    Backslash,
    Comma,
    Colon,
    Semi,
    Tilde,
    GhostArrow,
    Arrow,
    Choice,
    Meet,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Eof => "end of input".into(),
            other => {
                let s = match other {
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::LBracket => "[",
                    Tok::RBracket => "]",
                    Tok::LBrace => "{",
                    Tok::RBrace => "}",
                    Tok::Lt => "<",
                    Tok::Gt => ">",
                    Tok::Le => "<=",
                    Tok::Ge => ">=",
                    Tok::EqEq => "==",
                    Tok::Ne => "!=",
                    Tok::Assign => "=",
                    Tok::AndAnd => "&&",
                    Tok::OrOr => "||",
                    Tok::Bang => "!",
                    Tok::Implies => "=>",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Dot => ".",
                    Tok::DotDot => "..",
                    Tok::Star => "*",
                    Tok::Bar => "|",
                    Tok::Amp => "&",
                    Tok::Backslash => "\\",
                    Tok::Comma => ",",
                    Tok::Colon => ":",
                    Tok::Semi => ";",
                    Tok::Tilde => "~",
                    Tok::GhostArrow => "~>",
                    Tok::Arrow => "->",
                    Tok::Choice => "(+)",
                    Tok::Meet => "/\\",
                    _ => unreachable!(),
                };
                format!("`{s}`")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let at = |k: usize| chars.get(k).copied().unwrap_or('\0');
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && at(i + 1) == '/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let push = |out: &mut Vec<Spanned>, tok: Tok| out.push(Spanned { tok, line: start_line, col: start_col });
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            let word: String = chars[s..i].iter().collect();
            col += i - s;
            push(&mut out, Tok::Ident(word));
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[s..i].iter().collect();
            let n = text.parse::<i64>().map_err(|_| ParseError::syntax(line, col, "integer literal out of range"))?;
            col += i - s;
            push(&mut out, Tok::Int(n));
            continue;
        }
        let three: String = chars[i..(i + 3).min(chars.len())].iter().collect();
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, len) = if three == "(+)" {
            (Tok::Choice, 3)
        } else {
            match two.as_str() {
                "<=" => (Tok::Le, 2),
                ">=" => (Tok::Ge, 2),
                "==" => (Tok::EqEq, 2),
                "!=" => (Tok::Ne, 2),
                "&&" => (Tok::AndAnd, 2),
                "||" => (Tok::OrOr, 2),
                "=>" => (Tok::Implies, 2),
                "->" => (Tok::Arrow, 2),
                "~>" => (Tok::GhostArrow, 2),
                ".." => (Tok::DotDot, 2),
                "/\\" => (Tok::Meet, 2),
                _ => {
                    let t = match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '[' => Tok::LBracket,
                        ']' => Tok::RBracket,
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        '<' => Tok::Lt,
                        '>' => Tok::Gt,
                        '=' => Tok::Assign,
                        '!' => Tok::Bang,
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '.' => Tok::Dot,
                        '*' => Tok::Star,
                        '|' => Tok::Bar,
                        '&' => Tok::Amp,
                        '\\' => Tok::Backslash,
                        ',' => Tok::Comma,
                        ':' => Tok::Colon,
                        ';' => Tok::Semi,
                        '~' => Tok::Tilde,
                        _ => return Err(ParseError::syntax(line, col, format!("unexpected character `{c}`"))),
                    };
                    (t, 1)
                }
            }
        };
        i += len;
        col += len;
        push(&mut out, tok);
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}
