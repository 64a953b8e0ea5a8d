//! Tokenizer and linear-expression parser shared by the model, run and
//! formula readers.

use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::numerics::{parse_rational, Comparator, LinExpr, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Quoted(String),
    Num(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Quoted(s) => write!(f, "\"{s}\""),
            Tok::Num(s) => write!(f, "`{s}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const SYMBOLS: &[&str] = &[
    "->", ":=", "<=", ">=", "==", "&&", "||", "!=", "{", "}", "[", "]", "(", ")", ";", ",", "<", ">", "=", "*", "/",
    "+", "-", "!", ":",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| SyntaxError { line, col, message };
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
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (l0, c0) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            col += i - start;
            out.push(Token { tok: Tok::Num(chars[start..i].iter().collect()), line: l0, col: c0 });
            continue;
        }
        if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\n' {
                    return Err(err(l0, c0, "unterminated quoted name".into()));
                }
                i += 1;
            }
            if i >= chars.len() {
                return Err(err(l0, c0, "unterminated quoted name".into()));
            }
            let s: String = chars[start..i].iter().collect();
            i += 1;
            col += s.chars().count() + 2;
            out.push(Token { tok: Tok::Quoted(s), line: l0, col: c0 });
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push(Token { tok: Tok::Sym(s), line: l0, col: c0 });
            }
            None => return Err(err(l0, c0, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Highest clock index accepted in expressions; `None` disables the check.
    pub max_clock: Option<usize>,
}

pub fn clock_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Parser { toks: tokenize(src)?, pos: 0, max_clock: None })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    /// Position to return to with `reset`.
    pub fn mark(&self) -> usize {
        self.pos
    }

    pub fn is_sym_at(&self, mark: usize, s: &str) -> bool {
        matches!(self.toks.get(mark).map(|t| &t.tok), Some(Tok::Sym(t)) if *t == s)
    }

    pub fn reset(&mut self, mark: usize) {
        self.pos = mark;
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error(&self, message: impl Into<String>) -> SyntaxError {
        let t = &self.toks[self.pos];
        SyntaxError { line: t.line, col: t.col, message: message.into() }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    pub fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, k: &str) -> bool {
        if self.is_keyword(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{s}`, found {}", self.peek())))
        }
    }

    pub fn expect_keyword(&mut self, k: &str) -> Result<(), SyntaxError> {
        if self.eat_keyword(k) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{k}`, found {}", self.peek())))
        }
    }

    /// A bare identifier or a quoted name.
    pub fn name(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) | Tok::Quoted(s) => {
                self.bump();
                Ok(s)
            }
            t => Err(self.error(format!("expected a name, found {t}"))),
        }
    }

    pub fn natural(&mut self) -> Result<usize, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(s) if !s.contains('.') => {
                let v = s.parse().map_err(|_| self.error("number out of range"))?;
                self.bump();
                Ok(v)
            }
            t => Err(self.error(format!("expected a natural number, found {t}"))),
        }
    }

    /// Signed rational literal: `-3`, `7/10`, `0.25`.
    pub fn rational(&mut self) -> Result<Rational, SyntaxError> {
        let e = self.linexpr()?;
        if !e.is_constant() {
            return Err(self.error("expected a constant"));
        }
        Ok(e.constant_term())
    }

    pub fn clock(&mut self) -> Result<usize, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => match clock_index(&s) {
                Some(i) => {
                    self.check_clock(i)?;
                    self.bump();
                    Ok(i)
                }
                None => Err(self.error(format!("expected a clock, found `{s}`"))),
            },
            t => Err(self.error(format!("expected a clock, found {t}"))),
        }
    }

    fn check_clock(&self, i: usize) -> Result<(), SyntaxError> {
        match self.max_clock {
            Some(n) if i > n => Err(self.error(format!("clock x{i} is not declared (model has {n} clocks)"))),
            _ => Ok(()),
        }
    }

    pub fn comparator(&mut self) -> Option<Comparator> {
        let c = match self.peek() {
            Tok::Sym("<") => Comparator::Lt,
            Tok::Sym("<=") => Comparator::Le,
            Tok::Sym("=") | Tok::Sym("==") => Comparator::Eq,
            Tok::Sym(">=") => Comparator::Ge,
            Tok::Sym(">") => Comparator::Gt,
            _ => return None,
        };
        self.bump();
        Some(c)
    }

    /// Does the next token start a linear expression?
    pub fn starts_expr(&self) -> bool {
        match self.peek() {
            Tok::Num(_) => true,
            Tok::Sym("-") | Tok::Sym("+") => true,
            Tok::Ident(s) => clock_index(s).is_some(),
            _ => false,
        }
    }

    pub fn linexpr(&mut self) -> Result<LinExpr, SyntaxError> {
        let mut acc = self.product()?;
        loop {
            if self.eat_sym("+") {
                acc = acc.add(&self.product()?);
            } else if self.eat_sym("-") {
                acc = acc.sub(&self.product()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<LinExpr, SyntaxError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat_sym("*") {
                let rhs = self.unary()?;
                acc = if acc.is_constant() {
                    rhs.scale(&acc.constant_term())
                } else if rhs.is_constant() {
                    acc.scale(&rhs.constant_term())
                } else {
                    return Err(self.error("product of two clock terms is not linear"));
                };
            } else if self.eat_sym("/") {
                let rhs = self.unary()?;
                if !rhs.is_constant() || rhs.constant_term().is_zero() {
                    return Err(self.error("division by a non-constant or zero"));
                }
                acc = acc.scale(&rhs.constant_term().recip());
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<LinExpr, SyntaxError> {
        if self.eat_sym("-") {
            return Ok(self.unary()?.neg());
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        match self.peek().clone() {
            Tok::Num(s) => {
                let r = parse_rational(&s).map_err(|e| self.error(e.to_string()))?;
                self.bump();
                Ok(LinExpr::constant(r))
            }
            Tok::Ident(s) => match clock_index(&s) {
                Some(i) => {
                    self.check_clock(i)?;
                    self.bump();
                    Ok(LinExpr::var(i))
                }
                None => Err(self.error(format!("expected a clock or number, found `{s}`"))),
            },
            Tok::Sym("(") => {
                self.bump();
                let e = self.linexpr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            t => Err(self.error(format!("expected an expression, found {t}"))),
        }
    }

    /// `lhs ⋈ rhs`, returned as `lhs - rhs ⋈ 0`.
    pub fn comparison(&mut self) -> Result<(LinExpr, Comparator), SyntaxError> {
        let lhs = self.linexpr()?;
        let Some(c) = self.comparator() else {
            return Err(self.error(format!("expected a comparison operator, found {}", self.peek())));
        };
        let rhs = self.linexpr()?;
        Ok((lhs.sub(&rhs), c))
    }
}

pub fn parse_linexpr(src: &str) -> Result<LinExpr, SyntaxError> {
    let mut p = Parser::new(src)?;
    let e = p.linexpr()?;
    if !p.at_eof() {
        return Err(p.error(format!("unexpected {}", p.peek())));
    }
    Ok(e)
}

/// Renders a name so that the tokenizer reads it back as a single name.
pub fn quote_name(s: &str) -> String {
    let plain = !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !is_reserved(s);
    if plain {
        s.to_string()
    } else {
        format!("\"{s}\"")
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "ita" | "clocks" | "state" | "level" | "policy" | "initial" | "final" | "labels" | "trans" | "on" | "when"
            | "do" | "eps" | "true" | "false" | "lazy" | "urgent" | "delayed"
    ) || clock_index(s).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{int, rat};

    #[test]
    fn parses_rational_coefficients() {
        let e = parse_linexpr("-1/2*x1 + 1").unwrap();
        assert_eq!(e, LinExpr::term(1, rat(-1, 2)).add_constant(&int(1)));
        assert_eq!(parse_linexpr("2*(x1 - x2) + 0.5").unwrap().to_string(), "2*x1 - 2*x2 + 1/2");
        assert_eq!(parse_linexpr("x2*3").unwrap(), LinExpr::term(2, int(3)));
    }

    #[test]
    fn rejects_nonlinear() {
        assert!(parse_linexpr("x1*x2").is_err());
        assert!(parse_linexpr("1/x1").is_err());
    }

    #[test]
    fn error_positions() {
        let e = parse_linexpr("x1 +\n  $").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
    }

    #[test]
    fn quoting() {
        assert_eq!(quote_name("q0"), "q0");
        assert_eq!(quote_name("q+{x1;2}"), "\"q+{x1;2}\"");
        assert_eq!(quote_name("x1"), "\"x1\"");
    }
}
