//! Infix expression grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | '+' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Exponents must reduce to rational constants. `tanh` is the only function.

use super::expr::{parse_decimal, Expr, Node};
use super::symbol::Sym;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(String),
    Ident(String),
    Op(char),
}

struct Lexer<'a> {
    src: &'a str,
    line: usize,
    col0: usize,
}

impl Lexer<'_> {
    fn tokens(&self) -> Result<Vec<(Token, usize)>> {
        let bytes = self.src.as_bytes();
        let mut out = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
                while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                out.push((Token::Number(self.src[start..i].to_string()), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Ident(self.src[start..i].to_string()), start));
            } else if "+-*/^()".contains(c) {
                out.push((Token::Op(c), start));
                i += 1;
            } else {
                return Err(self.error(start, format!("unexpected character `{c}`")));
            }
        }
        Ok(out)
    }

    fn error(&self, offset: usize, message: String) -> Error {
        Error::Syntax {
            line: self.line,
            col: self.col0 + offset + 1,
            message,
        }
    }
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    lexer: &'a Lexer<'a>,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(self.lexer.error(self.offset(), message.into()))
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(&Token::Op(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Some(Token::Op('+')) => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some(Token::Op('-')) => {
                    self.pos += 1;
                    terms.push(Expr::from_node(Node::Neg(self.term()?)));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::sum(terms) })
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Op('*')) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    acc = Expr::product(vec![acc, rhs]);
                }
                Some(Token::Op('/')) => {
                    self.pos += 1;
                    let at = self.offset();
                    let rhs = self.unary()?;
                    if rhs.simplify().is_zero() {
                        return Err(self.lexer.error(at, "division by literal zero".into()));
                    }
                    acc = Expr::quot(acc, rhs);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Expr::from_node(Node::Neg(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Op('^')) {
            self.pos += 1;
            let at = self.offset();
            let exponent = self.unary()?.simplify();
            match exponent.as_const() {
                Some(q) => Ok(Expr::pow(base, q.clone())),
                None => Err(self.lexer.error(at, "exponent must be a rational constant".into())),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Token::Number(text)) => {
                self.pos += 1;
                match parse_decimal(&text) {
                    Some(q) => Ok(Expr::constant(q)),
                    None => Err(self.lexer.error(at, format!("bad number `{text}`"))),
                }
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Token::Op('(')) {
                    if name != "tanh" {
                        return Err(self.lexer.error(at, format!("unknown function `{name}`")));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Expr::tanh(arg))
                } else {
                    Ok(Expr::var(Sym::new(&name)))
                }
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(t) => self.err(format!("unexpected token {t:?}")),
            None => self.err("unexpected end of expression"),
        }
    }
}

/// Parse without simplification; positions are reported relative to `line`/`col0`.
pub(crate) fn parse_expr_at(src: &str, line: usize, col0: usize) -> Result<Expr> {
    let lexer = Lexer { src, line, col0 };
    let tokens = lexer.tokens()?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        lexer: &lexer,
        end: src.len(),
    };
    let e = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return parser.err("trailing input");
    }
    Ok(e)
}

/// Parse an expression and return its canonical form.
pub fn parse_expr(src: &str) -> Result<Expr> {
    Ok(parse_expr_at(src, 1, 0)?.simplify())
}
