//! Recursive-descent parser.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2`
//! is `-(2^2)`.

use super::expr::{BinOp, ControlExpr, Func, VARIABLES};
use super::ExprError;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("number {v}"),
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::Slash => "`/`".into(),
            Token::Caret => "`^`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::End => "end of input".into(),
        }
    }
}

fn syntax(offset: usize, expected: &[&str], found: String) -> ExprError {
    ExprError::Syntax {
        offset,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found,
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b',' => Token::Comma,
            b'0'..=b'9' | b'.' => {
                let (value, end) = scan_number(text, start)?;
                tokens.push((start, Token::Num(value)));
                i = end;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(
                    start,
                    &["number", "identifier", "operator", "`(`"],
                    format!("character `{ch}`"),
                ));
            }
        };
        tokens.push((start, tok));
        i += 1;
    }
    tokens.push((text.len(), Token::End));
    Ok(tokens)
}

/// Decimal literal with optional fraction and exponent.
fn scan_number(text: &str, start: usize) -> Result<(f64, usize), ExprError> {
    let bytes = text.as_bytes();
    let mut i = start;
    let digits = |i: &mut usize| {
        let from = *i;
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
        *i - from
    };
    let mut mantissa = digits(&mut i);
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        mantissa += digits(&mut i);
    }
    if mantissa == 0 {
        return Err(syntax(start, &["digit"], "`.`".into()));
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if digits(&mut j) == 0 {
            return Err(syntax(j, &["exponent digits"], "malformed exponent".into()));
        }
        i = j;
    }
    let value: f64 = text[start..i]
        .parse()
        .map_err(|_| syntax(start, &["number"], text[start..i].to_string()))?;
    if !value.is_finite() {
        return Err(syntax(start, &["finite number"], text[start..i].to_string()));
    }
    Ok((value, i))
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].1.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, want: Token, label: &str) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), &[label], self.peek().describe()))
        }
    }

    fn expr(&mut self) -> Result<ControlExpr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ControlExpr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<ControlExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = ControlExpr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<ControlExpr, ExprError> {
        if *self.peek() == Token::Minus {
            self.bump();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<ControlExpr, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Token::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(ControlExpr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ControlExpr, ExprError> {
        let offset = self.offset();
        match self.bump() {
            Token::Num(v) => Ok(ControlExpr::Num(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if *self.peek() == Token::LParen {
                    self.call(name, offset)
                } else if VARIABLES.contains(&name.as_str()) {
                    Ok(ControlExpr::Var(name))
                } else {
                    Err(ExprError::UnknownIdentifier { name, offset })
                }
            }
            other => Err(syntax(
                offset,
                &["number", "identifier", "`(`", "`-`"],
                other.describe(),
            )),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<ControlExpr, ExprError> {
        let func = Func::from_name(&name).ok_or(ExprError::UnknownIdentifier {
            name: name.clone(),
            offset,
        })?;
        self.bump();
        let mut args = vec![self.expr()?];
        while *self.peek() == Token::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        if *self.peek() != Token::RParen {
            return Err(syntax(self.offset(), &["`,`", "`)`"], self.peek().describe()));
        }
        self.bump();
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                name,
                expected: func.arity(),
                found: args.len(),
            });
        }
        Ok(ControlExpr::Call(func, args))
    }
}

/// Parses a control expression.
pub fn parse(text: &str) -> Result<ControlExpr, ExprError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let expr = parser.expr()?;
    if *parser.peek() != Token::End {
        return Err(syntax(
            parser.offset(),
            &["operator", "end of input"],
            parser.peek().describe(),
        ));
    }
    Ok(expr)
}
