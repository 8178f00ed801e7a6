//! Recursive-descent parser for the infix expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number ('[' unit ']')? | ident | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! A minus directly in front of a numeric literal that is not raised to a
//! power folds into a negative constant.

use super::ast::{BinOp, Expr, UnaryOp};
use super::ParseError;
use crate::data::Unit;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Unit(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push((Tok::Op(c), start));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, start));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, start));
                i += 1;
            }
            '[' => {
                let end = text[i..]
                    .find(']')
                    .ok_or_else(|| ParseError::new(start, "unterminated unit bracket"))?;
                out.push((Tok::Unit(text[i + 1..i + end].to_string()), start));
                i += end + 1;
            }
            '0'..='9' | '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let value: f64 = text[start..i]
                    .parse()
                    .map_err(|_| ParseError::new(start, "malformed number"))?;
                out.push((Tok::Num(value), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => return Err(ParseError::new(start, format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a, F> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    is_var: &'a F,
}

impl<F: Fn(&str) -> bool> Parser<'_, F> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        let at = self.offset();
        match self.next() {
            Some(t) if t == tok => Ok(()),
            _ => Err(ParseError::new(at, format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    /// Length in tokens of a literal (number plus optional unit) at `offset`.
    fn literal_len(&self, offset: usize) -> Option<usize> {
        match (self.peek_at(offset), self.peek_at(offset + 1)) {
            (Some(Tok::Num(_)), Some(Tok::Unit(_))) => Some(2),
            (Some(Tok::Num(_)), _) => Some(1),
            _ => None,
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            if let Some(len) = self.literal_len(1) {
                if self.peek_at(1 + len) != Some(&Tok::Op('^')) {
                    self.pos += 1;
                    return match self.literal()? {
                        Expr::Const { value, unit } => Ok(Expr::Const { value: -value, unit }),
                        _ => unreachable!("literal() returns constants"),
                    };
                }
            }
            self.pos += 1;
            let child = self.unary()?;
            return Ok(Expr::Neg(Box::new(child)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn literal(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        let value = match self.next() {
            Some(Tok::Num(v)) => v,
            _ => return Err(ParseError::new(at, "expected number")),
        };
        let mut unit = Unit::DIMENSIONLESS;
        if let Some(Tok::Unit(u)) = self.peek().cloned() {
            let uat = self.offset();
            unit = u
                .parse()
                .map_err(|_| ParseError::new(uat, format!("unknown unit `{u}`")))?;
            self.pos += 1;
        }
        Ok(Expr::Const { value, unit })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(_)) => self.literal(),
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(Tok::LParen) = self.peek() {
                    let op = UnaryOp::from_name(&name)
                        .ok_or_else(|| ParseError::new(at, format!("unknown function `{name}`")))?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::unary(op, arg));
                }
                if (self.is_var)(&name) {
                    Ok(Expr::Var(name))
                } else {
                    Ok(Expr::Param(name))
                }
            }
            Some(t) => Err(ParseError::new(at, format!("unexpected token {t:?}"))),
            None => Err(ParseError::new(at, "unexpected end of input")),
        }
    }
}

/// Parses `text`. Identifiers accepted by `is_var` become variables, every
/// other identifier becomes a free parameter.
pub fn parse(text: &str, is_var: impl Fn(&str) -> bool) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        is_var: &is_var,
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(ParseError::new(p.offset(), "trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(name: &str) -> bool {
        matches!(name, "TPSA" | "molelogP" | "x" | "y")
    }

    #[test]
    fn model_one_tree() {
        let e = parse("IE*(1+(TPSA/SP)^2)", vars).unwrap();
        let expected = Expr::param("IE").mul(
            Expr::num(1.0).add(
                Expr::var("TPSA")
                    .div(Expr::param("SP"))
                    .pow(Expr::num(2.0)),
            ),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn precedence() {
        assert_eq!(parse("1+2*3", vars).unwrap().constant_value(), Some(7.0));
        assert_eq!(parse("-2^2", vars).unwrap().constant_value(), Some(-4.0));
        assert_eq!(parse("2^3^2", vars).unwrap().constant_value(), Some(512.0));
        assert_eq!(parse("2*-3", vars).unwrap().constant_value(), Some(-6.0));
        assert_eq!(parse("8/2/2", vars).unwrap().constant_value(), Some(2.0));
        assert_eq!(parse("2^-1", vars).unwrap().constant_value(), Some(0.5));
    }

    #[test]
    fn functions_and_units() {
        let e = parse("sqrt(x) + invlog(y) * 1[area]", vars).unwrap();
        assert_eq!(e.to_text(), "sqrt(x)+invlog(y)*1[area]");
        assert!(parse("foo(x)", vars).is_err());
        assert!(parse("1[parsec]", vars).is_err());
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse("1 + * 2", vars).unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse("(1 + 2", vars).unwrap_err();
        assert_eq!(err.position, 6);
        assert!(parse("1 2", vars).is_err());
        assert!(parse("x $ y", vars).is_err());
    }

    #[test]
    fn negative_literals_round_trip() {
        for text in ["(-2)", "-(2)", "-x", "x*-y", "(-2)^2", "-2^2", "x--y", "(-0)"] {
            let e = parse(text, vars).unwrap();
            let again = parse(&e.to_text(), vars).unwrap();
            assert_eq!(e, again, "{text} -> {}", e.to_text());
        }
    }
}
