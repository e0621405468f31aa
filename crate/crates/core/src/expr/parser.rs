//! Recursive-descent parser for arithmetic over feature names.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := NUMBER | IDENT | QUOTED | "(" expr ")"
//! ```
//!
//! `×`, `÷` and `−` are accepted as aliases. Quoted names use double quotes
//! with `\"` and `\\` escapes.

use std::fmt;

use super::ast::{BinOp, Expr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Unexpected {
        expected: Vec<String>,
        found: String,
    },
    UnknownCharacter(char),
    UnterminatedQuote,
    InvalidNumber(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the source text.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn expected(&self) -> &[String] {
        match &self.kind {
            ParseErrorKind::Unexpected { expected, .. } => expected,
            _ => &[],
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Unexpected { expected, found } => write!(
                f,
                "syntax error at offset {}: expected {}, found {}",
                self.offset,
                expected.join(" or "),
                found
            ),
            ParseErrorKind::UnknownCharacter(c) => {
                write!(f, "unknown character {c:?} at offset {}", self.offset)
            }
            ParseErrorKind::UnterminatedQuote => {
                write!(f, "unterminated quoted name starting at offset {}", self.offset)
            }
            ParseErrorKind::InvalidNumber(s) => {
                write!(f, "invalid number {s:?} at offset {}", self.offset)
            }
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(BinOp),
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Name(n) => format!("name `{n}`"),
            Tok::Op(op) => format!("`{op}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let single = match c {
            '+' => Some(Tok::Op(BinOp::Add)),
            '-' | '−' => Some(Tok::Op(BinOp::Sub)),
            '*' | '×' => Some(Tok::Op(BinOp::Mul)),
            '/' | '÷' => Some(Tok::Op(BinOp::Div)),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            chars.next();
            out.push((pos, tok));
            continue;
        }
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() || c == '.' {
            let mut end = pos;
            while let Some(&(i, d)) = chars.peek() {
                let exp_sign = (d == '+' || d == '-')
                    && matches!(src[..i].chars().last(), Some('e' | 'E'));
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let text = &src[pos..end];
            let value = text
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError {
                    offset: pos,
                    kind: ParseErrorKind::InvalidNumber(text.to_string()),
                })?;
            out.push((pos, Tok::Num(value)));
        } else if c.is_alphabetic() || c == '_' {
            let mut end = pos;
            while let Some(&(i, d)) = chars.peek() {
                if d.is_alphanumeric() || d == '_' {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((pos, Tok::Name(src[pos..end].to_string())));
        } else if c == '"' {
            chars.next();
            let mut name = String::new();
            let mut closed = false;
            while let Some((_, d)) = chars.next() {
                match d {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, e)) => name.push(e),
                        None => break,
                    },
                    _ => name.push(d),
                }
            }
            if !closed {
                return Err(ParseError {
                    offset: pos,
                    kind: ParseErrorKind::UnterminatedQuote,
                });
            }
            out.push((pos, Tok::Name(name)));
        } else {
            return Err(ParseError {
                offset: pos,
                kind: ParseErrorKind::UnknownCharacter(c),
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

const OPERAND: [&str; 4] = ["number", "feature name", "`(`", "`-`"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::Unexpected {
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: self.peek().describe(),
            },
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(op @ (BinOp::Add | BinOp::Sub)) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(op @ (BinOp::Mul | BinOp::Div)) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Tok::Op(BinOp::Sub) = self.peek() {
            self.bump();
            return Ok(Expr::neg(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Name(n) => {
                self.bump();
                Ok(Expr::Ref(n))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error(&["`)`", "`+`", "`-`", "`*`", "`/`"]));
                }
                self.bump();
                Ok(Expr::group(inner))
            }
            _ => Err(self.error(&OPERAND)),
        }
    }
}

/// Parse expression text into a tree.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["`+`", "`-`", "`*`", "`/`", "end of input"]));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_of_refs() {
        assert_eq!(
            parse("net_monthly_income - monthly_payment").unwrap(),
            Expr::binary(
                BinOp::Sub,
                Expr::var("net_monthly_income"),
                Expr::var("monthly_payment")
            )
        );
    }

    #[test]
    fn multiplication_binds_tighter() {
        assert_eq!(
            parse("a + b * c").unwrap(),
            Expr::binary(
                BinOp::Add,
                Expr::var("a"),
                Expr::binary(BinOp::Mul, Expr::var("b"), Expr::var("c"))
            )
        );
    }

    #[test]
    fn left_associative() {
        assert_eq!(
            parse("a - b - c").unwrap(),
            Expr::binary(
                BinOp::Sub,
                Expr::binary(BinOp::Sub, Expr::var("a"), Expr::var("b")),
                Expr::var("c")
            )
        );
    }

    #[test]
    fn parentheses_override() {
        let e = parse("(a + b) * c").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinOp::Mul,
                Expr::group(Expr::binary(BinOp::Add, Expr::var("a"), Expr::var("b"))),
                Expr::var("c")
            )
        );
    }

    #[test]
    fn unbalanced_paren_reports_end() {
        let err = parse("(a + b").unwrap_err();
        assert_eq!(err.offset, 6);
        assert!(err.expected().iter().any(|e| e == "`)`"));
    }

    #[test]
    fn quoted_names_and_unicode_ops() {
        assert_eq!(
            parse("\"net income\" × 2 ÷ x − 1").unwrap(),
            Expr::binary(
                BinOp::Sub,
                Expr::binary(
                    BinOp::Div,
                    Expr::binary(BinOp::Mul, Expr::var("net income"), Expr::num(2.0)),
                    Expr::var("x")
                ),
                Expr::num(1.0)
            )
        );
        assert_eq!(parse(r#""say \"hi\"""#).unwrap(), Expr::var("say \"hi\""));
    }

    #[test]
    fn unknown_character_positioned() {
        let err = parse("a $ b").unwrap_err();
        assert_eq!(err.offset, 2);
        assert_eq!(err.kind, ParseErrorKind::UnknownCharacter('$'));
    }

    #[test]
    fn malformed_inputs() {
        for (src, offset) in [
            ("", 0),
            ("a +", 3),
            ("a b", 2),
            (")", 0),
            ("a * / b", 4),
            ("1..2", 0),
            ("\"open", 0),
            ("()", 1),
        ] {
            let err = parse(src).unwrap_err();
            assert_eq!(err.offset, offset, "{src:?}: {err}");
        }
    }

    #[test]
    fn exponent_numbers() {
        assert_eq!(parse("1e3").unwrap(), Expr::num(1000.0));
        assert_eq!(parse("2.5E-1").unwrap(), Expr::num(0.25));
        assert_eq!(
            parse("1e-2-x").unwrap(),
            Expr::binary(BinOp::Sub, Expr::num(0.01), Expr::var("x"))
        );
    }
}
