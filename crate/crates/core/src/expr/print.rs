use std::fmt::{self, Write};

use super::ast::Expr;
use crate::data::format_number;

fn is_bare_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn write_name(out: &mut impl Write, name: &str) -> fmt::Result {
    if is_bare_identifier(name) {
        return out.write_str(name);
    }
    out.write_char('"')?;
    for c in name.chars() {
        if c == '"' || c == '\\' {
            out.write_char('\\')?;
        }
        out.write_char(c)?;
    }
    out.write_char('"')
}

fn binary_prec(e: &Expr) -> Option<u8> {
    match e {
        Expr::Binary { op, .. } => Some(op.precedence()),
        _ => None,
    }
}

fn write_operand(out: &mut impl Write, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        out.write_char('(')?;
        write_expr(out, e)?;
        out.write_char(')')
    } else {
        write_expr(out, e)
    }
}

fn write_expr(out: &mut impl Write, e: &Expr) -> fmt::Result {
    match e {
        Expr::Num(v) => out.write_str(&format_number(*v)),
        Expr::Ref(name) => write_name(out, name),
        Expr::Group(inner) => write_operand(out, inner, true),
        Expr::Neg(inner) => {
            out.write_char('-')?;
            write_operand(out, inner, binary_prec(inner).is_some())
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            write_operand(out, lhs, binary_prec(lhs).is_some_and(|q| q < p))?;
            write!(out, " {op} ")?;
            write_operand(out, rhs, binary_prec(rhs).is_some_and(|q| q <= p))
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

/// Canonical text: minimal parentheses plus any user grouping.
pub fn print(e: &Expr) -> String {
    e.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, BinOp};

    #[test]
    fn right_nested_subtraction_keeps_parens() {
        let e = Expr::binary(
            BinOp::Sub,
            Expr::var("a"),
            Expr::binary(BinOp::Sub, Expr::var("b"), Expr::var("c")),
        );
        assert_eq!(print(&e), "a - (b - c)");
    }

    #[test]
    fn round_trip_precedence() {
        let e = parse("a + b * c").unwrap();
        assert_eq!(print(&e), "a + b * c");
        assert_eq!(parse(&print(&e)).unwrap(), e);
    }

    #[test]
    fn user_grouping_preserved() {
        assert_eq!(print(&parse("(a * b) + c").unwrap()), "(a * b) + c");
        assert_eq!(print(&parse("((x))").unwrap()), "((x))");
    }

    #[test]
    fn negation_and_quoting() {
        let e = Expr::neg(Expr::binary(BinOp::Add, Expr::var("net income"), Expr::num(0.5)));
        assert_eq!(print(&e), "-(\"net income\" + 0.5)");
        assert!(parse(&print(&e)).unwrap().structurally_eq(&e));
    }
}
