//! Custom-attribute expression language: four-operator arithmetic over
//! numeric feature names, evaluated per row.

mod ast;
mod eval;
mod parser;
mod print;

pub use ast::{BinOp, Expr};
pub use eval::{evaluate_column, evaluate_row, BoundExpr, CustomMetricDef, DerivedColumn};
pub use parser::{parse, ParseError, ParseErrorKind};
pub use print::print;
