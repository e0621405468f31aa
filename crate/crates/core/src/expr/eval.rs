use serde::{Deserialize, Serialize};

use super::ast::{BinOp, Expr};
use super::parser::parse;
use crate::data::{BinSpec, Column, ColumnKind, DataTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
}

/// An expression compiled against a table schema into a postfix program.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundExpr {
    program: Vec<Op>,
    /// Column indices referenced by the program.
    inputs: Vec<usize>,
    max_stack: usize,
}

fn candidates(table: &DataTable, name: &str) -> Vec<String> {
    let mut numeric: Vec<(f64, String)> = table
        .columns()
        .iter()
        .filter(|c| c.kind() == ColumnKind::Numeric)
        .map(|c| (strsim::jaro_winkler(name, c.name()), c.name().to_string()))
        .collect();
    numeric.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    numeric.into_iter().take(5).map(|(_, n)| n).collect()
}

impl BoundExpr {
    /// Resolve feature references; every referenced column must be numeric.
    pub fn bind(ast: &Expr, table: &DataTable) -> Result<Self> {
        let mut program = Vec::new();
        let mut inputs = Vec::new();
        compile(ast, table, &mut program, &mut inputs)?;
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for op in &program {
            match op {
                Op::Const(_) | Op::Load(_) => depth += 1,
                Op::Neg => {}
                Op::Bin(_) => depth -= 1,
            }
            max_stack = max_stack.max(depth);
        }
        Ok(Self {
            program,
            inputs,
            max_stack,
        })
    }

    /// Value for one row; `None` when a referenced cell is missing, on
    /// division by zero, or when the result is not finite.
    pub fn evaluate_row(&self, table: &DataTable, row: usize) -> Option<f64> {
        let columns = table.columns();
        if self.inputs.iter().any(|&c| columns[c].is_missing(row)) {
            return None;
        }
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_stack);
        for op in &self.program {
            match *op {
                Op::Const(v) => stack.push(v),
                Op::Load(c) => stack.push(columns[c].number(row)?),
                Op::Neg => {
                    let v = stack.pop()?;
                    stack.push(-v);
                }
                Op::Bin(op) => {
                    let rhs = stack.pop()?;
                    let lhs = stack.pop()?;
                    stack.push(op.apply(lhs, rhs)?);
                }
            }
        }
        stack.pop().filter(|v| v.is_finite())
    }
}

fn compile(e: &Expr, table: &DataTable, program: &mut Vec<Op>, inputs: &mut Vec<usize>) -> Result<()> {
    match e {
        Expr::Num(v) => program.push(Op::Const(*v)),
        Expr::Ref(name) => {
            let idx = table
                .column_index(name)
                .map_err(|_| Error::UnknownFeature {
                    name: name.clone(),
                    available: candidates(table, name),
                })?;
            let col = &table.columns()[idx];
            if col.kind() != ColumnKind::Numeric {
                return Err(Error::Validation(format!(
                    "feature `{name}` is categorical and cannot be used in arithmetic"
                )));
            }
            if !inputs.contains(&idx) {
                inputs.push(idx);
            }
            program.push(Op::Load(idx));
        }
        Expr::Group(inner) => compile(inner, table, program, inputs)?,
        Expr::Neg(inner) => {
            compile(inner, table, program, inputs)?;
            program.push(Op::Neg);
        }
        Expr::Binary { op, lhs, rhs } => {
            compile(lhs, table, program, inputs)?;
            compile(rhs, table, program, inputs)?;
            program.push(Op::Bin(*op));
        }
    }
    Ok(())
}

/// Evaluate `ast` on a single row of `table`.
pub fn evaluate_row(ast: &Expr, table: &DataTable, row: usize) -> Result<Option<f64>> {
    if row >= table.n_rows() {
        return Err(Error::NotFound(format!("row {row}")));
    }
    Ok(BoundExpr::bind(ast, table)?.evaluate_row(table, row))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedColumn {
    pub values: Vec<Option<f64>>,
    /// `None` when every row evaluated to missing.
    pub bins: Option<BinSpec>,
}

/// Evaluate `ast` on every row and bin the resulting column.
pub fn evaluate_column(ast: &Expr, table: &DataTable) -> Result<DerivedColumn> {
    let bound = BoundExpr::bind(ast, table)?;
    let values: Vec<Option<f64>> = (0..table.n_rows())
        .map(|r| bound.evaluate_row(table, r))
        .collect();
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let bins = if present.is_empty() {
        None
    } else {
        Some(BinSpec::from_values("derived", present.into_iter(), table.bin_cap())?)
    };
    Ok(DerivedColumn { values, bins })
}

/// A named custom attribute. Only `name` and `source_text` cross the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CustomMetricWire", into = "CustomMetricWire")]
pub struct CustomMetricDef {
    pub name: String,
    pub source_text: String,
    pub ast: Expr,
}

#[derive(Serialize, Deserialize)]
struct CustomMetricWire {
    name: String,
    source_text: String,
}

impl TryFrom<CustomMetricWire> for CustomMetricDef {
    type Error = Error;

    fn try_from(w: CustomMetricWire) -> Result<Self> {
        CustomMetricDef::new(w.name, w.source_text)
    }
}

impl From<CustomMetricDef> for CustomMetricWire {
    fn from(d: CustomMetricDef) -> Self {
        Self {
            name: d.name,
            source_text: d.source_text,
        }
    }
}

impl CustomMetricDef {
    pub fn new(name: impl Into<String>, source_text: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let source_text = source_text.into();
        if name.trim().is_empty() {
            return Err(Error::Validation("custom metric name is empty".into()));
        }
        let ast = parse(&source_text)?;
        Ok(Self {
            name,
            source_text,
            ast,
        })
    }

    /// Evaluate against `table` and return the derived numeric column named
    /// after the metric. The name must not clash with an existing column.
    pub fn derive(&self, table: &DataTable) -> Result<(Column, Option<BinSpec>)> {
        if table.column_index(&self.name).is_ok() {
            return Err(Error::Validation(format!(
                "custom metric `{}` collides with a dataset column",
                self.name
            )));
        }
        let derived = evaluate_column(&self.ast, table)?;
        let bins = derived.bins.map(|mut b| {
            b.feature = self.name.clone();
            b
        });
        Ok((Column::numeric(self.name.clone(), derived.values)?, bins))
    }
}
