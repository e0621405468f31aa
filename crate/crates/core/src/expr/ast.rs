use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    /// Apply the operator; division by zero yields `None`.
    pub fn apply(self, lhs: f64, rhs: f64) -> Option<f64> {
        match self {
            BinOp::Add => Some(lhs + rhs),
            BinOp::Sub => Some(lhs - rhs),
            BinOp::Mul => Some(lhs * rhs),
            BinOp::Div => (rhs != 0.0).then(|| lhs / rhs),
        }
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Expression tree for custom per-row attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Non-negative literal; negative constants are `Neg(Num)`.
    Num(f64),
    Ref(String),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// Parentheses written by the user.
    Group(Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::Ref(name.into())
    }

    pub fn neg(e: Expr) -> Self {
        Expr::Neg(Box::new(e))
    }

    pub fn group(e: Expr) -> Self {
        Expr::Group(Box::new(e))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// The tree with all `Group` nodes removed.
    pub fn without_groups(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::Ref(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.without_groups()),
            Expr::Group(e) => e.without_groups(),
            Expr::Binary { op, lhs, rhs } => {
                Expr::binary(*op, lhs.without_groups(), rhs.without_groups())
            }
        }
    }

    /// Equality ignoring user grouping, which never changes meaning.
    pub fn structurally_eq(&self, other: &Expr) -> bool {
        self.without_groups() == other.without_groups()
    }

    /// Referenced feature names in first-occurrence order.
    pub fn references(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match e {
                Expr::Num(_) => {}
                Expr::Ref(name) => {
                    if !out.contains(&name.as_str()) {
                        out.push(name);
                    }
                }
                Expr::Neg(e) | Expr::Group(e) => walk(e, out),
                Expr::Binary { lhs, rhs, .. } => {
                    walk(lhs, out);
                    walk(rhs, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}
