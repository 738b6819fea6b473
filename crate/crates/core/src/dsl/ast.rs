use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Variable at `lag` quarters before the evaluation quarter (0 = current).
    Var { name: String, lag: u8 },
    /// Sum of a flow variable over the current and three prior quarters.
    Roll4(String),
    Neg(Box<Expr>),
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var { name: name.to_string(), lag: 0 }
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin { op, .. } => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }

    /// Every variable name referenced, with duplicates.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var { name, .. } | Expr::Roll4(name) => out.push(name),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin { lhs, rhs, .. } | Expr::Min(lhs, rhs) | Expr::Max(lhs, rhs) => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var { name, lag: 0 } => f.write_str(name),
            Expr::Var { name, lag } => write!(f, "{name}_{{t-{lag}}}"),
            Expr::Roll4(name) => write!(f, "roll4({name})"),
            Expr::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Bin { op, lhs, rhs } => {
                let p = op.precedence();
                if lhs.precedence() < p {
                    write!(f, "({lhs})")?;
                } else {
                    write!(f, "{lhs}")?;
                }
                write!(f, "{}", op.symbol())?;
                // Right operands of equal precedence need parentheses to keep
                // the tree shape, and a leading minus reads badly after an operator.
                if rhs.precedence() <= p || matches!(**rhs, Expr::Neg(_)) {
                    write!(f, "({rhs})")
                } else {
                    write!(f, "{rhs}")
                }
            }
            Expr::Min(a, b) => write!(f, "min{{{a},{b}}}"),
            Expr::Max(a, b) => write!(f, "max{{{a},{b}}}"),
        }
    }
}

/// A parsed pricing criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionExpr {
    pub expr: Expr,
}

impl fmt::Display for CriterionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}
