//! Conservative algebraic simplification and the infix printer.
//!
//! Rewrites applied bottom-up:
//! - constant folding (only when the folded value is finite)
//! - `e + 0`, `0 + e`, `e - 0` to `e`
//! - `e * 0`, `0 * e` to `0`
//! - `e * 1`, `1 * e` to `e`
//! - `e - e` to `0`
//!
//! No distribution or factoring is attempted.

use std::fmt;

use super::{Operator, RuleExpression, Terminal};

/// Tree form of a rule kernel.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Leaf(Terminal),
    Binary(Operator, Box<Term>, Box<Term>),
}

impl Term {
    fn constant(&self) -> Option<f64> {
        match self {
            Term::Leaf(Terminal::Const(c)) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, value: f64) -> bool {
        self.constant() == Some(value)
    }

    pub fn simplified(self) -> Term {
        match self {
            Term::Leaf(_) => self,
            Term::Binary(op, lhs, rhs) => combine(op, lhs.simplified(), rhs.simplified()),
        }
    }
}

fn zero() -> Term {
    Term::Leaf(Terminal::Const(0.0))
}

fn combine(op: Operator, lhs: Term, rhs: Term) -> Term {
    if let (Some(a), Some(b)) = (lhs.constant(), rhs.constant()) {
        let folded = op.apply(a, b);
        if folded.is_finite() {
            return Term::Leaf(Terminal::Const(folded));
        }
    }
    match op {
        Operator::Add if lhs.is_const(0.0) => rhs,
        Operator::Add if rhs.is_const(0.0) => lhs,
        Operator::Sub if rhs.is_const(0.0) => lhs,
        Operator::Sub if lhs == rhs => zero(),
        Operator::Mul if lhs.is_const(0.0) || rhs.is_const(0.0) => zero(),
        Operator::Mul if lhs.is_const(1.0) => rhs,
        Operator::Mul if rhs.is_const(1.0) => lhs,
        _ => Term::Binary(op, Box::new(lhs), Box::new(rhs)),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Leaf(Terminal::W) => f.write_str("w"),
            Term::Leaf(Terminal::X) => f.write_str("x"),
            Term::Leaf(Terminal::Y) => f.write_str("y"),
            // Debug formatting is the shortest string that parses back exactly
            Term::Leaf(Terminal::Const(c)) => write!(f, "{c:?}"),
            Term::Binary(op, lhs, rhs) => write!(f, "({lhs} {op} {rhs})"),
        }
    }
}

/// Simplified copy of `expr`.
pub fn simplify(expr: &RuleExpression) -> RuleExpression {
    RuleExpression::from_term(&expr.to_term().simplified())
}

/// Fully parenthesized infix form of the simplified expression.
pub fn to_infix(expr: &RuleExpression) -> String {
    expr.to_term().simplified().to_string()
}
