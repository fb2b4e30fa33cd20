//! Cartesian genetic programs over `{+, -, *}` and the terminals `w`, `x`, `y`
//! and the constant `1.0`.

mod expr;
mod genome;
mod parse;
mod simplify;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use expr::{Node, RuleExpression};
pub use genome::{Genome, GenomeShape};
pub use parse::{parse_rule, ParseError};
pub use simplify::{simplify, to_infix, Term};

/// Binary operators available to rule kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    Add,
    Sub,
    Mul,
}

impl Operator {
    #[inline]
    pub fn apply(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Operator::Add => lhs + rhs,
            Operator::Sub => lhs - rhs,
            Operator::Mul => lhs * rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Add => "+",
            Operator::Sub => "-",
            Operator::Mul => "*",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Ordered, non-empty list of operators addressed by a genome's function genes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorSet(Vec<Operator>);

impl OperatorSet {
    pub fn new(operators: Vec<Operator>) -> Option<Self> {
        if operators.is_empty() {
            None
        } else {
            Some(Self(operators))
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, index: usize) -> Option<Operator> {
        self.0.get(index).copied()
    }

    pub fn operators(&self) -> &[Operator] {
        &self.0
    }
}

impl Default for OperatorSet {
    fn default() -> Self {
        Self(vec![Operator::Add, Operator::Sub, Operator::Mul])
    }
}

/// Leaf of a rule kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    /// Synaptic weight `w_j`.
    W,
    /// Presynaptic activity `x_j`.
    X,
    /// Postsynaptic activity `y`.
    Y,
    Const(f64),
}

impl Terminal {
    /// Terminal addressed by connection gene value `index` (`< 4`).
    pub fn from_input_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Terminal::W),
            1 => Some(Terminal::X),
            2 => Some(Terminal::Y),
            3 => Some(Terminal::Const(1.0)),
            _ => None,
        }
    }

    #[inline]
    pub fn value(self, w: f64, x: f64, y: f64) -> f64 {
        match self {
            Terminal::W => w,
            Terminal::X => x,
            Terminal::Y => y,
            Terminal::Const(c) => c,
        }
    }
}

/// Number of terminals a genome can address: `w`, `x`, `y`, `1.0`.
pub const TERMINAL_COUNT: usize = 4;
