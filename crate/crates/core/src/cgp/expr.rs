use smallvec::SmallVec;

use super::{Operator, Terminal, Term};

/// Node of a decoded rule. Binary nodes refer to earlier nodes by index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Terminal(Terminal),
    Binary { op: Operator, lhs: usize, rhs: usize },
}

/// Phenotype of a genome: a topologically ordered DAG whose last node is
/// the root. Every node is reachable from the root.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleExpression {
    nodes: Vec<Node>,
    root: usize,
}

impl RuleExpression {
    /// Builds an expression from raw nodes, dropping nodes the root cannot
    /// reach.
    ///
    /// # Panics
    ///
    /// If a binary node refers to itself or to a later node.
    pub fn from_parts(nodes: Vec<Node>, root: usize) -> Self {
        for (index, node) in nodes.iter().enumerate() {
            if let Node::Binary { lhs, rhs, .. } = *node {
                assert!(lhs < index && rhs < index, "node {index} is not topologically ordered");
            }
        }
        assert!(root < nodes.len(), "root {root} out of range");
        let mut reachable = vec![false; nodes.len()];
        reachable[root] = true;
        for index in (0..=root).rev() {
            if !reachable[index] {
                continue;
            }
            if let Node::Binary { lhs, rhs, .. } = nodes[index] {
                reachable[lhs] = true;
                reachable[rhs] = true;
            }
        }
        let mut remap = vec![usize::MAX; nodes.len()];
        let mut kept = Vec::with_capacity(nodes.len());
        for (index, node) in nodes.into_iter().enumerate().take(root + 1) {
            if !reachable[index] {
                continue;
            }
            let node = match node {
                Node::Binary { op, lhs, rhs } => Node::Binary {
                    op,
                    lhs: remap[lhs],
                    rhs: remap[rhs],
                },
                leaf => leaf,
            };
            remap[index] = kept.len();
            kept.push(node);
        }
        let root = remap[root];
        Self { nodes: kept, root }
    }

    pub fn terminal(terminal: Terminal) -> Self {
        Self {
            nodes: vec![Node::Terminal(terminal)],
            root: 0,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Evaluates the kernel `f(w, x, y)`.
    #[inline]
    pub fn evaluate(&self, w: f64, x: f64, y: f64) -> f64 {
        let mut values: SmallVec<[f64; 32]> = SmallVec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match *node {
                Node::Terminal(t) => t.value(w, x, y),
                Node::Binary { op, lhs, rhs } => op.apply(values[lhs], values[rhs]),
            };
            values.push(value);
        }
        values[self.root]
    }

    /// Expands the DAG into a tree, duplicating shared subexpressions.
    pub fn to_term(&self) -> Term {
        let mut terms: Vec<Term> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let term = match *node {
                Node::Terminal(t) => Term::Leaf(t),
                Node::Binary { op, lhs, rhs } => {
                    Term::Binary(op, Box::new(terms[lhs].clone()), Box::new(terms[rhs].clone()))
                }
            };
            terms.push(term);
        }
        terms.swap_remove(self.root)
    }

    /// Flattens a tree into a DAG without sharing.
    pub fn from_term(term: &Term) -> Self {
        fn push(term: &Term, nodes: &mut Vec<Node>) -> usize {
            let node = match term {
                Term::Leaf(t) => Node::Terminal(*t),
                Term::Binary(op, lhs, rhs) => {
                    let lhs = push(lhs, nodes);
                    let rhs = push(rhs, nodes);
                    Node::Binary { op: *op, lhs, rhs }
                }
            };
            nodes.push(node);
            nodes.len() - 1
        }
        let mut nodes = Vec::new();
        let root = push(term, &mut nodes);
        Self { nodes, root }
    }

    /// Whether the expression contains the terminal anywhere.
    pub fn uses(&self, terminal: Terminal) -> bool {
        self.nodes.contains(&Node::Terminal(terminal))
    }
}
