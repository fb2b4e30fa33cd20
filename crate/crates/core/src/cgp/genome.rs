use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Node, OperatorSet, RuleExpression, Terminal, TERMINAL_COUNT};
use crate::error::{Error, Result};

const GENES_PER_NODE: usize = 3;

/// Grid dimensions of a single-row Cartesian program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeShape {
    pub n_inputs: usize,
    pub n_columns: usize,
    pub levels_back: usize,
}

impl Default for GenomeShape {
    fn default() -> Self {
        Self {
            n_inputs: TERMINAL_COUNT,
            n_columns: 12,
            levels_back: 12,
        }
    }
}

impl GenomeShape {
    pub fn gene_count(&self) -> usize {
        self.n_columns * GENES_PER_NODE + 1
    }

    fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_inputs > TERMINAL_COUNT {
            return Err(Error::GenomeShape(format!(
                "n_inputs must be in 1..={TERMINAL_COUNT}, got {}",
                self.n_inputs
            )));
        }
        if self.levels_back == 0 && self.n_columns > 0 {
            return Err(Error::GenomeShape("levels_back must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of values a connection gene of column `column` may take.
    fn connection_range(&self, column: usize) -> usize {
        self.n_inputs + column.min(self.levels_back)
    }

    /// Maps `u < connection_range(column)` onto a legal address.
    fn connection_address(&self, column: usize, u: usize) -> usize {
        if u < self.n_inputs {
            u
        } else {
            let first = column - column.min(self.levels_back);
            self.n_inputs + first + (u - self.n_inputs)
        }
    }

    fn is_legal_connection(&self, column: usize, address: usize) -> bool {
        if address < self.n_inputs {
            return true;
        }
        let node = address - self.n_inputs;
        node < column && column - node <= self.levels_back
    }
}

/// Integer-encoded single-row Cartesian program.
///
/// `genes` holds `(function, lhs, rhs)` per column. Connection genes address
/// terminals `0..n_inputs` first, then internal nodes `n_inputs + column`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    pub n_inputs: usize,
    pub n_columns: usize,
    pub levels_back: usize,
    pub genes: Vec<usize>,
    pub output_gene: usize,
}

impl Genome {
    pub fn new(shape: GenomeShape, genes: Vec<usize>, output_gene: usize) -> Self {
        Self {
            n_inputs: shape.n_inputs,
            n_columns: shape.n_columns,
            levels_back: shape.levels_back,
            genes,
            output_gene,
        }
    }

    pub fn shape(&self) -> GenomeShape {
        GenomeShape {
            n_inputs: self.n_inputs,
            n_columns: self.n_columns,
            levels_back: self.levels_back,
        }
    }

    /// Draws every gene uniformly from its legal range.
    pub fn random<R: Rng + ?Sized>(shape: GenomeShape, ops: &OperatorSet, rng: &mut R) -> Self {
        let mut genes = Vec::with_capacity(shape.n_columns * GENES_PER_NODE);
        for column in 0..shape.n_columns {
            genes.push(rng.random_range(0..ops.len()));
            for _ in 0..2 {
                let u = rng.random_range(0..shape.connection_range(column));
                genes.push(shape.connection_address(column, u));
            }
        }
        let output_gene = rng.random_range(0..shape.n_inputs + shape.n_columns);
        Self::new(shape, genes, output_gene)
    }

    /// Genome encoding `y * (x - w * y)` in its first three columns, with the
    /// remaining columns filled by inactive `1.0 + node` chains. Requires the
    /// default operator order and at least three columns.
    pub fn oja(shape: GenomeShape) -> Self {
        assert!(shape.n_columns >= 3 && shape.n_inputs == TERMINAL_COUNT);
        // ADD=0, SUB=1, MUL=2; terminals w=0, x=1, y=2, one=3
        let mut genes = vec![
            2, 0, 2, // w * y
            1, 1, 4, // x - (w * y)
            2, 2, 5, // y * (x - w * y)
        ];
        for column in 3..shape.n_columns {
            genes.extend([0, 3, shape.n_inputs + column - 1]);
        }
        Self::new(shape, genes, 6)
    }

    /// Total gene count including the output gene, which has index
    /// `genes.len()` in error messages and mutation bookkeeping.
    pub fn gene_count(&self) -> usize {
        self.genes.len() + 1
    }

    pub fn validate(&self, ops: &OperatorSet) -> Result<()> {
        let shape = self.shape();
        shape.validate()?;
        if self.genes.len() != self.n_columns * GENES_PER_NODE {
            return Err(Error::GenomeShape(format!(
                "expected {} genes for {} columns, got {}",
                self.n_columns * GENES_PER_NODE,
                self.n_columns,
                self.genes.len()
            )));
        }
        for (index, &gene) in self.genes.iter().enumerate() {
            let column = index / GENES_PER_NODE;
            if index % GENES_PER_NODE == 0 {
                if gene >= ops.len() {
                    return Err(Error::MalformedGene {
                        index,
                        reason: format!("function index {gene} >= {}", ops.len()),
                    });
                }
            } else if !shape.is_legal_connection(column, gene) {
                return Err(Error::MalformedGene {
                    index,
                    reason: format!("column {column} cannot connect to address {gene}"),
                });
            }
        }
        if self.output_gene >= self.n_inputs + self.n_columns {
            return Err(Error::MalformedGene {
                index: self.genes.len(),
                reason: format!("output address {} out of range", self.output_gene),
            });
        }
        Ok(())
    }

    /// Flags of the columns reachable from the output gene.
    pub fn active_columns(&self) -> Vec<bool> {
        let mut active = vec![false; self.n_columns];
        let mut stack = vec![self.output_gene];
        while let Some(address) = stack.pop() {
            if address < self.n_inputs {
                continue;
            }
            let column = address - self.n_inputs;
            if column >= self.n_columns || active[column] {
                continue;
            }
            active[column] = true;
            let base = column * GENES_PER_NODE;
            stack.push(self.genes[base + 1]);
            stack.push(self.genes[base + 2]);
        }
        active
    }

    /// Whether gene `index` can influence the phenotype.
    pub fn is_gene_active(&self, index: usize) -> bool {
        if index >= self.genes.len() {
            return true;
        }
        self.active_columns()[index / GENES_PER_NODE]
    }

    /// Genotype-to-phenotype map: the DAG of active nodes only.
    pub fn decode(&self, ops: &OperatorSet) -> Result<RuleExpression> {
        self.validate(ops)?;
        let active = self.active_columns();
        // address -> node index in the expression
        let mut slot: Vec<Option<usize>> = vec![None; self.n_inputs + self.n_columns];
        let mut nodes = Vec::new();
        let place = |address: usize, nodes: &mut Vec<Node>, slot: &mut Vec<Option<usize>>| {
            if let Some(existing) = slot[address] {
                return existing;
            }
            // columns are visited in order, so internal nodes are placed already
            let terminal = Terminal::from_input_index(address).expect("validated terminal");
            nodes.push(Node::Terminal(terminal));
            slot[address] = Some(nodes.len() - 1);
            nodes.len() - 1
        };
        for column in (0..self.n_columns).filter(|&c| active[c]) {
            let base = column * GENES_PER_NODE;
            let op = ops.get(self.genes[base]).expect("validated function gene");
            let lhs = place(self.genes[base + 1], &mut nodes, &mut slot);
            let rhs = place(self.genes[base + 2], &mut nodes, &mut slot);
            nodes.push(Node::Binary { op, lhs, rhs });
            slot[self.n_inputs + column] = Some(nodes.len() - 1);
        }
        let root = place(self.output_gene, &mut nodes, &mut slot);
        Ok(RuleExpression::from_parts(nodes, root))
    }

    /// Point mutation: every gene (output gene included) is resampled
    /// uniformly from its legal range with probability `per_gene_rate`.
    pub fn mutate<R: Rng + ?Sized>(&self, per_gene_rate: f64, ops: &OperatorSet, rng: &mut R) -> Genome {
        self.mutate_tracked(per_gene_rate, ops, rng).0
    }

    /// Like [`Genome::mutate`], also returning the indices of the genes that
    /// were selected for resampling (the resampled value may equal the old one).
    pub fn mutate_tracked<R: Rng + ?Sized>(
        &self,
        per_gene_rate: f64,
        ops: &OperatorSet,
        rng: &mut R,
    ) -> (Genome, Vec<usize>) {
        assert!(
            per_gene_rate > 0.0 && per_gene_rate <= 1.0,
            "per_gene_rate must be in (0, 1], got {per_gene_rate}"
        );
        let shape = self.shape();
        let mut child = self.clone();
        let mut touched = Vec::new();
        for index in 0..child.genes.len() {
            if !rng.random_bool(per_gene_rate) {
                continue;
            }
            let column = index / GENES_PER_NODE;
            child.genes[index] = if index % GENES_PER_NODE == 0 {
                rng.random_range(0..ops.len())
            } else {
                let u = rng.random_range(0..shape.connection_range(column));
                shape.connection_address(column, u)
            };
            touched.push(index);
        }
        if rng.random_bool(per_gene_rate) {
            child.output_gene = rng.random_range(0..self.n_inputs + self.n_columns);
            touched.push(self.genes.len());
        }
        (child, touched)
    }
}
