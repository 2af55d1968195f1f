use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Encoding, Model, Predictor};
use crate::error::Result;
use crate::population::Population;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    /// Rows with `column value <= threshold` go left.
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

pub(crate) fn predict(nodes: &[TreeNode], encoding: &Encoding, x: &[f64]) -> f64 {
    let mut at = 0;
    loop {
        match nodes[at] {
            TreeNode::Leaf { value, .. } => return value,
            TreeNode::Split {
                column,
                threshold,
                left,
                right,
            } => at = if encoding.value(column, x) <= threshold { left } else { right },
        }
    }
}

struct Builder<'a> {
    design: &'a [Vec<f64>],
    y: &'a [f64],
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    column: usize,
    threshold: f64,
    sse: f64,
}

fn sse_two_pass(y: &[f64], rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    rows.iter().map(|&r| (y[r] - mean) * (y[r] - mean)).sum()
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let value = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(TreeNode::Leaf {
            value,
            samples: rows.len(),
        });
        self.nodes.len() - 1
    }

    /// Exhaustive search over midpoints of consecutive distinct values.
    /// Ties keep the earliest column, then the lowest threshold.
    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let width = self.design.first().map_or(0, Vec::len);
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let n = rows.len();
        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for c in 0..width {
            sorted.sort_by(|&a, &b| self.design[a][c].total_cmp(&self.design[b][c]).then(a.cmp(&b)));
            let (mut left_sum, mut left_sq) = (0.0, 0.0);
            for pos in 0..n - 1 {
                let r = sorted[pos];
                left_sum += self.y[r];
                left_sq += self.y[r] * self.y[r];
                let here = self.design[r][c];
                let next = self.design[sorted[pos + 1]][c];
                if here == next {
                    continue;
                }
                let nl = (pos + 1) as f64;
                let nr = (n - pos - 1) as f64;
                let right_sum = total - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
                if best.as_ref().is_none_or(|b| sse < b.sse) {
                    best = Some(BestSplit {
                        column: c,
                        threshold: here + (next - here) / 2.0,
                        sse,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth_left: usize) -> usize {
        if depth_left == 0 || rows.len() < 2 {
            return self.leaf(&rows);
        }
        let first = self.y[rows[0]];
        if rows.iter().all(|&r| self.y[r] == first) {
            return self.leaf(&rows);
        }
        let parent = sse_two_pass(self.y, &rows);
        let split = match self.best_split(&rows) {
            Some(s) if s.sse < parent - 1e-12 * (1.0 + parent) => s,
            _ => return self.leaf(&rows),
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&row| self.design[row][split.column] <= split.threshold);
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
        let left = self.grow(l, depth_left - 1);
        let right = self.grow(r, depth_left - 1);
        self.nodes[at] = TreeNode::Split {
            column: split.column,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

/// Greedy CART regression tree minimizing squared error.
pub fn fit_tree(pop: &Population, max_depth: usize) -> Result<Predictor> {
    let encoding = Encoding::for_schema(pop.schema());
    let design = encoding.design(pop);
    let y = pop.labels();
    let mut builder = Builder {
        design: &design,
        y: &y,
        nodes: Vec::new(),
    };
    builder.grow((0..pop.len()).collect(), max_depth);
    let nodes = builder.nodes;
    Ok(Predictor::fitted(pop.schema(), encoding, Model::DecisionTree { max_depth, nodes }))
}
