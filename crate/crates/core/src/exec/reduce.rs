use serde::Serialize;

use super::ExecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReduceOp {
    Min,
    Max,
    Sum,
}

impl ReduceOp {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
            ReduceOp::Sum => a + b,
        }
    }
}

/// Combines per-rank values along a fixed binary tree over rank ids:
/// `(0,1), (2,3), ...`, then the same on the partial results. An odd last
/// element is carried up unchanged. The result depends only on the values
/// and their rank order, never on when they were produced.
pub fn ordered_reduce(values: &[f64], op: ReduceOp) -> Result<f64, ExecError> {
    if values.is_empty() {
        return Err(ExecError::EmptyReduction);
    }
    let mut level = values.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match *pair {
                [a, b] => op.apply(a, b),
                [a] => a,
                _ => unreachable!(),
            })
            .collect();
    }
    Ok(level[0])
}
