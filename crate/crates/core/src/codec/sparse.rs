//! Top-L sparsification.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseResidual {
    /// Strictly increasing positions.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl SparseResidual {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }
}

/// Keeps the `min(L, d)` largest-magnitude entries; ties go to the lower index.
pub fn top_l(e: &[f64], keep: usize) -> Result<SparseResidual> {
    if keep == 0 {
        return Err(Error::InvalidArgument("Top-L needs L >= 1".into()));
    }
    let mut order: Vec<usize> = (0..e.len()).collect();
    order.sort_by(|&a, &b| e[b].abs().total_cmp(&e[a].abs()).then(a.cmp(&b)));
    order.truncate(keep.min(e.len()));
    order.sort_unstable();
    Ok(SparseResidual {
        values: order.iter().map(|&i| e[i]).collect(),
        indices: order,
        dim: e.len(),
    })
}
