use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::num::Matrix;

use super::tree::{EncodingTree, TreeNode};

/// Which tree nodes make up the path from a community to one of its leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathConvention {
    /// `H(λ_i) + H(ν_ij)`.
    #[default]
    CommunityAndLeaf,
    /// `H(ν_ij)` only.
    LeafOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolingOptions {
    pub convention: PathConvention,
    pub log_base: f64,
}

impl Default for PoolingOptions {
    fn default() -> Self {
        PoolingOptions { convention: PathConvention::CommunityAndLeaf, log_base: 2.0 }
    }
}

/// Row-stochastic community × node operator, stored sparsely by community.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    community_of: Vec<usize>,
    /// Rows that fell back to uniform weights.
    pub degenerate_rows: usize,
}

impl PoolingMatrix {
    /// One community holding every node, uniform weights: plain mean pooling.
    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / n.max(1) as f64;
        PoolingMatrix { n, rows: vec![(0..n).map(|j| (j, w)).collect()], community_of: vec![0; n], degenerate_rows: 0 }
    }

    pub fn num_communities(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn community_of(&self, v: usize) -> usize {
        self.community_of[v]
    }

    pub fn row(&self, c: usize) -> &[(usize, f64)] {
        &self.rows[c]
    }

    pub fn dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows.len(), self.n);
        for (c, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(c, j)] = w;
            }
        }
        m
    }

    /// `P · E`, one pooled row per community.
    pub fn apply(&self, emb: &Matrix) -> Result<Matrix> {
        if emb.rows() != self.n {
            return Err(Error::Stale { built: self.n, current: emb.rows() });
        }
        let mut out = Matrix::zeros(self.rows.len(), emb.cols());
        for (c, row) in self.rows.iter().enumerate() {
            let o = out.row_mut(c);
            for &(j, w) in row {
                for (ov, ev) in o.iter_mut().zip(emb.row(j)) {
                    *ov += w * ev;
                }
            }
        }
        Ok(out)
    }

    /// Pooled embedding of the community that contains `v`.
    pub fn pooled_row(&self, emb: &Matrix, v: usize) -> Result<Vec<f64>> {
        if emb.rows() != self.n {
            return Err(Error::Stale { built: self.n, current: emb.rows() });
        }
        let mut out = vec![0.0; emb.cols()];
        for &(j, w) in &self.rows[self.community_of[v]] {
            for (ov, ev) in out.iter_mut().zip(emb.row(j)) {
                *ov += w * ev;
            }
        }
        Ok(out)
    }
}

/// Path-entropy weights normalized within each community.
pub fn pooling_matrix(g: &SocialGraph, tree: &EncodingTree, opts: PoolingOptions) -> Result<PoolingMatrix> {
    if g.n() != tree.n() {
        return Err(Error::Stale { built: tree.n(), current: g.n() });
    }
    let mut rows = Vec::with_capacity(tree.num_communities());
    let mut degenerate = 0;
    for c in 0..tree.num_communities() {
        let members = tree.members(c);
        let mut weights = Vec::with_capacity(members.len());
        if tree.volume() > 0 {
            let head = match opts.convention {
                PathConvention::CommunityAndLeaf => tree.node_entropy_in_base(TreeNode::Community(c), opts.log_base)?,
                PathConvention::LeafOnly => 0.0,
            };
            for &v in members {
                weights.push(head + tree.node_entropy_in_base(TreeNode::Leaf(v), opts.log_base)?);
            }
        }
        let total: f64 = weights.iter().sum();
        let row = if total > 0.0 {
            members.iter().zip(&weights).map(|(&v, &w)| (v, w / total)).collect()
        } else {
            degenerate += 1;
            let w = 1.0 / members.len() as f64;
            members.iter().map(|&v| (v, w)).collect()
        };
        rows.push(row);
    }
    Ok(PoolingMatrix { n: g.n(), rows, community_of: tree.assignment().to_vec(), degenerate_rows: degenerate })
}
