//! Structural-entropy state abstraction: height-2 encoding trees, the
//! path-entropy pooling operator and a refresh-every-`t_up` cache.

mod pooling;
mod tree;

pub use pooling::{pooling_matrix, PathConvention, PoolingMatrix, PoolingOptions};
pub use tree::{
    brute_force_min_entropy, entropy_report, nmi, node_entropy, optimize_partition, total_entropy, CommunityReport,
    EncodingTree, EntropyReport, TreeNode,
};

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::num::Matrix;

/// `[flatten(P · E), E[target]]`, of width `(#communities + 1) · h`.
pub fn abstract_state(p: &PoolingMatrix, emb: &Matrix, target: usize) -> Result<Vec<f64>> {
    let mut out = p.apply(emb)?.into_vec();
    if target >= emb.rows() {
        return Err(Error::Domain(format!("target {target} outside 0..{}", emb.rows())));
    }
    out.extend_from_slice(emb.row(target));
    Ok(out)
}

/// `[mean(E), E[target]]`.
pub fn mean_pool_state(emb: &Matrix, target: usize) -> Result<Vec<f64>> {
    if target >= emb.rows() {
        return Err(Error::Domain(format!("target {target} outside 0..{}", emb.rows())));
    }
    let mut out = mean_rows(emb);
    out.extend_from_slice(emb.row(target));
    Ok(out)
}

pub fn mean_rows(emb: &Matrix) -> Vec<f64> {
    let w = 1.0 / emb.rows().max(1) as f64;
    let mut out = vec![0.0; emb.cols()];
    for row in emb.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Abstraction {
    pub tree: EncodingTree,
    pub pooling: PoolingMatrix,
    pub built_at: usize,
}

/// Holds the current tree and pooling matrix between refreshes.
#[derive(Debug, Clone)]
pub struct AbstractionCache {
    t_up: usize,
    opts: PoolingOptions,
    current: Option<Abstraction>,
    refreshes: usize,
}

impl AbstractionCache {
    pub fn new(t_up: usize, opts: PoolingOptions) -> Result<Self> {
        if t_up == 0 {
            return Err(Error::Config("t_up must be at least 1".into()));
        }
        Ok(AbstractionCache { t_up, opts, current: None, refreshes: 0 })
    }

    pub fn t_up(&self) -> usize {
        self.t_up
    }

    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    pub fn current(&self) -> Option<&Abstraction> {
        self.current.as_ref()
    }

    /// Rebuilds when `t mod t_up == 0`, when nothing is cached, or when the node count moved.
    pub fn maybe_refresh(&mut self, t: usize, g: &SocialGraph) -> Result<bool> {
        let stale = self.current.as_ref().is_none_or(|a| a.tree.n() != g.n());
        if !(stale || t.is_multiple_of(self.t_up)) {
            return Ok(false);
        }
        let tree = optimize_partition(g);
        let pooling = pooling_matrix(g, &tree, self.opts)?;
        self.current = Some(Abstraction { tree, pooling, built_at: t });
        self.refreshes += 1;
        Ok(true)
    }

    pub fn pooling(&self) -> Result<&PoolingMatrix> {
        self.current
            .as_ref()
            .map(|a| &a.pooling)
            .ok_or_else(|| Error::Domain("abstraction cache is empty".into()))
    }
}

pub fn maybe_refresh<'a>(t: usize, g: &SocialGraph, cache: &'a mut AbstractionCache) -> Result<(&'a EncodingTree, &'a PoolingMatrix, bool)> {
    let refreshed = cache.maybe_refresh(t, g)?;
    let a = cache.current.as_ref().expect("refresh populates the cache");
    Ok((&a.tree, &a.pooling, refreshed))
}

/// `node_id,community_id`.
pub fn write_partition_csv(tree: &EncodingTree, path: &Path) -> Result<()> {
    let mut s = String::from("node_id,community_id\n");
    for (v, c) in tree.assignment().iter().enumerate() {
        writeln!(s, "{v},{c}").expect("string write");
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn two_triangles() -> SocialGraph {
        SocialGraph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap()
    }

    #[test]
    fn uniform_single_community_equals_mean_state() {
        let e = Matrix::randn(9, 4, 1.0, &mut rng::seeded(1));
        let a = abstract_state(&PoolingMatrix::uniform(9), &e, 3).unwrap();
        let b = mean_pool_state(&e, 3).unwrap();
        assert_eq!(a.len(), 8);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn two_communities_give_two_pooled_blocks() {
        let g = two_triangles();
        let t = optimize_partition(&g);
        let p = pooling_matrix(&g, &t, PoolingOptions::default()).unwrap();
        let e = Matrix::randn(6, 5, 1.0, &mut rng::seeded(2));
        let s = abstract_state(&p, &e, 4).unwrap();
        assert_eq!(s.len(), 3 * 5);
        let dense = p.dense().matmul(&e).unwrap();
        assert_eq!(&s[..10], dense.as_slice());
        assert_eq!(&s[10..], e.row(4));
        assert!(matches!(abstract_state(&p, &Matrix::zeros(7, 5), 0), Err(Error::Stale { .. })));
    }

    #[test]
    fn refresh_schedule() {
        let mut g = two_triangles();
        let mut every = AbstractionCache::new(1, PoolingOptions::default()).unwrap();
        for t in 0..5 {
            assert!(maybe_refresh(t, &g, &mut every).unwrap().2);
        }
        let mut c = AbstractionCache::new(10, PoolingOptions::default()).unwrap();
        let count = (0..10).filter(|&t| c.maybe_refresh(t, &g).unwrap()).count();
        assert_eq!(count, 1);
        assert!(!c.maybe_refresh(11, &g).unwrap());
        g.inject_nodes(&Matrix::zeros(1, 0), crate::graph::Label::Bot).unwrap();
        assert!(c.maybe_refresh(12, &g).unwrap());
        assert_eq!(c.pooling().unwrap().num_nodes(), 7);
        assert!(AbstractionCache::new(0, PoolingOptions::default()).is_err());
    }

    #[test]
    fn partition_csv_layout() {
        let g = two_triangles();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("part.csv");
        write_partition_csv(&optimize_partition(&g), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next(), Some("node_id,community_id"));
        assert_eq!(text.lines().nth(4), Some("3,1"));
    }
}
