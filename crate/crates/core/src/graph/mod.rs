//! Attributed, undirected social graph with a perturbation ledger.

pub mod io;
pub mod stats;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Matrix;
use crate::rng;

pub use stats::{graph_stats, GraphStats, StatsOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Human,
    Bot,
    Unknown,
}

impl Label {
    pub const HUMAN: usize = 0;
    pub const BOT: usize = 1;

    pub fn class(self) -> Option<usize> {
        match self {
            Label::Human => Some(Self::HUMAN),
            Label::Bot => Some(Self::BOT),
            Label::Unknown => None,
        }
    }

    pub fn from_code(code: i64) -> Option<Label> {
        match code {
            0 => Some(Label::Human),
            1 => Some(Label::Bot),
            -1 => Some(Label::Unknown),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            Label::Human => 0,
            Label::Bot => 1,
            Label::Unknown => -1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Masks {
    /// Stratified split of the labeled nodes by class.
    pub fn stratified(labels: &[Label], train: f64, val: f64, seed: u64) -> Masks {
        let mut r = rng::derive(seed, 0x5_1117);
        let mut masks = Masks::default();
        for class in [Label::Human, Label::Bot] {
            let mut ids: Vec<usize> =
                labels.iter().enumerate().filter(|(_, l)| **l == class).map(|(i, _)| i).collect();
            ids.shuffle(&mut r);
            let n = ids.len();
            let n_train = (train * n as f64).round() as usize;
            let n_val = ((val * n as f64).round() as usize).min(n - n_train);
            masks.train.extend_from_slice(&ids[..n_train]);
            masks.val.extend_from_slice(&ids[n_train..n_train + n_val]);
            masks.test.extend_from_slice(&ids[n_train + n_val..]);
        }
        masks.train.sort_unstable();
        masks.val.sort_unstable();
        masks.test.sort_unstable();
        masks
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::Structural(format!("mask index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Structural(format!("node {i} appears in two masks")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// One entry of the perturbation ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Perturbation {
    AddEdge { u: usize, v: usize },
    RemoveEdge { u: usize, v: usize },
    InjectNode { id: usize },
}

/// Caps on injected nodes and on edge operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub nodes: Option<usize>,
    pub edges: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    adj: Vec<BTreeSet<usize>>,
    num_edges: usize,
    features: Matrix,
    labels: Vec<Label>,
    pub masks: Masks,
    log: Vec<Perturbation>,
    budget: Budget,
    edge_ops: usize,
    injected: usize,
}

#[inline]
fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl SocialGraph {
    pub fn new(features: Matrix, labels: Vec<Label>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        features.check_finite("node features")?;
        Ok(SocialGraph {
            adj: vec![BTreeSet::new(); labels.len()],
            num_edges: 0,
            features,
            labels,
            masks: Masks::default(),
            log: Vec::new(),
            budget: Budget::default(),
            edge_ops: 0,
            injected: 0,
        })
    }

    /// Featureless graph (d = 0) with all labels unknown; handy for structure-only work.
    pub fn structural(n: usize) -> Self {
        Self::new(Matrix::zeros(n, 0), vec![Label::Unknown; n]).expect("consistent shapes")
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::structural(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn with_masks(mut self, masks: Masks) -> Result<Self> {
        masks.validate(self.n())?;
        self.masks = masks;
        Ok(self)
    }

    pub fn set_masks(&mut self, masks: Masks) -> Result<()> {
        masks.validate(self.n())?;
        self.masks = masks;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Label {
        self.labels[v]
    }

    /// Class ids with unknown labels mapped to human; callers mask them out.
    pub fn class_ids(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.class().unwrap_or(Label::HUMAN)).collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(BTreeSet::len).collect()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[v].iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n() && self.adj[u].contains(&v)
    }

    /// All edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges);
        for (u, nb) in self.adj.iter().enumerate() {
            out.extend(nb.range(u + 1..).map(|&v| (u, v)));
        }
        out
    }

    fn check_new_edge(&self, u: usize, v: usize) -> Result<()> {
        if u >= self.n() || v >= self.n() {
            return Err(Error::Structural(format!("edge ({u},{v}) outside {} nodes", self.n())));
        }
        if u == v {
            return Err(Error::Structural(format!("self-loop at {u}")));
        }
        if self.adj[u].contains(&v) {
            return Err(Error::Structural(format!("duplicate edge ({u},{v})")));
        }
        Ok(())
    }

    /// Adds a clean (unlogged) edge.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        self.check_new_edge(u, v)?;
        self.adj[u].insert(v);
        self.adj[v].insert(u);
        self.num_edges += 1;
        Ok(())
    }

    fn remove_edge_raw(&mut self, u: usize, v: usize) -> Result<()> {
        if !self.has_edge(u, v) {
            return Err(Error::Structural(format!("edge ({u},{v}) not present")));
        }
        self.adj[u].remove(&v);
        self.adj[v].remove(&u);
        self.num_edges -= 1;
        Ok(())
    }

    fn charge_edge_op(&self) -> Result<()> {
        if let Some(cap) = self.budget.edges {
            if self.edge_ops >= cap {
                return Err(Error::Budget(format!("edge budget {cap} exhausted")));
            }
        }
        Ok(())
    }

    /// Adds an adversarial edge, charged to the edge budget and logged.
    pub fn perturb_add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        self.check_new_edge(u, v)?;
        self.charge_edge_op()?;
        self.add_edge(u, v)?;
        let (a, b) = ordered(u, v);
        self.log.push(Perturbation::AddEdge { u: a, v: b });
        self.edge_ops += 1;
        Ok(())
    }

    /// Removes an edge as an adversarial operation (DICE), charged and logged.
    pub fn perturb_remove_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if !self.has_edge(u, v) {
            return Err(Error::Structural(format!("edge ({u},{v}) not present")));
        }
        self.charge_edge_op()?;
        self.remove_edge_raw(u, v)?;
        let (a, b) = ordered(u, v);
        self.log.push(Perturbation::RemoveEdge { u: a, v: b });
        self.edge_ops += 1;
        Ok(())
    }

    /// Appends isolated nodes with the given features, labeled `label`.
    pub fn inject_nodes(&mut self, features: &Matrix, label: Label) -> Result<Vec<usize>> {
        if features.rows() == 0 {
            return Ok(Vec::new());
        }
        if features.cols() != self.feature_dim() {
            return Err(Error::Dimension(format!(
                "injected features have width {}, graph has {}",
                features.cols(),
                self.feature_dim()
            )));
        }
        features.check_finite("injected features")?;
        if let Some(cap) = self.budget.nodes {
            if self.injected + features.rows() > cap {
                return Err(Error::Budget(format!(
                    "injecting {} nodes exceeds node budget {cap} ({} used)",
                    features.rows(),
                    self.injected
                )));
            }
        }
        let start = self.n();
        self.features = self.features.vstack(features)?;
        let ids: Vec<usize> = (start..start + features.rows()).collect();
        for &id in &ids {
            self.adj.push(BTreeSet::new());
            self.labels.push(label);
            self.log.push(Perturbation::InjectNode { id });
        }
        self.injected += ids.len();
        Ok(ids)
    }

    pub fn set_budget(&mut self, budget: Budget) {
        self.budget = budget;
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn perturbation_log(&self) -> &[Perturbation] {
        &self.log
    }

    /// Number of edge operations charged so far.
    pub fn edge_ops(&self) -> usize {
        self.edge_ops
    }

    pub fn injected_nodes(&self) -> Vec<usize> {
        self.log
            .iter()
            .filter_map(|p| match p {
                Perturbation::InjectNode { id } => Some(*id),
                _ => None,
            })
            .collect()
    }

    pub fn added_edges(&self) -> Vec<(usize, usize)> {
        self.log
            .iter()
            .filter_map(|p| match p {
                Perturbation::AddEdge { u, v } => Some((*u, *v)),
                _ => None,
            })
            .collect()
    }

    /// Undoes the perturbation ledger, returning the clean graph.
    pub fn reconstruct_clean(&self) -> Result<SocialGraph> {
        let mut g = self.clone();
        for p in self.log.iter().rev() {
            match *p {
                Perturbation::AddEdge { u, v } => g.remove_edge_raw(u, v)?,
                Perturbation::RemoveEdge { u, v } => g.add_edge(u, v)?,
                Perturbation::InjectNode { id } => {
                    if id + 1 != g.n() || g.degree(id) != 0 {
                        return Err(Error::Structural(format!(
                            "injected node {id} is not the trailing isolated node"
                        )));
                    }
                    g.adj.pop();
                    g.labels.pop();
                }
            }
        }
        let n = g.adj.len();
        g.features = g.features.select_rows(&(0..n).collect::<Vec<_>>());
        g.log.clear();
        g.edge_ops = 0;
        g.injected = 0;
        g.budget = Budget::default();
        Ok(g)
    }

    /// Clears the ledger without undoing it; the current state becomes "clean".
    pub fn commit(&mut self) {
        self.log.clear();
        self.edge_ops = 0;
        self.injected = 0;
    }

    /// Dense `D̃^{-1/2}(A + I)D̃^{-1/2}`.
    pub fn normalized_adjacency(&self) -> Matrix {
        let n = self.n();
        let inv = self.inv_sqrt_degrees();
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = inv[i] * inv[i];
            for j in self.neighbors(i) {
                a[(i, j)] = inv[i] * inv[j];
            }
        }
        a
    }

    /// `1/sqrt(deg + 1)` per node.
    pub fn inv_sqrt_degrees(&self) -> Vec<f64> {
        self.adj.iter().map(|nb| 1.0 / ((nb.len() + 1) as f64).sqrt()).collect()
    }

    /// `Â · x` by an edge-list loop; equals the dense product.
    pub fn propagate(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.n() {
            return Err(Error::Dimension(format!(
                "propagating {} rows over {} nodes",
                x.rows(),
                self.n()
            )));
        }
        let inv = self.inv_sqrt_degrees();
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..self.n() {
            let (di, row_i) = (inv[i], x.row(i));
            let o = out.row_mut(i);
            for (ov, xv) in o.iter_mut().zip(row_i) {
                *ov = di * di * xv;
            }
            for j in self.adj[i].iter() {
                let w = di * inv[*j];
                for (ov, xv) in o.iter_mut().zip(x.row(*j)) {
                    *ov += w * xv;
                }
            }
        }
        Ok(out)
    }

    /// Row `v` of `Â · x` only.
    pub fn propagate_row(&self, x: &Matrix, v: usize) -> Vec<f64> {
        let dv = 1.0 / ((self.degree(v) + 1) as f64).sqrt();
        let mut out: Vec<f64> = x.row(v).iter().map(|xv| dv * dv * xv).collect();
        for j in self.neighbors(v) {
            let w = dv / ((self.degree(j) + 1) as f64).sqrt();
            for (o, xv) in out.iter_mut().zip(x.row(j)) {
                *o += w * xv;
            }
        }
        out
    }

    /// Relabels nodes: new id of node `i` is `perm[i]`. Ledger is dropped.
    pub fn permuted(&self, perm: &[usize]) -> Result<SocialGraph> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut inv = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let feats = self.features.select_rows(&inv);
        let labels = inv.iter().map(|&i| self.labels[i]).collect();
        let mut g = SocialGraph::new(feats, labels)?;
        for (u, v) in self.edges() {
            g.add_edge(perm[u], perm[v])?;
        }
        let map = |m: &[usize]| {
            let mut out: Vec<usize> = m.iter().map(|&i| perm[i]).collect();
            out.sort_unstable();
            out
        };
        g.masks = Masks { train: map(&self.masks.train), val: map(&self.masks.val), test: map(&self.masks.test) };
        Ok(g)
    }

    /// Connected components as lists of node ids (BFS order of discovery).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for w in self.neighbors(u) {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feats(n: usize, d: usize) -> Matrix {
        Matrix::filled(n, d, 0.5)
    }

    #[test]
    fn add_edge_basics() {
        let mut g = SocialGraph::structural(2);
        g.add_edge(0, 1).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 1);
        assert!(matches!(g.add_edge(0, 1), Err(Error::Structural(_))));
        assert!(matches!(g.add_edge(1, 0), Err(Error::Structural(_))));
        assert!(matches!(g.add_edge(1, 1), Err(Error::Structural(_))));
    }

    #[test]
    fn normalized_adjacency_small_cases() {
        let g = SocialGraph::structural(1);
        assert_eq!(g.normalized_adjacency().as_slice(), &[1.0]);
        let g = SocialGraph::from_edges(2, &[(0, 1)]).unwrap();
        let a = g.normalized_adjacency();
        for &v in a.as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn inject_nodes_and_budget() {
        let mut g = SocialGraph::new(feats(10, 3), vec![Label::Human; 10]).unwrap();
        let before = g.clone();
        assert!(g.inject_nodes(&Matrix::zeros(0, 3), Label::Bot).unwrap().is_empty());
        assert_eq!(g, before);
        g.set_budget(Budget { nodes: Some(4), edges: None });
        let ids = g.inject_nodes(&feats(3, 3), Label::Bot).unwrap();
        assert_eq!(ids, vec![10, 11, 12]);
        assert_eq!(g.n(), 13);
        assert!(ids.iter().all(|&i| g.degree(i) == 0 && g.label(i) == Label::Bot));
        assert!(matches!(g.inject_nodes(&feats(2, 3), Label::Bot), Err(Error::Budget(_))));
        assert!(matches!(g.inject_nodes(&feats(1, 2), Label::Bot), Err(Error::Dimension(_))));
    }

    #[test]
    fn edge_budget_and_reconstruction() {
        let mut g = SocialGraph::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let clean = g.clone();
        g.set_budget(Budget { nodes: None, edges: Some(2) });
        g.perturb_add_edge(0, 4).unwrap();
        g.perturb_remove_edge(1, 2).unwrap();
        assert!(matches!(g.perturb_add_edge(0, 3), Err(Error::Budget(_))));
        assert_eq!(g.edge_ops(), 2);
        let back = g.reconstruct_clean().unwrap();
        assert_eq!(back.edges(), clean.edges());
        assert_eq!(back, clean);
    }

    #[test]
    fn propagate_matches_dense() {
        let mut r = rng::seeded(5);
        let g = SocialGraph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5)]).unwrap();
        let x = Matrix::randn(6, 3, 1.0, &mut r);
        let dense = g.normalized_adjacency().matmul(&x).unwrap();
        let sparse = g.propagate(&x).unwrap();
        assert!(dense.max_abs_diff(&sparse) < 1e-14);
        for v in 0..6 {
            let row = g.propagate_row(&x, v);
            for (a, b) in row.iter().zip(dense.row(v)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stratified_masks_are_disjoint() {
        let labels: Vec<Label> = (0..50).map(|i| if i % 3 == 0 { Label::Bot } else { Label::Human }).collect();
        let m = Masks::stratified(&labels, 0.6, 0.2, 1);
        assert_eq!(m.train.len() + m.val.len() + m.test.len(), 50);
        m.validate(50).unwrap();
    }

    proptest! {
        #[test]
        fn normalized_adjacency_is_symmetric(edges in proptest::collection::vec((0usize..12, 0usize..12), 0..40)) {
            let mut g = SocialGraph::structural(12);
            for (u, v) in edges {
                let _ = g.add_edge(u, v);
            }
            let a = g.normalized_adjacency();
            prop_assert!(a.max_abs_diff(&a.transpose()) == 0.0);
        }

        #[test]
        fn ledger_round_trip(edges in proptest::collection::vec((0usize..10, 0usize..10), 0..30),
                             extra in proptest::collection::vec((0usize..13, 0usize..13), 0..20)) {
            let mut g = SocialGraph::structural(10);
            for (u, v) in edges {
                let _ = g.add_edge(u, v);
            }
            let clean = g.clone();
            g.inject_nodes(&Matrix::zeros(3, 0), Label::Bot).unwrap();
            for (k, (u, v)) in extra.into_iter().enumerate() {
                if k % 3 == 2 && g.has_edge(u, v) {
                    g.perturb_remove_edge(u, v).unwrap();
                } else {
                    let _ = g.perturb_add_edge(u, v);
                }
            }
            prop_assert_eq!(g.reconstruct_clean().unwrap(), clean);
        }
    }
}
