//! Degree and connectivity statistics of a graph.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::graph::SocialGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    /// CPL is only computed when the largest component has at most this many nodes.
    pub cpl_node_cap: usize,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions { cpl_node_cap: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub acc: Option<f64>,
    /// Average degree `2|E|/n`.
    pub ad: f64,
    /// Size of the largest connected component.
    pub lcc: usize,
    /// Global clustering coefficient.
    pub cc: f64,
    /// Characteristic path length over the largest component (the shortest among ties).
    pub cpl: Option<f64>,
    /// Gini coefficient of the degree sequence.
    pub gc: Option<f64>,
    /// Power-law exponent (continuous MLE, `d_min = 1`).
    pub ple: Option<f64>,
    /// Normalised degree-distribution entropy.
    pub de: Option<f64>,
}

pub fn graph_stats(g: &SocialGraph, opts: &StatsOptions) -> GraphStats {
    let n = g.n();
    let degrees = g.degrees();
    let m = g.num_edges();
    let ad = if n == 0 { 0.0 } else { 2.0 * m as f64 / n as f64 };

    let comps = g.components();
    let lcc = comps.iter().map(|c| c.len()).max().unwrap_or(0);

    // among equally large components the shortest CPL wins, so node ids never matter
    let cpl = if lcc >= 2 && lcc <= opts.cpl_node_cap {
        comps
            .iter()
            .filter(|c| c.len() == lcc)
            .map(|c| characteristic_path_length(g, c))
            .min_by(f64::total_cmp)
    } else {
        None
    };

    let (gc, ple, de) = if m == 0 {
        (None, None, None)
    } else {
        (Some(gini(&degrees)), power_law_exponent(&degrees), distribution_entropy(&degrees))
    };

    GraphStats { acc: None, ad, lcc, cc: clustering_coefficient(g), cpl, gc, ple, de }
}

/// `3 · triangles / connected triples`; zero when there are no triples.
pub fn clustering_coefficient(g: &SocialGraph) -> f64 {
    let mut triples = 0u64;
    let mut closed = 0u64;
    for u in 0..g.n() {
        let d = g.degree(u) as u64;
        triples += d * d.saturating_sub(1) / 2;
        let nb: Vec<usize> = g.neighbors(u).filter(|&v| v > u).collect();
        for (i, &v) in nb.iter().enumerate() {
            for &w in &nb[i + 1..] {
                if g.has_edge(v, w) {
                    closed += 1;
                }
            }
        }
    }
    if triples == 0 {
        0.0
    } else {
        3.0 * closed as f64 / triples as f64
    }
}

fn characteristic_path_length(g: &SocialGraph, comp: &[usize]) -> f64 {
    let mut dist = vec![usize::MAX; g.n()];
    let mut total = 0u64;
    let mut pairs = 0u64;
    let mut queue = VecDeque::new();
    for &s in comp {
        for &c in comp {
            dist[c] = usize::MAX;
        }
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for w in g.neighbors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    total += dist[w] as u64;
                    pairs += 1;
                    queue.push_back(w);
                }
            }
        }
    }
    total as f64 / pairs as f64
}

/// `Σ_i Σ_j |d_i - d_j| / (2 n² · mean)`, computed from the sorted sequence.
pub fn gini(degrees: &[usize]) -> f64 {
    let n = degrees.len();
    let sum: usize = degrees.iter().sum();
    if n == 0 || sum == 0 {
        return 0.0;
    }
    let mut d: Vec<f64> = degrees.iter().map(|&x| x as f64).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Σ_{i<j} (d_j - d_i) = Σ_j d_j (2j - n + 1) with 0-based j over the sorted list.
    let weighted: f64 = d.iter().enumerate().map(|(j, &x)| x * (2.0 * j as f64 - n as f64 + 1.0)).sum();
    let mean = sum as f64 / n as f64;
    2.0 * weighted / (2.0 * (n * n) as f64 * mean)
}

pub fn power_law_exponent(degrees: &[usize]) -> Option<f64> {
    let nz: Vec<f64> = degrees.iter().filter(|&&d| d >= 1).map(|&d| d as f64).collect();
    let log_sum: f64 = nz.iter().map(|d| d.ln()).sum();
    if nz.is_empty() || log_sum <= 0.0 {
        return None;
    }
    Some(1.0 + nz.len() as f64 / log_sum)
}

/// Entropy of the degree-mass distribution `d_i / 2|E|`, normalised by
/// `ln n₊` where `n₊` counts nodes of nonzero degree.
pub fn distribution_entropy(degrees: &[usize]) -> Option<f64> {
    let vol: usize = degrees.iter().sum();
    let nz: Vec<usize> = degrees.iter().copied().filter(|&d| d > 0).collect();
    if vol == 0 {
        return None;
    }
    if nz.len() == 1 {
        return Some(0.0);
    }
    let h: f64 = nz
        .iter()
        .map(|&d| {
            let p = d as f64 / vol as f64;
            -p * p.ln()
        })
        .sum();
    Some(h / (nz.len() as f64).ln())
}
