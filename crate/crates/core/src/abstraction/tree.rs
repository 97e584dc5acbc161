use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SocialGraph;

/// Node of a height-2 encoding tree other than the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeNode {
    Community(usize),
    Leaf(usize),
}

/// Height-2 encoding tree: root → communities → one leaf per graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTree {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    comm_vol: Vec<usize>,
    comm_cut: Vec<usize>,
    volume: usize,
}

fn xlog(x: f64, base: f64) -> f64 {
    if x > 0.0 {
        x * x.log(base)
    } else {
        0.0
    }
}

impl EncodingTree {
    /// Builds a tree from any labelling; community ids are renumbered by first appearance.
    pub fn from_assignment(g: &SocialGraph, labels: &[usize]) -> Result<Self> {
        if labels.len() != g.n() {
            return Err(Error::Dimension(format!("{} labels for {} nodes", labels.len(), g.n())));
        }
        let mut remap = BTreeMap::new();
        let mut assignment = Vec::with_capacity(g.n());
        for &l in labels {
            let next = remap.len();
            assignment.push(*remap.entry(l).or_insert(next));
        }
        let k = remap.len();
        let degrees = g.degrees();
        let mut members = vec![Vec::new(); k];
        let mut comm_vol = vec![0; k];
        let mut comm_cut = vec![0; k];
        for v in 0..g.n() {
            let c = assignment[v];
            members[c].push(v);
            comm_vol[c] += degrees[v];
            comm_cut[c] += g.neighbors(v).filter(|&u| assignment[u] != c).count();
        }
        let volume = degrees.iter().sum();
        Ok(EncodingTree { assignment, members, degrees, comm_vol, comm_cut, volume })
    }

    /// The single-community tree.
    pub fn flat(g: &SocialGraph) -> Self {
        Self::from_assignment(g, &vec![0; g.n()]).expect("label count matches")
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_communities(&self) -> usize {
        self.members.len()
    }

    pub fn community_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn community_volume(&self, c: usize) -> usize {
        self.comm_vol[c]
    }

    pub fn boundary(&self, c: usize) -> usize {
        self.comm_cut[c]
    }

    fn check(&self, g: &SocialGraph) -> Result<()> {
        if g.n() != self.n() {
            return Err(Error::Stale { built: self.n(), current: g.n() });
        }
        Ok(())
    }

    /// `-(g_τ / vol(V)) · log(vol(τ) / vol(τ⁺))` in the given base.
    pub fn node_entropy_in_base(&self, node: TreeNode, base: f64) -> Result<f64> {
        if self.volume == 0 {
            return Err(Error::Domain("structural entropy undefined on a graph with no edges".into()));
        }
        let vol = self.volume as f64;
        let (cut, own, parent) = match node {
            TreeNode::Community(c) => (self.comm_cut[c], self.comm_vol[c], self.volume),
            TreeNode::Leaf(v) => (self.degrees[v], self.degrees[v], self.comm_vol[self.assignment[v]]),
        };
        if cut == 0 || own == 0 {
            return Ok(0.0);
        }
        Ok(-(cut as f64 / vol) * (own as f64 / parent as f64).log(base))
    }

    /// Sum over all non-root nodes.
    pub fn total_entropy_in_base(&self, base: f64) -> Result<f64> {
        let mut h = 0.0;
        for c in 0..self.num_communities() {
            h += self.node_entropy_in_base(TreeNode::Community(c), base)?;
        }
        for v in 0..self.n() {
            h += self.node_entropy_in_base(TreeNode::Leaf(v), base)?;
        }
        Ok(h)
    }
}

pub fn node_entropy(g: &SocialGraph, tree: &EncodingTree, node: TreeNode) -> Result<f64> {
    tree.check(g)?;
    tree.node_entropy_in_base(node, 2.0)
}

pub fn total_entropy(g: &SocialGraph, tree: &EncodingTree) -> Result<f64> {
    tree.check(g)?;
    tree.total_entropy_in_base(2.0)
}

/// Running statistics of one community during agglomeration.
#[derive(Debug, Clone, Copy)]
struct Block {
    vol: f64,
    cut: f64,
    /// `Σ d log₂ d` over members.
    dlogd: f64,
}

/// Contribution of a community and its leaves to the total entropy.
fn block_entropy(b: Block, vol: f64) -> f64 {
    if b.vol == 0.0 {
        return 0.0;
    }
    let comm = if b.cut > 0.0 { -(b.cut / vol) * (b.vol / vol).log2() } else { 0.0 };
    comm - (b.dlogd - xlog(b.vol, 2.0)) / vol
}

/// Greedy agglomeration from singletons; merges the adjacent pair with the largest
/// entropy decrease until none decreases it. Ties go to the smallest id pair.
pub fn optimize_partition(g: &SocialGraph) -> EncodingTree {
    if g.num_edges() == 0 {
        log::warn!("optimize_partition: edgeless graph, using a single community");
        return EncodingTree::flat(g);
    }
    let n = g.n();
    let vol = (2 * g.num_edges()) as f64;
    let mut blocks: Vec<Block> = (0..n)
        .map(|v| {
            let d = g.degree(v) as f64;
            Block { vol: d, cut: d, dlogd: xlog(d, 2.0) }
        })
        .collect();
    let mut alive = vec![true; n];
    let mut links: Vec<BTreeMap<usize, usize>> = (0..n).map(|v| g.neighbors(v).map(|u| (u, 1)).collect()).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut current: f64 = blocks.iter().map(|&b| block_entropy(b, vol)).sum();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if !alive[a] {
                continue;
            }
            let ha = block_entropy(blocks[a], vol);
            for (&b, &e) in links[a].range(a + 1..) {
                let merged = Block {
                    vol: blocks[a].vol + blocks[b].vol,
                    cut: blocks[a].cut + blocks[b].cut - 2.0 * e as f64,
                    dlogd: blocks[a].dlogd + blocks[b].dlogd,
                };
                let delta = block_entropy(merged, vol) - ha - block_entropy(blocks[b], vol);
                if best.is_none_or(|(bd, _, _)| delta < bd) {
                    best = Some((delta, a, b));
                }
            }
        }
        let Some((delta, a, b)) = best else { break };
        if delta >= -1e-12 {
            break;
        }
        let e_ab = links[a][&b];
        blocks[a] = Block {
            vol: blocks[a].vol + blocks[b].vol,
            cut: blocks[a].cut + blocks[b].cut - 2.0 * e_ab as f64,
            dlogd: blocks[a].dlogd + blocks[b].dlogd,
        };
        alive[b] = false;
        let moved = std::mem::take(&mut links[b]);
        links[a].remove(&b);
        for (c, e) in moved {
            if c == a {
                continue;
            }
            *links[a].entry(c).or_insert(0) += e;
            let lc = &mut links[c];
            lc.remove(&b);
            *lc.entry(a).or_insert(0) += e;
        }
        parent[b] = a;
        let next = current + delta;
        debug_assert!(next < current, "merge must strictly decrease entropy");
        current = next;
    }
    // follow merge pointers to the surviving representative
    let labels: Vec<usize> = (0..n)
        .map(|mut v| {
            while parent[v] != v {
                v = parent[v];
            }
            v
        })
        .collect();
    EncodingTree::from_assignment(g, &labels).expect("label count matches")
}

/// Exhaustive minimum over all set partitions (restricted-growth strings). Small `n` only.
pub fn brute_force_min_entropy(g: &SocialGraph) -> Result<(f64, Vec<usize>)> {
    let n = g.n();
    if n > 10 {
        return Err(Error::Domain(format!("brute force limited to n <= 10, got {n}")));
    }
    let mut rgs = vec![0usize; n];
    let mut best = (f64::INFINITY, rgs.clone());
    loop {
        let h = EncodingTree::from_assignment(g, &rgs)?.total_entropy_in_base(2.0)?;
        if h < best.0 {
            best = (h, rgs.clone());
        }
        // next restricted-growth string
        let mut i = n;
        loop {
            if i <= 1 {
                return Ok(best);
            }
            i -= 1;
            let max_prev = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= max_prev {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
        }
    }
}

/// Normalized mutual information `2 I(a;b) / (H(a) + H(b))`; 1 when both are trivial.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions over different node sets");
    let n = a.len() as f64;
    if a.is_empty() {
        return 1.0;
    }
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    let ent = |m: &BTreeMap<usize, f64>| -m.values().map(|&p| xlog(p, std::f64::consts::E)).sum::<f64>();
    let (ha, hb) = (ent(&pa), ent(&pb));
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum();
    2.0 * mi / (ha + hb)
}

#[derive(Debug, Clone, Serialize)]
pub struct CommunityReport {
    pub id: usize,
    pub size: usize,
    pub volume: usize,
    pub boundary: usize,
    pub entropy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub nodes: usize,
    pub volume: usize,
    pub communities: Vec<CommunityReport>,
    pub total_entropy: f64,
    pub flat_entropy: f64,
}

pub fn entropy_report(g: &SocialGraph, tree: &EncodingTree) -> Result<EntropyReport> {
    tree.check(g)?;
    let communities = (0..tree.num_communities())
        .map(|c| {
            let leaves: f64 = tree
                .members(c)
                .iter()
                .map(|&v| tree.node_entropy_in_base(TreeNode::Leaf(v), 2.0))
                .sum::<Result<f64>>()?;
            Ok(CommunityReport {
                id: c,
                size: tree.members(c).len(),
                volume: tree.community_volume(c),
                boundary: tree.boundary(c),
                entropy: tree.node_entropy_in_base(TreeNode::Community(c), 2.0)? + leaves,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EntropyReport {
        nodes: g.n(),
        volume: tree.volume(),
        communities,
        total_entropy: total_entropy(g, tree)?,
        flat_entropy: total_entropy(g, &EncodingTree::flat(g))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn two_triangles() -> SocialGraph {
        SocialGraph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap()
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> SocialGraph {
        let mut r = rng::seeded(seed);
        let mut g = SocialGraph::structural(n);
        for u in 0..n {
            for v in u + 1..n {
                if r.random_bool(p) {
                    g.add_edge(u, v).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn triangle_leaf_and_totals() {
        let g = two_triangles();
        let t = EncodingTree::from_assignment(&g, &[0, 0, 0, 1, 1, 1]).unwrap();
        let leaf = node_entropy(&g, &t, TreeNode::Leaf(4)).unwrap();
        assert!((leaf - 3f64.log2() / 6.0).abs() <= 1e-12);
        assert_eq!(node_entropy(&g, &t, TreeNode::Community(0)).unwrap(), 0.0);
        let part = total_entropy(&g, &t).unwrap();
        let flat = total_entropy(&g, &EncodingTree::flat(&g)).unwrap();
        assert!((part - 3f64.log2()).abs() <= 1e-12);
        assert!((flat - 6f64.log2()).abs() <= 1e-12);
        assert!(part < flat);
    }

    #[test]
    fn flat_leaves_sum_to_degree_entropy() {
        let g = random_graph(15, 0.3, 1);
        let t = EncodingTree::flat(&g);
        let vol = t.volume() as f64;
        let leaves: f64 = (0..15).map(|v| node_entropy(&g, &t, TreeNode::Leaf(v)).unwrap()).sum();
        let de: f64 = g.degrees().iter().map(|&d| -xlog(d as f64 / vol, 2.0)).sum();
        assert!((leaves - de).abs() < 1e-12);
    }

    #[test]
    fn edgeless_errors_and_fallback() {
        let g = SocialGraph::structural(4);
        let t = optimize_partition(&g);
        assert_eq!(t.num_communities(), 1);
        assert!(matches!(total_entropy(&g, &t), Err(Error::Domain(_))));
    }

    #[test]
    fn greedy_recovers_triangles() {
        let g = two_triangles();
        let t = optimize_partition(&g);
        assert_eq!(t.assignment(), &[0, 0, 0, 1, 1, 1]);
        let (bf, labels) = brute_force_min_entropy(&g).unwrap();
        assert!((bf - 3f64.log2()).abs() < 1e-12);
        assert_eq!(EncodingTree::from_assignment(&g, &labels).unwrap().assignment(), t.assignment());
    }

    #[test]
    fn block_entropy_matches_tree_entropy() {
        let g = random_graph(12, 0.3, 2);
        let labels: Vec<usize> = (0..12).map(|v| v % 3).collect();
        let t = EncodingTree::from_assignment(&g, &labels).unwrap();
        let vol = t.volume() as f64;
        let sum: f64 = (0..t.num_communities())
            .map(|c| {
                let dl = t.members(c).iter().map(|&v| xlog(g.degree(v) as f64, 2.0)).sum();
                block_entropy(Block { vol: t.community_volume(c) as f64, cut: t.boundary(c) as f64, dlogd: dl }, vol)
            })
            .sum();
        assert!((sum - total_entropy(&g, &t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn greedy_against_brute_force_small_graphs() {
        for seed in 0..20 {
            let n = 4 + (seed as usize % 5);
            let g = random_graph(n, 0.45, 100 + seed);
            if g.num_edges() == 0 {
                continue;
            }
            let t = optimize_partition(&g);
            let h = total_entropy(&g, &t).unwrap();
            let flat = total_entropy(&g, &EncodingTree::flat(&g)).unwrap();
            let (min, _) = brute_force_min_entropy(&g).unwrap();
            assert!(h <= flat + 1e-12, "seed {seed}");
            assert!(h >= min - 1e-12, "seed {seed}");
            // local optimum: no merge of two adjacent communities lowers entropy
            for a in 0..t.num_communities() {
                for b in a + 1..t.num_communities() {
                    let adjacent = t.members(a).iter().any(|&u| g.neighbors(u).any(|w| t.community_of(w) == b));
                    if !adjacent {
                        continue;
                    }
                    let merged: Vec<usize> = t.assignment().iter().map(|&c| if c == b { a } else { c }).collect();
                    let hm = total_entropy(&g, &EncodingTree::from_assignment(&g, &merged).unwrap()).unwrap();
                    assert!(hm >= h - 1e-12, "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn nmi_basics() {
        assert!((nmi(&[0, 0, 1, 1], &[5, 5, 2, 2]) - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]), 1.0);
        let v = nmi(&[0, 0, 1, 1, 2], &[0, 0, 1, 2, 2]);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn stale_tree_rejected() {
        let g = two_triangles();
        let t = optimize_partition(&g);
        let bigger = SocialGraph::from_edges(7, &[(0, 1)]).unwrap();
        assert!(matches!(total_entropy(&bigger, &t), Err(Error::Stale { .. })));
    }

    #[test]
    fn report_totals_are_consistent() {
        let g = random_graph(20, 0.2, 3);
        let t = optimize_partition(&g);
        let r = entropy_report(&g, &t).unwrap();
        let s: f64 = r.communities.iter().map(|c| c.entropy).sum();
        assert!((s - r.total_entropy).abs() < 1e-12);
        assert!(r.total_entropy <= r.flat_entropy + 1e-12);
    }
}
