//! Budget-matched comparison attacks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Budget, Label, SocialGraph};
use crate::rng;

fn with_edge_budget(g: &SocialGraph, budget: usize) -> SocialGraph {
    let mut out = g.clone();
    let used = out.edge_ops();
    out.set_budget(Budget { edges: Some(used + budget), ..out.budget() });
    out
}

/// Adds `budget` distinct absent edges chosen uniformly at random.
pub fn random_attack(g: &SocialGraph, budget: usize, seed: u64) -> Result<SocialGraph> {
    let mut out = with_edge_budget(g, budget);
    let n = out.n();
    let complement = n * n.saturating_sub(1) / 2 - out.num_edges();
    let mut r = rng::derive(seed, 0xBA5E);
    if budget >= complement || 2 * budget > complement {
        let mut absent: Vec<(usize, usize)> =
            (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).filter(|&(u, v)| !g.has_edge(u, v)).collect();
        if budget > complement {
            log::warn!("random attack: budget {budget} exceeds the {complement} absent pairs, adding all");
        }
        absent.shuffle(&mut r);
        for &(u, v) in absent.iter().take(budget) {
            out.perturb_add_edge(u, v)?;
        }
        return Ok(out);
    }
    let mut added = 0;
    while added < budget {
        let u = r.random_range(0..n);
        let v = r.random_range(0..n);
        if u == v || out.has_edge(u, v) {
            continue;
        }
        out.perturb_add_edge(u, v)?;
        added += 1;
    }
    Ok(out)
}

/// Per operation: with probability ½ delete a random same-label edge, otherwise
/// connect a random absent human–bot pair. An infeasible branch falls through.
pub fn dice_attack(g: &SocialGraph, budget: usize, seed: u64) -> Result<SocialGraph> {
    let humans: Vec<usize> = (0..g.n()).filter(|&v| g.label(v) == Label::Human).collect();
    let bots: Vec<usize> = (0..g.n()).filter(|&v| g.label(v) == Label::Bot).collect();
    if humans.is_empty() && bots.is_empty() {
        return Err(Error::Domain("DICE needs labeled nodes".into()));
    }
    let known = |v: usize| g.label(v) != Label::Unknown;
    let mut same: Vec<(usize, usize)> =
        g.edges().into_iter().filter(|&(u, v)| known(u) && g.label(u) == g.label(v)).collect();
    let inter_present = g.edges().iter().filter(|&&(u, v)| known(u) && known(v) && g.label(u) != g.label(v)).count();
    let mut inter_absent = humans.len() * bots.len() - inter_present;
    let mut out = with_edge_budget(g, budget);
    let mut r = rng::derive(seed, 0xD1CE);
    for _ in 0..budget {
        let remove = r.random_bool(0.5);
        let can_remove = !same.is_empty();
        let can_add = inter_absent > 0;
        if !can_remove && !can_add {
            log::warn!("DICE: no feasible operation left after {} ops", out.edge_ops());
            break;
        }
        if (remove && can_remove) || !can_add {
            let k = r.random_range(0..same.len());
            let (u, v) = same.swap_remove(k);
            out.perturb_remove_edge(u, v)?;
        } else {
            loop {
                let h = humans[r.random_range(0..humans.len())];
                let b = bots[r.random_range(0..bots.len())];
                if !out.has_edge(h, b) {
                    out.perturb_add_edge(h, b)?;
                    inter_absent -= 1;
                    break;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Perturbation;
    use crate::num::Matrix;

    fn two_cliques(k: usize) -> SocialGraph {
        let labels = (0..2 * k).map(|v| if v < k { Label::Human } else { Label::Bot }).collect();
        let mut g = SocialGraph::new(Matrix::zeros(2 * k, 1), labels).unwrap();
        for base in [0, k] {
            for u in base..base + k {
                for v in u + 1..base + k {
                    g.add_edge(u, v).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn random_basics() {
        let g = SocialGraph::structural(10);
        let zero = random_attack(&g, 0, 1).unwrap();
        assert_eq!(zero.edges(), g.edges());
        assert!(zero.perturbation_log().is_empty());
        let a = random_attack(&g, 5, 1).unwrap();
        assert_eq!(a.num_edges(), 5);
        assert_eq!(a.edge_ops(), 5);
        assert_eq!(a, random_attack(&g, 5, 1).unwrap());
        let all = random_attack(&g, 100, 2).unwrap();
        assert_eq!(all.num_edges(), 45);
        let dense = random_attack(&g, 40, 3).unwrap();
        assert_eq!(dense.num_edges(), 40);
        assert_eq!(dense.reconstruct_clean().unwrap(), g);
    }

    #[test]
    fn dice_adds_only_inter_class_edges() {
        let g = two_cliques(8);
        let a = dice_attack(&g, 30, 4).unwrap();
        assert_eq!(a.edge_ops(), 30);
        assert_eq!(a.perturbation_log().len(), 30);
        for p in a.perturbation_log() {
            match *p {
                Perturbation::AddEdge { u, v } => assert_ne!(g.label(u), g.label(v)),
                Perturbation::RemoveEdge { u, v } => assert_eq!(g.label(u), g.label(v)),
                Perturbation::InjectNode { .. } => unreachable!(),
            }
        }
        assert_eq!(a.reconstruct_clean().unwrap(), g);
    }

    #[test]
    fn dice_removal_ratio_is_balanced() {
        let g = two_cliques(120);
        let ops = 10_000;
        let a = dice_attack(&g, ops, 5).unwrap();
        let removed = a.perturbation_log().iter().filter(|p| matches!(p, Perturbation::RemoveEdge { .. })).count();
        // Binomial(10⁴, ½): sd = 50
        assert!((removed as f64 - 5000.0).abs() <= 150.0, "{removed}");
    }

    #[test]
    fn dice_requires_labels() {
        assert!(matches!(dice_attack(&SocialGraph::structural(5), 3, 0), Err(Error::Domain(_))));
    }
}
