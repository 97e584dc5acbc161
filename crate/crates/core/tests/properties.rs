use edgeforge::abstraction::{optimize_partition, pooling_matrix, total_entropy, EncodingTree, PathConvention, PoolingOptions};
use edgeforge::baselines::{dice_attack, random_attack};
use edgeforge::cohorts::{build_cohorts, split_budget, CohortCounts};
use edgeforge::detectors::{gcn_forward, sgc_forward, GcnParams, SgcParams};
use edgeforge::diffusion::{NoiseSchedule, ScheduleSpec};
use edgeforge::graph::{graph_stats, Masks, StatsOptions};
use edgeforge::marl::{reward, run_attack, GameConfig};
use edgeforge::num::{cross_entropy, softmax_rows};
use edgeforge::{rng, synth, Label, Matrix, SocialGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn graph_from(n: usize, pairs: &[(usize, usize)], seed: u64) -> SocialGraph {
    let x = Matrix::randn(n, 3, 1.0, &mut rng::seeded(seed));
    let labels = (0..n).map(|i| if i % 2 == 0 { Label::Human } else { Label::Bot }).collect();
    let mut g = SocialGraph::new(x, labels).unwrap();
    for &(u, v) in pairs {
        let (u, v) = (u % n, v % n);
        if u != v && !g.has_edge(u, v) {
            g.add_edge(u, v).unwrap();
        }
    }
    g
}

fn arb_graph() -> impl Strategy<Value = SocialGraph> {
    (4usize..24, proptest::collection::vec((0usize..64, 0usize..64), 1..60), any::<u64>())
        .prop_map(|(n, pairs, seed)| graph_from(n, &pairs, seed))
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::seeded(seed));
    p
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_rows_sum_to_one_and_ce_is_nonnegative(vals in proptest::collection::vec(-30.0f64..30.0, 2..40)) {
        let rows = vals.len() / 2;
        let logits = Matrix::from_vec(rows, 2, vals[..rows * 2].to_vec()).unwrap();
        let sm = softmax_rows(&logits);
        for i in 0..rows {
            prop_assert!((sm.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let labels: Vec<usize> = (0..rows).map(|i| i % 2).collect();
        let mask: Vec<usize> = (0..rows).collect();
        prop_assert!(cross_entropy(&logits, &labels, &mask).unwrap() >= 0.0);
    }

    #[test]
    fn stats_are_in_range_and_relabeling_invariant(g in arb_graph(), seed in any::<u64>()) {
        let opts = StatsOptions::default();
        let a = graph_stats(&g, &opts);
        prop_assert!(a.ad >= 0.0);
        prop_assert!(a.lcc >= 1 && a.lcc <= g.n());
        prop_assert!((0.0..=1.0).contains(&a.cc));
        if let Some(gc) = a.gc { prop_assert!((0.0..=1.0).contains(&gc)); }
        if let Some(de) = a.de { prop_assert!((-1e-12..=1.0 + 1e-12).contains(&de)); }
        let b = graph_stats(&g.permuted(&permutation(g.n(), seed)).unwrap(), &opts);
        prop_assert!((a.ad - b.ad).abs() <= 1e-12 && a.lcc == b.lcc && (a.cc - b.cc).abs() <= 1e-12);
        prop_assert!(close(a.cpl, b.cpl) && close(a.gc, b.gc) && close(a.ple, b.ple) && close(a.de, b.de));
    }

    #[test]
    fn detectors_are_permutation_equivariant(g in arb_graph(), seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let gcn = GcnParams::random(3, 5, &mut r);
        let sgc = SgcParams::random(3, 2, &mut r);
        let perm = permutation(g.n(), seed ^ 1);
        let h = g.permuted(&perm).unwrap();
        let (lg, _) = gcn_forward(&g, &gcn).unwrap();
        let (lh, _) = gcn_forward(&h, &gcn).unwrap();
        let (sg, sh) = (sgc_forward(&g, &sgc).unwrap(), sgc_forward(&h, &sgc).unwrap());
        for i in 0..g.n() {
            for c in 0..2 {
                prop_assert!((lg[(i, c)] - lh[(perm[i], c)]).abs() <= 1e-10);
                prop_assert!((sg[(i, c)] - sh[(perm[i], c)]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn gcn_logits_ignore_edges_beyond_two_hops(g in arb_graph(), seed in any::<u64>()) {
        let gcn = GcnParams::random(3, 4, &mut rng::seeded(seed));
        let v = (seed as usize) % g.n();
        let mut near = vec![false; g.n()];
        near[v] = true;
        for a in g.neighbors(v).collect::<Vec<_>>() {
            near[a] = true;
            for b in g.neighbors(a) { near[b] = true; }
        }
        let far: Vec<usize> = (0..g.n()).filter(|&u| !near[u]).collect();
        let pair = far.iter().flat_map(|&a| far.iter().map(move |&b| (a, b))).find(|&(a, b)| a < b && !g.has_edge(a, b));
        let Some((a, b)) = pair else { return Ok(()) };
        let mut h = g.clone();
        h.add_edge(a, b).unwrap();
        let (before, _) = gcn_forward(&g, &gcn).unwrap();
        let (after, _) = gcn_forward(&h, &gcn).unwrap();
        prop_assert_eq!(before.row(v), after.row(v));
    }

    #[test]
    fn schedule_is_affine_with_valid_alphas(steps in 2usize..80, s in 0.01f64..1.0, lo in 1e-4f64..0.4, gap in 0.01f64..0.5) {
        let hi = (lo + gap).min(0.99);
        let sch = NoiseSchedule::new(ScheduleSpec { steps, s, a_min: lo, a_max: hi }).unwrap();
        prop_assert!(((1.0 - sch.alpha_bar(1)) - s * lo).abs() <= 1e-12);
        prop_assert!(((1.0 - sch.alpha_bar(steps)) - s * hi).abs() <= 1e-12);
        let step = (s * hi - s * lo) / (steps - 1) as f64;
        for t in 1..=steps {
            prop_assert!(((1.0 - sch.alpha_bar(t)) - (s * lo + step * (t - 1) as f64)).abs() <= 1e-12);
            let a = sch.alpha(t);
            prop_assert!(a > 0.0 && a < 1.0);
            prop_assert!((sch.beta(t) - (1.0 - a)).abs() <= 1e-15);
        }
    }

    #[test]
    fn greedy_entropy_and_pooling_invariants(g in arb_graph()) {
        prop_assume!(g.num_edges() > 0);
        let t = optimize_partition(&g);
        prop_assert_eq!(t.assignment().len(), g.n());
        let vol: usize = (0..t.num_communities()).map(|c| t.community_volume(c)).sum();
        prop_assert_eq!(vol, 2 * g.num_edges());
        let h = total_entropy(&g, &t).unwrap();
        prop_assert!(h <= total_entropy(&g, &EncodingTree::flat(&g)).unwrap() + 1e-12);
        for conv in [PathConvention::CommunityAndLeaf, PathConvention::LeafOnly] {
            let p = pooling_matrix(&g, &t, PoolingOptions { convention: conv, log_base: 2.0 }).unwrap();
            let pe = pooling_matrix(&g, &t, PoolingOptions { convention: conv, log_base: 7.5 }).unwrap();
            prop_assert_eq!(p.num_communities(), t.num_communities());
            let d = p.dense();
            prop_assert!(d.max_abs_diff(&pe.dense()) <= 1e-12);
            for c in 0..p.num_communities() {
                prop_assert!((d.row(c).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for v in 0..g.n() {
                    prop_assert!(d[(c, v)] >= 0.0);
                    if t.community_of(v) != c { prop_assert_eq!(d[(c, v)], 0.0); }
                }
            }
        }
    }

    #[test]
    fn baselines_respect_budget_and_ledger(g in arb_graph(), budget in 0usize..12, seed in any::<u64>()) {
        let clean = g.clone();
        for out in [random_attack(&g, budget, seed).unwrap(), dice_attack(&g, budget, seed).unwrap()] {
            prop_assert!(out.edge_ops() <= budget);
            prop_assert_eq!(out.reconstruct_clean().unwrap().edges(), clean.edges());
        }
    }

    #[test]
    fn budget_split_sums_and_is_proportional(total in 0usize..500, sizes in proptest::collection::vec(0usize..40, 1..4)) {
        prop_assume!(sizes.iter().sum::<usize>() > 0);
        let parts = split_budget(total, &sizes);
        prop_assert_eq!(parts.iter().sum::<usize>(), total);
        let n: usize = sizes.iter().sum();
        for (p, s) in parts.iter().zip(&sizes) {
            let exact = total as f64 * *s as f64 / n as f64;
            prop_assert!((*p as f64 - exact).abs() < 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cohorts_are_disjoint_and_split_the_budget(seed in any::<u64>(), auto in 0usize..6, cyb in 0usize..6, budget in 0usize..80) {
        let spec = synth::SynthSpec { nodes: 90, ..synth::SynthSpec::default() };
        let mut g = synth::synth_dataset(&spec, seed).unwrap();
        let c = build_cohorts(&mut g, CohortCounts::new(auto, cyb, 0), None, budget, seed).unwrap();
        let all = c.all_members();
        let mut dedup = all.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), all.len());
        prop_assert_eq!(all.len(), auto + cyb);
        if auto + cyb > 0 { prop_assert_eq!(c.total_budget(), budget); }
        prop_assert!(c.check(&g).is_ok());
        prop_assert!(all.iter().all(|&v| g.label(v) == Label::Bot));
    }

    #[test]
    fn attack_keeps_budgets_rewards_and_reproducibility(seed in any::<u64>(), budget in 1usize..8) {
        let spec = synth::SynthSpec { nodes: 60, p_in: 0.15, p_out: 0.02, ..synth::SynthSpec::default() };
        let mut g = synth::synth_dataset(&spec, seed).unwrap();
        g.set_masks(Masks::stratified(g.labels(), 0.6, 0.2, seed)).unwrap();
        let cohorts = build_cohorts(&mut g, CohortCounts::new(3, 3, 0), None, budget, seed).unwrap();
        let sur = GcnParams::random(g.feature_dim(), 6, &mut rng::seeded(seed));
        let targets: Vec<usize> = g.masks.test.iter().copied().take(3).collect();
        let game = GameConfig { episodes: 2, ..GameConfig::default() };
        let a = run_attack(&g, &cohorts, &targets, &sur, &game, seed).unwrap();
        let b = run_attack(&g, &cohorts, &targets, &sur, &game, seed).unwrap();
        prop_assert_eq!(&a.poisoned, &b.poisoned);
        prop_assert!(a.total_spent() <= budget);
        prop_assert!(a.spent.iter().zip(&a.budgets).all(|(s, b)| s <= b));
        prop_assert!(a.poisoned.edge_ops() <= budget);
        for &v in &targets {
            let rw = reward(&a.poisoned, &sur, v).unwrap();
            prop_assert!(rw == 1.0 || rw == -1.0);
        }
        prop_assert_eq!(a.poisoned.reconstruct_clean().unwrap().edges(), g.edges());
    }
}
