//! Automated, cyborg and evolving bot populations.
//!
//! Automated and cyborg bots are existing labeled bots drawn from the lowest and
//! highest degree terciles. Evolving bots are new nodes whose features are
//! diffused copies of labeled human accounts.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::BotDiffusion;
use crate::error::{Error, Result};
use crate::graph::{Label, SocialGraph};
use crate::num::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohortKind {
    Automated,
    Cyborg,
    Evolved,
}

impl CohortKind {
    pub const ALL: [CohortKind; 3] = [CohortKind::Automated, CohortKind::Cyborg, CohortKind::Evolved];

    pub fn name(self) -> &'static str {
        match self {
            CohortKind::Automated => "automated",
            CohortKind::Cyborg => "cyborg",
            CohortKind::Evolved => "evolved",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortCounts {
    pub automated: usize,
    pub cyborg: usize,
    pub evolved: usize,
}

impl CohortCounts {
    pub fn new(automated: usize, cyborg: usize, evolved: usize) -> Self {
        CohortCounts { automated, cyborg, evolved }
    }

    pub fn get(&self, k: CohortKind) -> usize {
        match k {
            CohortKind::Automated => self.automated,
            CohortKind::Cyborg => self.cyborg,
            CohortKind::Evolved => self.evolved,
        }
    }

    pub fn total(&self) -> usize {
        self.automated + self.cyborg + self.evolved
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub kind: CohortKind,
    pub members: Vec<usize>,
    pub edge_budget: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BotCohorts {
    /// Non-empty cohorts in automated, cyborg, evolved order.
    pub cohorts: Vec<Cohort>,
}

impl BotCohorts {
    pub fn get(&self, kind: CohortKind) -> Option<&Cohort> {
        self.cohorts.iter().find(|c| c.kind == kind)
    }

    pub fn members(&self, kind: CohortKind) -> &[usize] {
        self.get(kind).map(|c| c.members.as_slice()).unwrap_or(&[])
    }

    pub fn total_budget(&self) -> usize {
        self.cohorts.iter().map(|c| c.edge_budget).sum()
    }

    pub fn all_members(&self) -> Vec<usize> {
        self.cohorts.iter().flat_map(|c| c.members.iter().copied()).collect()
    }

    /// Keeps only the listed kinds and re-splits `total_budget` over them.
    pub fn restricted(&self, kinds: &[CohortKind], total_budget: usize) -> BotCohorts {
        let mut cohorts: Vec<Cohort> = self.cohorts.iter().filter(|c| kinds.contains(&c.kind)).cloned().collect();
        let sizes: Vec<usize> = cohorts.iter().map(|c| c.members.len()).collect();
        for (c, b) in cohorts.iter_mut().zip(split_budget(total_budget, &sizes)) {
            c.edge_budget = b;
        }
        BotCohorts { cohorts }
    }

    pub fn check(&self, g: &SocialGraph) -> Result<()> {
        let mut seen = vec![false; g.n()];
        for c in &self.cohorts {
            for &v in &c.members {
                if v >= g.n() {
                    return Err(Error::Structural(format!("cohort member {v} outside graph")));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Structural(format!("node {v} in two cohorts")));
                }
            }
        }
        let injected = g.injected_nodes();
        for &v in self.members(CohortKind::Evolved) {
            if !injected.contains(&v) {
                return Err(Error::Structural(format!("evolved bot {v} was not injected")));
            }
        }
        Ok(())
    }

    /// `node_id,cohort`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<(usize, &str)> =
            self.cohorts.iter().flat_map(|c| c.members.iter().map(move |&v| (v, c.kind.name()))).collect();
        rows.sort_unstable();
        let mut s = String::from("node_id,cohort\n");
        for (v, k) in rows {
            writeln!(s, "{v},{k}").expect("string write");
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Largest-remainder split of `total` proportional to `sizes`; zero-size entries get 0.
pub fn split_budget(total: usize, sizes: &[usize]) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let mut out: Vec<usize> = sizes.iter().map(|&s| total * s / sum).collect();
    let mut rest = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] > 0).collect();
    // remainder in descending order, ties to the earlier cohort
    order.sort_by_key(|&i| (std::cmp::Reverse((total * sizes[i]) % sum), i));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

/// Diffusion model and corruption depth used to create evolved bots.
#[derive(Debug, Clone, Copy)]
pub struct EvolveSpec<'a> {
    pub diffusion: &'a BotDiffusion,
    pub t_corrupt: usize,
}

/// Labeled (train + val) nodes of one class, sorted.
fn labeled_of(g: &SocialGraph, class: Label) -> Vec<usize> {
    let mut ids: Vec<usize> =
        g.masks.train.iter().chain(&g.masks.val).copied().filter(|&v| g.label(v) == class).collect();
    ids.sort_unstable();
    ids
}

pub fn build_cohorts(
    g: &mut SocialGraph,
    counts: CohortCounts,
    evolve: Option<EvolveSpec<'_>>,
    edge_budget: usize,
    seed: u64,
) -> Result<BotCohorts> {
    let mut r = rng::derive(seed, 0xC0_4027);
    let mut bots = labeled_of(g, Label::Bot);
    let mut cohorts = Vec::new();
    if counts.automated + counts.cyborg > 0 {
        // stable degree order, ids break ties
        bots.sort_by_key(|&v| (g.degree(v), v));
        let third = bots.len() / 3;
        let low = &bots[..third];
        let high = &bots[bots.len() - third..];
        if counts.automated > low.len() || counts.cyborg > high.len() {
            return Err(Error::Domain(format!(
                "need {} automated and {} cyborg bots but each degree tercile holds {third} labeled bots",
                counts.automated, counts.cyborg
            )));
        }
        for (kind, pool, k) in [(CohortKind::Automated, low, counts.automated), (CohortKind::Cyborg, high, counts.cyborg)] {
            if k == 0 {
                continue;
            }
            let mut members: Vec<usize> = pool.choose_multiple(&mut r, k).copied().collect();
            members.sort_unstable();
            cohorts.push(Cohort { kind, members, edge_budget: 0 });
        }
    }
    if counts.evolved > 0 {
        let spec = evolve.ok_or_else(|| Error::Config("evolved bots requested without a diffusion model".into()))?;
        let mut humans = labeled_of(g, Label::Human);
        if humans.len() < counts.evolved {
            return Err(Error::Domain(format!(
                "need {} labeled human sources, have {}",
                counts.evolved,
                humans.len()
            )));
        }
        humans.shuffle(&mut r);
        let sources: Matrix = g.features().select_rows(&humans[..counts.evolved]);
        let generated = spec.diffusion.generate(&sources, spec.t_corrupt, r.random())?;
        let ids = g.inject_nodes(&generated, Label::Bot)?;
        cohorts.push(Cohort { kind: CohortKind::Evolved, members: ids, edge_budget: 0 });
    }
    let sizes: Vec<usize> = cohorts.iter().map(|c| c.members.len()).collect();
    for (c, b) in cohorts.iter_mut().zip(split_budget(edge_budget, &sizes)) {
        c.edge_budget = b;
    }
    let out = BotCohorts { cohorts };
    out.check(g)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{train_diffusion, DiffusionHyper, NoiseSchedule, ScheduleSpec};
    use crate::synth::{synth_dataset, SynthSpec};

    fn diffusion(g: &SocialGraph) -> BotDiffusion {
        let s = NoiseSchedule::new(ScheduleSpec { steps: 10, ..ScheduleSpec::default() }).unwrap();
        let h = DiffusionHyper { iterations: 20, batch_size: 16, hidden: 8, ..DiffusionHyper::default() };
        train_diffusion(g.features(), &s, &h, 0).unwrap().diffusion
    }

    #[test]
    fn empty_counts_leave_graph_unchanged() {
        let mut g = synth_dataset(&SynthSpec { nodes: 100, ..SynthSpec::default() }, 1).unwrap();
        let before = g.clone();
        let c = build_cohorts(&mut g, CohortCounts::default(), None, 10, 0).unwrap();
        assert!(c.cohorts.is_empty());
        assert_eq!(g, before);
    }

    #[test]
    fn small_build() {
        let mut g = synth_dataset(&SynthSpec { nodes: 100, ..SynthSpec::default() }, 2).unwrap();
        let d = diffusion(&g);
        let c = build_cohorts(&mut g, CohortCounts::new(4, 2, 1), Some(EvolveSpec { diffusion: &d, t_corrupt: 2 }), 7, 3)
            .unwrap();
        assert_eq!(c.members(CohortKind::Automated).len(), 4);
        assert_eq!(c.members(CohortKind::Cyborg).len(), 2);
        assert_eq!(c.members(CohortKind::Evolved), &[100]);
        assert_eq!(g.n(), 101);
        assert_eq!(g.degree(100), 0);
        assert_eq!(g.label(100), Label::Bot);
        assert_eq!(c.total_budget(), 7);
        assert!(c.members(CohortKind::Automated).iter().all(|v| !c.members(CohortKind::Cyborg).contains(v)));
    }

    #[test]
    fn automated_have_lower_degree_than_cyborg() {
        for seed in 0..5 {
            let mut g = synth_dataset(&SynthSpec { nodes: 200, ..SynthSpec::default() }, seed).unwrap();
            let c = build_cohorts(&mut g, CohortCounts::new(5, 5, 0), None, 10, seed).unwrap();
            let mean = |k| {
                let m = c.members(k);
                m.iter().map(|&v| g.degree(v) as f64).sum::<f64>() / m.len() as f64
            };
            assert!(mean(CohortKind::Automated) <= mean(CohortKind::Cyborg));
        }
    }

    #[test]
    fn insufficient_bots_and_missing_model() {
        let mut g = synth_dataset(&SynthSpec { nodes: 30, ..SynthSpec::default() }, 1).unwrap();
        assert!(matches!(build_cohorts(&mut g, CohortCounts::new(20, 0, 0), None, 0, 0), Err(Error::Domain(_))));
        assert!(build_cohorts(&mut g, CohortCounts::new(0, 0, 1), None, 0, 0).is_err());
    }

    #[test]
    fn budget_split() {
        assert_eq!(split_budget(10, &[2, 1, 1]), vec![5, 3, 2]);
        assert_eq!(split_budget(7, &[1, 1, 1]), vec![3, 2, 2]);
        assert_eq!(split_budget(5, &[0, 3, 0]), vec![0, 5, 0]);
        assert_eq!(split_budget(5, &[0, 0]), vec![0, 0]);
        for total in 0..50 {
            assert_eq!(split_budget(total, &[20, 10, 10]).iter().sum::<usize>(), total);
        }
    }

    #[test]
    fn csv_and_restriction() {
        let mut g = synth_dataset(&SynthSpec { nodes: 100, ..SynthSpec::default() }, 4).unwrap();
        let c = build_cohorts(&mut g, CohortCounts::new(3, 2, 0), None, 9, 1).unwrap();
        let only = c.restricted(&[CohortKind::Automated], 9);
        assert_eq!(only.cohorts.len(), 1);
        assert_eq!(only.total_budget(), 9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        c.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("node_id,cohort\n"));
    }
}
