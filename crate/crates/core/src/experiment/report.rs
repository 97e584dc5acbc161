use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{graph_stats, GraphStats, SocialGraph, StatsOptions};

use super::config::AttackConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Fractions of edges by endpoint class. Edges touching an unlabeled node are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeTypes {
    pub human_human: f64,
    pub human_bot: f64,
    pub bot_bot: f64,
    pub counted: usize,
}

/// Classifies each edge by the endpoint labels, or by `predictions` when given.
pub fn edge_type_report(g: &SocialGraph, predictions: Option<&[usize]>) -> EdgeTypes {
    let class = |v: usize| match predictions {
        Some(p) => p.get(v).copied(),
        None => g.label(v).class(),
    };
    let (mut hh, mut hb, mut bb) = (0usize, 0usize, 0usize);
    for (u, v) in g.edges() {
        match (class(u), class(v)) {
            (Some(0), Some(0)) => hh += 1,
            (Some(1), Some(1)) => bb += 1,
            (Some(_), Some(_)) => hb += 1,
            _ => {}
        }
    }
    let n = hh + hb + bb;
    if n == 0 {
        return EdgeTypes::default();
    }
    let f = |c: usize| c as f64 / n as f64;
    EdgeTypes { human_human: f(hh), human_bot: f(hb), bot_bot: f(bb), counted: n }
}

/// `hist[d]` = number of nodes of degree `d`.
pub fn degree_histogram(g: &SocialGraph) -> Vec<usize> {
    let degrees = g.degrees();
    let mut h = vec![0; degrees.iter().max().map_or(0, |d| d + 1)];
    for d in degrees {
        h[d] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub r: f64,
    pub edges_added: usize,
    pub stats: GraphStats,
}

/// One row per ratio; `poisoned[i]` is the graph attacked at `ratios[i]`.
pub fn stats_report(clean: &SocialGraph, poisoned: &[&SocialGraph], ratios: &[f64], opts: &StatsOptions) -> Result<Vec<StatsRow>> {
    if poisoned.len() != ratios.len() {
        return Err(Error::Dimension(format!("{} graphs for {} ratios", poisoned.len(), ratios.len())));
    }
    let base = clean.num_edges();
    Ok(ratios
        .iter()
        .zip(poisoned)
        .map(|(&r, g)| StatsRow { r, edges_added: g.num_edges().saturating_sub(base), stats: graph_stats(g, opts) })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub detector: String,
    pub clean_target_acc: f64,
    pub clean_test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub detector: String,
    pub clean: f64,
    pub attacked: f64,
    pub drop: f64,
    /// Surrogate accuracy on the targets after the attack.
    pub surrogate_attacked: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpend {
    pub agent: String,
    pub budget: usize,
    pub spent: usize,
}

/// Ledger checks for one poisoned graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub method: String,
    pub r: f64,
    pub budget: usize,
    pub edge_ops: usize,
    pub agents: Vec<AgentSpend>,
    /// Undoing the ledger reproduces the clean graph files byte for byte.
    pub reconstructs_clean: bool,
}

impl LedgerCheck {
    pub fn within_budget(&self) -> bool {
        self.edge_ops <= self.budget
            && self.agents.iter().all(|a| a.spent <= a.budget)
            && self.agents.iter().map(|a| a.spent).sum::<usize>() <= self.budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phase: String,
    pub secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub nodes: usize,
    pub edges: usize,
    pub delta_e: usize,
    pub injected: usize,
    pub targets: Vec<usize>,
    pub detectors: Vec<DetectorScore>,
    pub rows: Vec<MethodRow>,
    pub ledger: Vec<LedgerCheck>,
    /// Clean graph first (`r = 0`), then the marl-full sweep.
    pub stats: Vec<StatsRow>,
    pub method_stats: BTreeMap<String, StatsRow>,
    pub edge_types: BTreeMap<String, EdgeTypes>,
    pub degree_histograms: BTreeMap<String, Vec<usize>>,
    /// Mean state-construction seconds per step, per marl method.
    pub state_secs_per_step: BTreeMap<String, f64>,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub detector: String,
    pub seeds: usize,
    pub mean_clean: f64,
    pub mean_attacked: f64,
    pub mean_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: AttackConfig,
    pub seeds: Vec<SeedReport>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
}

const DROP_TOL: f64 = 1e-12;

impl RunReport {
    pub fn new(config: AttackConfig, seeds: Vec<SeedReport>, failures: Vec<Failure>) -> Self {
        let summary = summarize(&seeds);
        RunReport { schema_version: SCHEMA_VERSION, config, seeds, summary, failures }
    }

    /// Recomputes every drop from its two accuracy cells.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("report schema {} is not {SCHEMA_VERSION}", self.schema_version)));
        }
        for s in &self.seeds {
            for row in &s.rows {
                if (row.clean - row.attacked - row.drop).abs() > DROP_TOL {
                    return Err(Error::Domain(format!(
                        "seed {} {} on {}: drop {} != {} - {}",
                        s.seed, row.method, row.detector, row.drop, row.clean, row.attacked
                    )));
                }
            }
        }
        for row in &self.summary {
            if (row.mean_clean - row.mean_attacked - row.mean_drop).abs() > 1e-9 {
                return Err(Error::Domain(format!("summary drop for {} on {} disagrees", row.method, row.detector)));
            }
        }
        Ok(())
    }

    pub fn mean_drop(&self, method: &str, detector: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.method == method && r.detector == detector).map(|r| r.mean_drop)
    }

    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        self.check()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<RunReport> {
        let r: RunReport = serde_json::from_str(&fs::read_to_string(path)?)?;
        r.check()?;
        Ok(r)
    }

    /// Writes `report.json` and `tables/*.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("tables"))?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_tables(&dir.join("tables"))
    }

    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv_writer(&dir.join("summary.csv"))?;
        for row in &self.summary {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join("methods.csv"))?;
        w.write_record(["seed", "method", "detector", "clean", "attacked", "drop", "surrogate_attacked"]).map_err(csv_err)?;
        for s in &self.seeds {
            for r in &s.rows {
                w.write_record([
                    s.seed.to_string(),
                    r.method.clone(),
                    r.detector.clone(),
                    r.clean.to_string(),
                    r.attacked.to_string(),
                    r.drop.to_string(),
                    r.surrogate_attacked.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join("stats.csv"))?;
        w.write_record(["seed", "graph", "r", "edges_added", "acc", "ad", "lcc", "cc", "cpl", "gc", "ple", "de"]).map_err(csv_err)?;
        for s in &self.seeds {
            let sweep = s.stats.iter().map(|row| ("marl-full".to_string(), row.r, row.edges_added, &row.stats));
            let per_method = s.method_stats.iter().map(|(m, row)| (m.clone(), row.r, row.edges_added, &row.stats));
            for (name, r, added, st) in sweep.chain(per_method) {
                let name = if r == 0.0 && name == "marl-full" { "clean".to_string() } else { name };
                w.write_record(
                    [s.seed.to_string(), name, r.to_string(), added.to_string(), opt(st.acc), st.ad.to_string()]
                        .into_iter()
                        .chain([st.lcc.to_string(), st.cc.to_string(), opt(st.cpl), opt(st.gc), opt(st.ple), opt(st.de)]),
                )
                .map_err(csv_err)?;
            }
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join("edge_types.csv"))?;
        w.write_record(["seed", "graph", "human_human", "human_bot", "bot_bot", "edges"]).map_err(csv_err)?;
        for s in &self.seeds {
            for (name, e) in &s.edge_types {
                w.write_record([
                    s.seed.to_string(),
                    name.clone(),
                    e.human_human.to_string(),
                    e.human_bot.to_string(),
                    e.bot_bot.to_string(),
                    e.counted.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join("degrees.csv"))?;
        w.write_record(["seed", "graph", "degree", "count"]).map_err(csv_err)?;
        for s in &self.seeds {
            for (name, h) in &s.degree_histograms {
                for (d, c) in h.iter().enumerate().filter(|(_, c)| **c > 0) {
                    w.write_record([s.seed.to_string(), name.clone(), d.to_string(), c.to_string()]).map_err(csv_err)?;
                }
            }
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join("timings.csv"))?;
        w.write_record(["seed", "phase", "secs"]).map_err(csv_err)?;
        for s in &self.seeds {
            for t in &s.timings {
                w.write_record([s.seed.to_string(), t.phase.clone(), t.secs.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn summarize(seeds: &[SeedReport]) -> Vec<SummaryRow> {
    let mut acc: BTreeMap<(String, String), (usize, f64, f64)> = BTreeMap::new();
    let mut order = Vec::new();
    for s in seeds {
        for r in &s.rows {
            let key = (r.method.clone(), r.detector.clone());
            let e = acc.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (0, 0.0, 0.0)
            });
            e.0 += 1;
            e.1 += r.clean;
            e.2 += r.attacked;
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (n, c, a) = acc[&key];
            let (mean_clean, mean_attacked) = (c / n as f64, a / n as f64);
            SummaryRow {
                method: key.0,
                detector: key.1,
                seeds: n,
                mean_clean,
                mean_attacked,
                mean_drop: mean_clean - mean_attacked,
            }
        })
        .collect()
}

/// Human-readable table of the summary rows.
pub fn format_summary(report: &RunReport) -> String {
    let mut out = format!("{:<18} {:<10} {:>5} {:>8} {:>9} {:>8}\n", "method", "detector", "seeds", "clean", "attacked", "drop");
    for r in &report.summary {
        out.push_str(&format!(
            "{:<18} {:<10} {:>5} {:>8.4} {:>9.4} {:>8.4}\n",
            r.method, r.detector, r.seeds, r.mean_clean, r.mean_attacked, r.mean_drop
        ));
    }
    for f in &report.failures {
        out.push_str(&format!("FAILED seed {} at {}: {}\n", f.seed, f.stage, f.message));
    }
    out
}
