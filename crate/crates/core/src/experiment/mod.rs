//! End-to-end runner: data, surrogate and detector zoo, bot cohorts, attack
//! methods at matched budgets, and the run report.

mod config;
mod report;

pub use config::{AttackConfig, DataConfig, DiffusionConfig, Method, TargetClass, TargetConfig};
pub use report::{
    degree_histogram, edge_type_report, format_summary, stats_report, AgentSpend, DetectorScore, EdgeTypes, Failure,
    LedgerCheck, MethodRow, RunReport, SeedReport, StatsRow, SummaryRow, Timing, SCHEMA_VERSION,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::abstraction::PoolingOptions;
use crate::baselines::{dice_attack, random_attack};
use crate::cohorts::{build_cohorts, BotCohorts, CohortCounts, CohortKind, EvolveSpec};
use crate::detectors::{evaluate, train_detector, Detector, DetectorKind, GcnParams};
use crate::diffusion::{train_diffusion, BotDiffusion, NoiseSchedule};
use crate::error::{Error, Result};
use crate::graph::io::{load_graph, save_graph, write_edge_list, write_masks, write_node_table};
use crate::graph::{graph_stats, Budget, Label, SocialGraph, StatsOptions};
use crate::marl::{run_attack, GameConfig, StatePooling, TraceEntry};
use crate::rng;

const SURROGATE: u64 = 1;
const ZOO: u64 = 2;
const DIFFUSION: u64 = 3;
const COHORTS: u64 = 4;
const TARGETS: u64 = 5;
const ATTACK: u64 = 6;
const RANDOM: u64 = 7;
const DICE: u64 = 8;

/// Seed of sub-stream `stream` of `seed`.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    rng::derive(seed, stream).random()
}

/// A stage that failed, for the report's failure list.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

/// One attacked graph plus what the attack reported about itself.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub r: f64,
    pub poisoned: SocialGraph,
    pub trace: Vec<TraceEntry>,
    pub agents: Vec<AgentSpend>,
    pub state_secs_per_step: Option<f64>,
    pub refreshes: usize,
}

/// Everything a seed produced; the report plus in-memory artifacts.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub report: SeedReport,
    pub clean: SocialGraph,
    /// The clean graph with the evolved bots appended (still isolated).
    pub injected: SocialGraph,
    pub cohorts: BotCohorts,
    pub surrogate: GcnParams,
    pub zoo: Vec<(String, Detector)>,
    pub diffusion: Option<BotDiffusion>,
    pub runs: Vec<MethodRun>,
    /// marl-full graphs for the statistics sweep, by ratio.
    pub sweep: Vec<MethodRun>,
}

impl SeedRun {
    pub fn run(&self, m: Method) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.method == m)
    }
}

pub fn load_data(config: &DataConfig, seed: u64) -> Result<SocialGraph> {
    let g = match &config.path {
        Some(p) => load_graph(p, seed)?,
        None => {
            if config.synth.is_degenerate() {
                log::warn!("synthetic spec has p_in <= p_out and no feature gap; the task is unlearnable");
            }
            crate::synth::synth_dataset(&config.synth, seed)?
        }
    };
    if !g.perturbation_log().is_empty() {
        return Err(Error::Config("input graph already carries a perturbation ledger".into()));
    }
    Ok(g)
}

pub fn train_surrogate(g: &SocialGraph, config: &AttackConfig, seed: u64) -> Result<GcnParams> {
    match train_detector(g, DetectorKind::Gcn, &config.surrogate, sub_seed(seed, SURROGATE))?.detector {
        Detector::Gcn(p) => Ok(p),
        _ => unreachable!("GCN training returns a GCN"),
    }
}

pub fn train_zoo(g: &SocialGraph, config: &AttackConfig, seed: u64) -> Result<Vec<(String, Detector)>> {
    config
        .detectors
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let kind = DetectorKind::parse(name)?;
            let d = train_detector(g, kind, &config.zoo, sub_seed(seed, ZOO + 16 * (i as u64 + 1)))?.detector;
            Ok((name.clone(), d))
        })
        .collect()
}

/// Features of labeled human training nodes.
pub fn human_train_features(g: &SocialGraph) -> crate::num::Matrix {
    let mut ids: Vec<usize> = g.masks.train.iter().copied().filter(|&v| g.label(v) == Label::Human).collect();
    ids.sort_unstable();
    g.features().select_rows(&ids)
}

pub fn train_bot_diffusion(g: &SocialGraph, config: &DiffusionConfig, seed: u64) -> Result<BotDiffusion> {
    let schedule = NoiseSchedule::new(config.schedule)?;
    Ok(train_diffusion(&human_train_features(g), &schedule, &config.train, sub_seed(seed, DIFFUSION))?.diffusion)
}

/// Shuffled labeled test nodes of the requested classes.
pub fn select_targets(g: &SocialGraph, t: &TargetConfig, seed: u64) -> Result<Vec<usize>> {
    let mut test: Vec<usize> = g.masks.test.iter().copied().filter(|&v| g.label(v) != Label::Unknown).collect();
    test.sort_unstable();
    test.dedup();
    test.shuffle(&mut rng::derive(seed, TARGETS));
    let of = |l: Label| test.iter().copied().filter(move |&v| g.label(v) == l);
    let take = |n: usize| if t.count == 0 { usize::MAX } else { n };
    let mut out: Vec<usize> = match t.class {
        TargetClass::Any => test.iter().copied().take(take(t.count)).collect(),
        TargetClass::Human => of(Label::Human).take(take(t.count)).collect(),
        TargetClass::Bot => of(Label::Bot).take(take(t.count)).collect(),
        TargetClass::Balanced => {
            let h = t.count / 2;
            of(Label::Human).take(take(h)).chain(of(Label::Bot).take(take(t.count - h))).collect()
        }
    };
    if out.is_empty() {
        return Err(Error::Domain("no eligible target nodes in the test mask".into()));
    }
    if t.count > 0 && out.len() < t.count {
        log::warn!("only {} of {} requested targets are available", out.len(), t.count);
    }
    out.sort_unstable();
    Ok(out)
}

/// Serialized node table, edge list and masks.
pub fn graph_bytes(g: &SocialGraph) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_node_table(g, &mut buf)?;
    write_edge_list(g, &mut buf)?;
    write_masks(&g.masks, &mut buf)?;
    Ok(buf)
}

struct Clock {
    timings: Vec<Timing>,
}

impl Clock {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> std::result::Result<T, StageError> {
        let t0 = Instant::now();
        let out = f().map_err(|error| StageError { stage: name.to_string(), error });
        self.timings.push(Timing { phase: name.to_string(), secs: t0.elapsed().as_secs_f64() });
        out
    }
}

fn game_for(method: Method, config: &AttackConfig) -> GameConfig {
    let pooling = if method == Method::MarlSa {
        StatePooling::Structural { t_up: config.t_up, options: PoolingOptions::default() }
    } else {
        StatePooling::Mean
    };
    GameConfig { pooling, ..config.game }
}

struct Setting<'a> {
    config: &'a AttackConfig,
    clean: &'a SocialGraph,
    injected: &'a SocialGraph,
    cohorts: &'a BotCohorts,
    surrogate: &'a GcnParams,
    targets: &'a [usize],
    seed: u64,
}

fn attack(s: &Setting<'_>, method: Method, r: f64) -> Result<MethodRun> {
    let budget = AttackConfig::edge_budget(r, s.clean.num_edges());
    let plain = |poisoned| MethodRun {
        method,
        r,
        poisoned,
        trace: Vec::new(),
        agents: Vec::new(),
        state_secs_per_step: None,
        refreshes: 0,
    };
    match method {
        Method::Random => Ok(plain(random_attack(s.clean, budget, sub_seed(s.seed, RANDOM))?)),
        Method::Dice => Ok(plain(dice_attack(s.clean, budget, sub_seed(s.seed, DICE))?)),
        _ if budget == 0 => Ok(plain(s.clean.clone())),
        _ => {
            let kinds = method.kinds();
            let base = if kinds.contains(&CohortKind::Evolved) { s.injected } else { s.clean };
            let cohorts = s.cohorts.restricted(kinds, budget);
            let game = game_for(method, s.config);
            let out = run_attack(base, &cohorts, s.targets, s.surrogate, &game, sub_seed(s.seed, ATTACK))?;
            let agents = out
                .policies
                .iter()
                .zip(&out.spent)
                .map(|(p, &spent)| AgentSpend { agent: p.name().to_string(), budget: p.budget, spent })
                .collect();
            Ok(MethodRun {
                method,
                r,
                poisoned: out.poisoned,
                trace: out.trace,
                agents,
                state_secs_per_step: Some(out.state_secs_per_step),
                refreshes: out.refreshes,
            })
        }
    }
}

fn ledger_check(run: &MethodRun, clean: &SocialGraph, clean_bytes: &[u8]) -> Result<LedgerCheck> {
    let back = run.poisoned.reconstruct_clean()?;
    Ok(LedgerCheck {
        method: run.method.name().to_string(),
        r: run.r,
        budget: AttackConfig::edge_budget(run.r, clean.num_edges()),
        edge_ops: run.poisoned.edge_ops(),
        agents: run.agents.clone(),
        reconstructs_clean: graph_bytes(&back)? == clean_bytes,
    })
}

/// Runs the whole pipeline for one seed.
pub fn run_seed(config: &AttackConfig, seed: u64) -> std::result::Result<SeedRun, StageError> {
    config.validate().map_err(|error| StageError { stage: "config".into(), error })?;
    let mut clock = Clock { timings: Vec::new() };
    let clean = clock.stage("data", || load_data(&config.data, seed))?;
    let surrogate = clock.stage("surrogate", || train_surrogate(&clean, config, seed))?;
    let zoo = clock.stage("zoo", || train_zoo(&clean, config, seed))?;
    let methods = config.method_list();
    let delta_e = AttackConfig::edge_budget(config.r, clean.num_edges());
    let sweep_needs_evolved = methods.contains(&Method::MarlFull) && config.stats_ratios.iter().any(|&r| r > 0.0);
    let wants_evolved = config.cohorts.evolved > 0
        && (methods.iter().any(|m| m.kinds().contains(&CohortKind::Evolved)) || sweep_needs_evolved);
    let diffusion = if wants_evolved {
        Some(clock.stage("diffusion", || train_bot_diffusion(&clean, &config.diffusion, seed))?)
    } else {
        None
    };
    let (injected, cohorts) = clock.stage("cohorts", || {
        let mut g = clean.clone();
        g.set_budget(Budget { nodes: Some(config.delta_v), ..g.budget() });
        let counts = CohortCounts { evolved: if wants_evolved { config.cohorts.evolved } else { 0 }, ..config.cohorts };
        let evolve = diffusion.as_ref().map(|d| EvolveSpec {
            diffusion: d,
            t_corrupt: config.diffusion.t_corrupt.unwrap_or_else(|| d.default_t_corrupt()),
        });
        let c = build_cohorts(&mut g, counts, evolve, delta_e, sub_seed(seed, COHORTS))?;
        Ok((g, c))
    })?;
    let targets = clock.stage("targets", || select_targets(&clean, &config.targets, seed))?;
    let setting = Setting {
        config,
        clean: &clean,
        injected: &injected,
        cohorts: &cohorts,
        surrogate: &surrogate,
        targets: &targets,
        seed,
    };
    let mut runs = Vec::new();
    for &m in &methods {
        runs.push(clock.stage(m.name(), || attack(&setting, m, config.r))?);
    }
    let mut sweep = Vec::new();
    if methods.contains(&Method::MarlFull) {
        for &r in &config.stats_ratios {
            let reuse = runs.iter().find(|x| x.method == Method::MarlFull && x.r == r).cloned();
            let run = match reuse {
                Some(x) => x,
                None => clock.stage(&format!("sweep-{r}"), || attack(&setting, Method::MarlFull, r))?,
            };
            sweep.push(run);
        }
    }

    let report = clock.stage("evaluate", || {
        let sur = Detector::Gcn(surrogate.clone());
        let mut detectors = Vec::new();
        let mut rows = Vec::new();
        for (name, det) in &zoo {
            let clean_target_acc = evaluate(&clean, det, &targets)?;
            detectors.push(DetectorScore {
                detector: name.clone(),
                clean_target_acc,
                clean_test_acc: evaluate(&clean, det, &clean.masks.test)?,
            });
            for run in &runs {
                let attacked = evaluate(&run.poisoned, det, &targets)?;
                rows.push(MethodRow {
                    method: run.method.name().to_string(),
                    detector: name.clone(),
                    clean: clean_target_acc,
                    attacked,
                    drop: clean_target_acc - attacked,
                    surrogate_attacked: evaluate(&run.poisoned, &sur, &targets)?,
                });
            }
        }
        let clean_bytes = graph_bytes(&clean)?;
        let mut ledger = Vec::new();
        for run in runs.iter().chain(sweep.iter().filter(|s| !runs.iter().any(|x| x.method == s.method && x.r == s.r))) {
            ledger.push(ledger_check(run, &clean, &clean_bytes)?);
        }
        Ok(SeedReport {
            seed,
            nodes: clean.n(),
            edges: clean.num_edges(),
            delta_e,
            injected: injected.n() - clean.n(),
            targets: targets.clone(),
            detectors,
            rows,
            ledger,
            stats: Vec::new(),
            method_stats: BTreeMap::new(),
            edge_types: BTreeMap::new(),
            degree_histograms: BTreeMap::new(),
            state_secs_per_step: runs
                .iter()
                .filter_map(|r| r.state_secs_per_step.map(|s| (r.method.name().to_string(), s)))
                .collect(),
            timings: Vec::new(),
        })
    })?;
    let mut report = report;
    clock.stage("stats", || {
        let opts = StatsOptions::default();
        let acc = |g: &SocialGraph| -> Result<Option<f64>> {
            match zoo.first() {
                Some((_, d)) => Ok(Some(evaluate(g, d, &targets)?)),
                None => Ok(None),
            }
        };
        let graphs: Vec<&SocialGraph> = sweep.iter().map(|s| &s.poisoned).collect();
        let ratios: Vec<f64> = sweep.iter().map(|s| s.r).collect();
        report.stats = stats_report(&clean, &graphs, &ratios, &opts)?;
        for (row, g) in report.stats.iter_mut().zip(&graphs) {
            row.stats.acc = acc(g)?;
        }
        for run in &runs {
            let mut st = graph_stats(&run.poisoned, &opts);
            st.acc = acc(&run.poisoned)?;
            let added = run.poisoned.num_edges().saturating_sub(clean.num_edges());
            report.method_stats.insert(run.method.name().to_string(), StatsRow { r: run.r, edges_added: added, stats: st });
        }
        report.edge_types.insert("clean".into(), edge_type_report(&clean, None));
        report.degree_histograms.insert("clean".into(), degree_histogram(&clean));
        for run in &runs {
            report.edge_types.insert(run.method.name().to_string(), edge_type_report(&run.poisoned, None));
            report.degree_histograms.insert(run.method.name().to_string(), degree_histogram(&run.poisoned));
        }
        Ok(())
    })?;
    report.timings = clock.timings;
    Ok(SeedRun { report, clean, injected, cohorts, surrogate, zoo, diffusion, runs, sweep })
}

#[derive(Serialize)]
struct TraceLine<'a> {
    seed: u64,
    method: &'a str,
    #[serde(flatten)]
    entry: &'a TraceEntry,
}

fn write_artifacts(dir: &Path, run: &SeedRun, trace: &mut impl Write) -> Result<()> {
    let s = run.report.seed;
    let graphs = dir.join("graphs");
    let ckpt = dir.join("checkpoints");
    fs::create_dir_all(&graphs)?;
    fs::create_dir_all(&ckpt)?;
    save_graph(&run.clean, &graphs.join(format!("seed{s}-clean")))?;
    run.cohorts.write_csv(&graphs.join(format!("seed{s}-cohorts.csv")))?;
    for m in &run.runs {
        save_graph(&m.poisoned, &graphs.join(format!("seed{s}-{}", m.method.name())))?;
        for e in &m.trace {
            serde_json::to_writer(&mut *trace, &TraceLine { seed: s, method: m.method.name(), entry: e })?;
            trace.write_all(b"\n")?;
        }
    }
    Detector::Gcn(run.surrogate.clone()).to_checkpoint().save(&ckpt.join(format!("seed{s}-surrogate.json")))?;
    for (name, d) in &run.zoo {
        d.to_checkpoint().save(&ckpt.join(format!("seed{s}-{name}.json")))?;
    }
    if let Some(d) = &run.diffusion {
        d.save(&ckpt.join(format!("seed{s}-diffusion.json")))?;
    }
    Ok(())
}

/// Runs every configured seed. A failing seed is recorded in the report's
/// failure list and the remaining seeds still run. With `out`, the run
/// directory receives the config copy, graphs, checkpoints, trace and tables.
pub fn run_experiment(config: &AttackConfig, out: Option<&Path>) -> Result<RunReport> {
    config.validate()?;
    let mut trace = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.toml"), config.to_toml())?;
            Some(std::io::BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?))
        }
        None => None,
    };
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    for &seed in &config.seeds {
        match run_seed(config, seed) {
            Ok(run) => {
                if let (Some(dir), Some(t)) = (out, trace.as_mut()) {
                    if let Err(e) = write_artifacts(dir, &run, t) {
                        failures.push(Failure { seed, stage: "artifacts".into(), message: e.to_string() });
                    }
                }
                log::info!("seed {seed} done");
                seeds.push(run.report);
            }
            Err(e) => {
                log::error!("seed {seed} failed at {e}");
                failures.push(Failure { seed, stage: e.stage, message: e.error.to_string() });
            }
        }
    }
    if let Some(mut t) = trace {
        t.flush()?;
    }
    let report = RunReport::new(config.clone(), seeds, failures);
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthSpec;

    fn tiny() -> AttackConfig {
        let mut c = AttackConfig::default();
        c.data.synth = SynthSpec { nodes: 120, p_in: 0.12, p_out: 0.01, ..SynthSpec::default() };
        c.detectors = vec!["gcn".into(), "sgc".into()];
        c.surrogate.epochs = 60;
        c.zoo.epochs = 60;
        c.diffusion.schedule.steps = 10;
        c.diffusion.train.iterations = 30;
        c.diffusion.train.hidden = 16;
        c.cohorts = CohortCounts::new(4, 2, 3);
        c.delta_v = 3;
        c.targets.count = 6;
        c.game.episodes = 1;
        c.stats_ratios = vec![0.0, 0.05];
        c.sa = true;
        c
    }

    #[test]
    fn zero_budget_means_zero_drop() {
        let mut c = tiny();
        c.r = 0.0;
        c.stats_ratios = vec![0.0];
        let run = run_seed(&c, 1).unwrap();
        assert_eq!(run.report.delta_e, 0);
        for row in &run.report.rows {
            assert_eq!(row.drop, 0.0, "{row:?}");
        }
        let mut expect = graph_stats(&run.clean, &StatsOptions::default());
        expect.acc = run.report.stats[0].stats.acc;
        assert_eq!(run.report.stats[0].stats, expect);
    }

    #[test]
    fn tiny_pipeline_keeps_every_invariant() {
        let c = tiny();
        let run = run_seed(&c, 2).unwrap();
        let rep = &run.report;
        assert_eq!(rep.rows.len(), 2 * c.method_list().len());
        assert!(rep.ledger.iter().all(|l| l.within_budget() && l.reconstructs_clean), "{:?}", rep.ledger);
        assert!(rep.ledger.iter().all(|l| l.edge_ops <= rep.delta_e || l.r != c.r));
        assert_eq!(rep.injected, 3);
        assert_eq!(rep.stats.len(), 2);
        assert_eq!(rep.stats[0].edges_added, 0);
        assert!(rep.stats[1].stats.ad >= rep.stats[0].stats.ad);
        for e in rep.edge_types.values() {
            assert!((e.human_human + e.human_bot + e.bot_bot - 1.0).abs() < 1e-12);
        }
        assert!(rep.state_secs_per_step.contains_key("marl-sa"));
        assert!(run.run(Method::MarlSa).unwrap().refreshes > 0);
        let again = run_seed(&c, 2).unwrap();
        assert_eq!(again.report.rows, rep.rows);
        assert_eq!(graph_bytes(&again.run(Method::MarlFull).unwrap().poisoned).unwrap(), graph_bytes(&run.run(Method::MarlFull).unwrap().poisoned).unwrap());
    }

    #[test]
    fn run_directory_layout_and_failures() {
        let mut c = tiny();
        c.seeds = vec![0];
        c.sa = false;
        c.methods = vec![Method::MarlAuto, Method::Random];
        let dir = tempfile::tempdir().unwrap();
        let rep = run_experiment(&c, Some(dir.path())).unwrap();
        assert!(rep.is_success());
        for f in ["config.toml", "trace.jsonl", "report.json", "tables/methods.csv", "tables/stats.csv", "graphs/seed0-clean.edges.txt", "graphs/seed0-random.perturbations.json", "checkpoints/seed0-surrogate.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(AttackConfig::load(&dir.path().join("config.toml")).unwrap(), c);
        let line = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
        let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(first["method"], "marl-auto");
        assert!(first["reward"].as_f64().unwrap().abs() == 1.0);

        c.cohorts.automated = 1000;
        let bad = run_experiment(&c, None).unwrap();
        assert_eq!(bad.failures.len(), 1);
        assert_eq!(bad.failures[0].stage, "cohorts");
        assert!(bad.seeds.is_empty());
    }

    #[test]
    fn balanced_targets() {
        let g = crate::synth::synth_dataset(&SynthSpec { nodes: 100, ..SynthSpec::default() }, 3).unwrap();
        let t = select_targets(&g, &TargetConfig { count: 6, class: TargetClass::Balanced }, 1).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.iter().filter(|&&v| g.label(v) == Label::Bot).count(), 3);
        assert!(t.iter().all(|v| g.masks.test.contains(v)));
        let all = select_targets(&g, &TargetConfig { count: 0, class: TargetClass::Any }, 1).unwrap();
        assert_eq!(all.len(), g.masks.test.len());
        assert_eq!(t, select_targets(&g, &TargetConfig { count: 6, class: TargetClass::Balanced }, 1).unwrap());
    }
}
