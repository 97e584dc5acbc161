use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use edgeforge::baselines::{dice_attack, random_attack};
use edgeforge::cohorts::{build_cohorts, BotCohorts, CohortCounts, EvolveSpec};
use edgeforge::detectors::{evaluate, train_detector, Checkpoint, Detector, DetectorKind, TrainConfig};
use edgeforge::diffusion::{train_diffusion, BotDiffusion, DiffusionHyper, NoiseSchedule, ScheduleSpec};
use edgeforge::experiment::{
    edge_type_report, format_summary, human_train_features, run_experiment, select_targets, AttackConfig, Method,
    RunReport, TargetClass, TargetConfig,
};
use edgeforge::graph::io::{load_graph, save_graph};
use edgeforge::graph::{graph_stats, Budget, StatsOptions};
use edgeforge::marl::{run_attack, write_trace, GameConfig, StatePooling};
use edgeforge::synth::{synth_dataset, SynthSpec};
use edgeforge::SocialGraph;

#[derive(Parser)]
#[command(name = "edgeforge", version, about = "Edge-injection attacks on GNN social bot detectors")]
struct Cli {
    /// Log level filter (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a two-block synthetic benchmark graph.
    Synth(SynthArgs),
    /// Train a detector on a stored graph's train mask.
    TrainDetector(TrainDetectorArgs),
    /// Train the feature diffusion model on labeled human training nodes.
    TrainDiffusion(TrainDiffusionArgs),
    /// Select automated/cyborg bots and inject evolved bots.
    GenerateBots(GenerateBotsArgs),
    /// Run the multi-agent attack on a graph with bot cohorts.
    Attack(AttackArgs),
    /// Run a Random or DICE baseline.
    Baseline(BaselineArgs),
    /// Accuracy of a detector checkpoint on a graph.
    Evaluate(EvaluateArgs),
    /// Graph statistics and edge-type fractions.
    Stats(StatsArgs),
    /// Full experiment: every stage for every seed, written to a run directory.
    Run(RunArgs),
    /// Re-check a run's report and rebuild its tables.
    Report(ReportArgs),
    /// Show or check experiment configuration files.
    Config(ConfigArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    mu_gap: Option<f64>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    bot_fraction: Option<f64>,
}

#[derive(Args)]
struct GraphArg {
    /// Graph file prefix (`<prefix>.nodes.csv`, `.edges.txt`, `.masks.csv`).
    #[arg(long)]
    graph: PathBuf,
    /// Seed for the stratified split when the mask file is absent.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

impl GraphArg {
    fn load(&self) -> Result<SocialGraph> {
        load_graph(&self.graph, self.split_seed).with_context(|| format!("loading graph {}", self.graph.display()))
    }
}

#[derive(Args)]
struct TrainDetectorArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// gcn, sgc or sage.
    #[arg(long, default_value = "gcn")]
    kind: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct TrainDiffusionArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args)]
struct GenerateBotsArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Diffusion checkpoint; required when `--evolved` is positive.
    #[arg(long)]
    diffusion: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    automated: usize,
    #[arg(long, default_value_t = 10)]
    cyborg: usize,
    #[arg(long, default_value_t = 10)]
    evolved: usize,
    /// Edge budget as a fraction of the graph's edges.
    #[arg(long, default_value_t = 0.15)]
    r: f64,
    #[arg(long)]
    t_corrupt: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TargetArgs {
    /// Number of test-node targets; 0 takes every eligible node.
    #[arg(long, default_value_t = 20)]
    targets: usize,
    /// balanced, bot, human or any.
    #[arg(long, default_value = "balanced")]
    target_class: String,
}

impl TargetArgs {
    fn config(&self) -> Result<TargetConfig> {
        let class = match self.target_class.as_str() {
            "balanced" => TargetClass::Balanced,
            "bot" => TargetClass::Bot,
            "human" => TargetClass::Human,
            "any" => TargetClass::Any,
            other => bail!("unknown target class `{other}`"),
        };
        Ok(TargetConfig { count: self.targets, class })
    }
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Cohort file written by `generate-bots`.
    #[arg(long)]
    cohorts: PathBuf,
    /// Surrogate GCN checkpoint.
    #[arg(long)]
    surrogate: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// marl-full, marl-auto, marl-auto-cyborg or marl-sa.
    #[arg(long, default_value = "marl-full")]
    method: String,
    #[command(flatten)]
    targets: TargetArgs,
    #[arg(long)]
    episodes: Option<usize>,
    /// Structural-entropy state abstraction.
    #[arg(long)]
    sa: bool,
    #[arg(long, default_value_t = 10)]
    t_up: usize,
    /// JSON-lines trace output.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// random or dice.
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 0.15)]
    r: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long)]
    detector: PathBuf,
    /// File of node ids (one per line); the test mask when absent.
    #[arg(long)]
    nodes: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// One or more graph prefixes.
    #[arg(long, required = true, num_args = 1..)]
    graph: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    sa: bool,
    #[arg(long)]
    t_up: Option<usize>,
    /// Runs seeds 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Parent of the `run-<timestamp>` directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A run directory containing report.json.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    print_defaults: bool,
    /// Validate a config file and print it with defaults filled in.
    #[arg(long)]
    check: Option<PathBuf>,
}

fn save(g: &SocialGraph, prefix: &Path) -> Result<()> {
    save_graph(g, prefix).with_context(|| format!("writing graph {}", prefix.display()))?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        nodes: a.nodes.unwrap_or(d.nodes),
        p_in: a.p_in.unwrap_or(d.p_in),
        p_out: a.p_out.unwrap_or(d.p_out),
        mu_gap: a.mu_gap.unwrap_or(d.mu_gap),
        dims: a.dims.unwrap_or(d.dims),
        bot_fraction: a.bot_fraction.unwrap_or(d.bot_fraction),
        ..d
    };
    if spec.is_degenerate() {
        log::warn!("p_in <= p_out and mu_gap = 0: the classification task is unlearnable");
    }
    let g = synth_dataset(&spec, a.seed)?;
    save(&g, &a.out)?;
    println!("{} nodes, {} edges -> {}", g.n(), g.num_edges(), a.out.display());
    Ok(())
}

fn train_det(a: TrainDetectorArgs) -> Result<()> {
    let g = a.graph.load()?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: a.epochs.unwrap_or(d.epochs),
        hidden: a.hidden.unwrap_or(d.hidden),
        lr: a.lr.unwrap_or(d.lr),
    };
    let trained = train_detector(&g, DetectorKind::parse(&a.kind)?, &cfg, a.seed)?;
    trained.detector.to_checkpoint().save(&a.out)?;
    let acc = evaluate(&g, &trained.detector, &g.masks.test)?;
    println!("{} test accuracy {acc:.4} -> {}", a.kind, a.out.display());
    Ok(())
}

fn train_diff(a: TrainDiffusionArgs) -> Result<()> {
    let g = a.graph.load()?;
    let spec = ScheduleSpec { steps: a.steps.unwrap_or(ScheduleSpec::default().steps), ..ScheduleSpec::default() };
    let d = DiffusionHyper::default();
    let hyper = DiffusionHyper { iterations: a.iterations.unwrap_or(d.iterations), hidden: a.hidden.unwrap_or(d.hidden), ..d };
    let feats = human_train_features(&g);
    let trained = train_diffusion(&feats, &NoiseSchedule::new(spec)?, &hyper, a.seed)?;
    trained.diffusion.save(&a.out)?;
    let last = trained.loss_trace.last().copied().unwrap_or(f64::NAN);
    println!("trained on {} human rows, final loss {last:.4} -> {}", feats.rows(), a.out.display());
    Ok(())
}

fn cohorts_path(prefix: &Path) -> PathBuf {
    PathBuf::from(format!("{}.cohorts.json", prefix.display()))
}

fn generate_bots(a: GenerateBotsArgs) -> Result<()> {
    let mut g = a.graph.load()?;
    let diffusion = match &a.diffusion {
        Some(p) => Some(BotDiffusion::load(p).with_context(|| format!("loading {}", p.display()))?),
        None if a.evolved > 0 => bail!("--evolved {} needs --diffusion", a.evolved),
        None => None,
    };
    let budget = AttackConfig::edge_budget(a.r, g.num_edges());
    g.set_budget(Budget { nodes: Some(g.injected_nodes().len() + a.evolved), ..g.budget() });
    let evolve = diffusion.as_ref().map(|d| EvolveSpec { diffusion: d, t_corrupt: a.t_corrupt.unwrap_or_else(|| d.default_t_corrupt()) });
    let c = build_cohorts(&mut g, CohortCounts::new(a.automated, a.cyborg, a.evolved), evolve, budget, a.seed)?;
    save(&g, &a.out)?;
    fs::write(cohorts_path(&a.out), serde_json::to_string_pretty(&c)?)?;
    for k in &c.cohorts {
        println!("{:<10} {:>4} bots, {:>5} edges", k.kind.name(), k.members.len(), k.edge_budget);
    }
    Ok(())
}

fn attack(a: AttackArgs) -> Result<()> {
    let g = a.graph.load()?;
    let cohorts: BotCohorts = serde_json::from_str(&fs::read_to_string(&a.cohorts)?).context("parsing cohort file")?;
    let surrogate = match Detector::from_checkpoint(&Checkpoint::load(&a.surrogate)?)? {
        Detector::Gcn(p) => p,
        other => bail!("surrogate must be a GCN, got {}", other.kind().name()),
    };
    let mut method = Method::parse(&a.method)?;
    if a.sa {
        method = Method::MarlSa;
    }
    if !method.is_marl() {
        bail!("`{}` is a baseline; use the baseline subcommand", method.name());
    }
    let restricted = cohorts.restricted(method.kinds(), cohorts.total_budget());
    let mut game = GameConfig::default();
    if let Some(e) = a.episodes {
        game.episodes = e;
    }
    if method == Method::MarlSa {
        game.pooling = StatePooling::Structural { t_up: a.t_up, options: Default::default() };
    }
    let targets = select_targets(&g, &a.targets.config()?, a.seed)?;
    let out = run_attack(&g, &restricted, &targets, &surrogate, &game, a.seed)?;
    save(&out.poisoned, &a.out)?;
    let ids: String = targets.iter().map(|v| format!("{v}\n")).collect();
    fs::write(format!("{}.targets.txt", a.out.display()), ids)?;
    if let Some(t) = &a.trace {
        write_trace(&out.trace, t)?;
    }
    println!(
        "{}: {} of {} edges added, final surrogate success {:.3}",
        method.name(),
        out.total_spent(),
        restricted.total_budget(),
        out.final_success_rate()
    );
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let g = a.graph.load()?;
    let budget = AttackConfig::edge_budget(a.r, g.num_edges());
    let out = match Method::parse(&a.method)? {
        Method::Random => random_attack(&g, budget, a.seed)?,
        Method::Dice => dice_attack(&g, budget, a.seed)?,
        m => bail!("`{}` is not a baseline", m.name()),
    };
    save(&out, &a.out)?;
    println!("{}: {} edge operations -> {}", a.method, out.edge_ops(), a.out.display());
    Ok(())
}

fn read_ids(path: &Path) -> Result<Vec<usize>> {
    fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<usize>().with_context(|| format!("bad node id `{l}` in {}", path.display())))
        .collect()
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let g = a.graph.load()?;
    let det = Detector::from_checkpoint(&Checkpoint::load(&a.detector)?)?;
    let nodes = match &a.nodes {
        Some(p) => read_ids(p)?,
        None => g.masks.test.clone(),
    };
    let acc = evaluate(&g, &det, &nodes)?;
    println!("{}", serde_json::json!({ "detector": det.kind().name(), "nodes": nodes.len(), "accuracy": acc }));
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    for p in &a.graph {
        let g = load_graph(p, a.split_seed).with_context(|| format!("loading graph {}", p.display()))?;
        let line = serde_json::json!({
            "graph": p.display().to_string(),
            "nodes": g.n(),
            "edges": g.num_edges(),
            "stats": graph_stats(&g, &StatsOptions::default()),
            "edge_types": edge_type_report(&g, None),
        });
        println!("{line}");
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let mut config = match &a.config {
        Some(p) => AttackConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => AttackConfig::default(),
    };
    if let Some(r) = a.r {
        config.r = r;
    }
    if a.sa {
        config.sa = true;
    }
    if let Some(t) = a.t_up {
        config.t_up = t;
    }
    if let Some(n) = a.seeds {
        config.seeds = (0..n).collect();
    }
    if let Some(e) = a.episodes {
        config.game.episodes = e;
    }
    if let Some(o) = a.out {
        config.output = o;
    }
    config.validate()?;
    let dir = config.output.join(format!("run-{}", chrono::Local::now().format("%Y%m%d-%H%M%S")));
    let report = run_experiment(&config, Some(&dir))?;
    print!("{}", format_summary(&report));
    println!("run directory: {}", dir.display());
    Ok(if report.is_success() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let report = RunReport::load(&a.run.join("report.json"))?;
    report.write_tables(&a.run.join("tables"))?;
    print!("{}", format_summary(&report));
    Ok(if report.is_success() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn config_cmd(a: ConfigArgs) -> Result<()> {
    match (a.print_defaults, &a.check) {
        (true, None) => print!("{}", AttackConfig::default().to_toml()),
        (false, Some(p)) => print!("{}", AttackConfig::load(p)?.to_toml()),
        _ => bail!("pass exactly one of --print-defaults or --check FILE"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).parse_default_env().init();
    let result = match cli.cmd {
        Cmd::Synth(a) => synth(a).map(|_| ExitCode::SUCCESS),
        Cmd::TrainDetector(a) => train_det(a).map(|_| ExitCode::SUCCESS),
        Cmd::TrainDiffusion(a) => train_diff(a).map(|_| ExitCode::SUCCESS),
        Cmd::GenerateBots(a) => generate_bots(a).map(|_| ExitCode::SUCCESS),
        Cmd::Attack(a) => attack(a).map(|_| ExitCode::SUCCESS),
        Cmd::Baseline(a) => baseline(a).map(|_| ExitCode::SUCCESS),
        Cmd::Evaluate(a) => evaluate_cmd(a).map(|_| ExitCode::SUCCESS),
        Cmd::Stats(a) => stats(a).map(|_| ExitCode::SUCCESS),
        Cmd::Run(a) => run(a),
        Cmd::Report(a) => report(a),
        Cmd::Config(a) => config_cmd(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
