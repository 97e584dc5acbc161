//! Multi-agent Q-learning edge injection.
//!
//! One agent per bot cohort. At every step all agents look at the same state
//! (pooled graph embedding plus the current target), each proposes a
//! `(controlled node, target)` edge, and one proposal is executed. The reward
//! is +1 when the frozen surrogate misclassifies the target afterwards.

mod memory;
mod qnet;

pub use memory::{ReplayMemory, StepView, Transition};
pub use qnet::{QNet, QSample};

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{abstract_state, mean_pool_state, mean_rows, AbstractionCache, PoolingMatrix, PoolingOptions};
use crate::cohorts::{BotCohorts, CohortKind};
use crate::detectors::GcnParams;
use crate::error::{Error, Result};
use crate::graph::{Budget, SocialGraph};
use crate::num::{argmax, AdamConfig, AdamState, Matrix};
use crate::rng;

/// How the executed proposal is picked among agents that proposed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Probability proportional to remaining budget.
    #[default]
    Proportional,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StatePooling {
    #[default]
    Mean,
    /// Path-entropy pooling, rebuilt every `t_up` steps.
    Structural {
        t_up: usize,
        #[serde(default)]
        options: PoolingOptions,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub gamma: f64,
    /// Training episodes; a final greedy episode follows.
    pub episodes: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub capacity: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub q_width: usize,
    pub aggregation: Aggregation,
    pub pooling: StatePooling,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            gamma: 0.2,
            episodes: 3,
            eps_start: 0.3,
            eps_end: 0.0,
            capacity: 10_000,
            batch_size: 32,
            lr: 1e-3,
            q_width: 16,
            aggregation: Aggregation::Proportional,
            pooling: StatePooling::Mean,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        let eps = |e: f64| (0.0..=1.0).contains(&e);
        if !eps(self.eps_start) || !eps(self.eps_end) {
            return Err(Error::Config("exploration rates must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.q_width == 0 || self.capacity == 0 {
            return Err(Error::Config("batch size, Q width and capacity must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if let StatePooling::Structural { t_up: 0, .. } = self.pooling {
            return Err(Error::Config("t_up must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AgentPolicy {
    pub kind: CohortKind,
    /// Sorted controlled node ids.
    pub controlled: Vec<usize>,
    pub budget: usize,
    pub spent: usize,
    pub qnet: QNet,
    pub epsilon: f64,
    adam: AdamState,
    memory: ReplayMemory,
}

impl AgentPolicy {
    pub fn new(kind: CohortKind, mut controlled: Vec<usize>, budget: usize, qnet: QNet, config: &GameConfig) -> Self {
        controlled.sort_unstable();
        controlled.dedup();
        let adam = AdamState::for_model(AdamConfig::with_lr(config.lr), &qnet);
        AgentPolicy {
            kind,
            controlled,
            budget,
            spent: 0,
            qnet,
            epsilon: config.eps_start,
            adam,
            memory: ReplayMemory::new(config.capacity),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.spent
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut ReplayMemory {
        &mut self.memory
    }

    /// Controlled nodes that may still connect to `v`.
    pub fn candidates(&self, g: &SocialGraph, v: usize) -> Vec<usize> {
        if self.remaining() == 0 {
            return Vec::new();
        }
        self.controlled.iter().copied().filter(|&u| u != v && !g.has_edge(u, v)).collect()
    }
}

/// Source of the `h_G` summary.
#[derive(Debug, Clone, Copy)]
pub enum Pooler<'a> {
    Mean,
    Structural(&'a PoolingMatrix),
}

/// Full state vector: `[mean(E), E[v]]` or `[flatten(P·E), E[v]]`.
pub fn state(emb: &Matrix, target: usize, pooler: Pooler<'_>) -> Result<Vec<f64>> {
    match pooler {
        Pooler::Mean => mean_pool_state(emb, target),
        Pooler::Structural(p) => abstract_state(p, emb, target),
    }
}

/// What the Q-network consumes. Under structural pooling `h_G` is the pooled
/// embedding of the target's community.
pub fn step_view(emb: &Matrix, target: usize, pooler: Pooler<'_>) -> Result<StepView> {
    if target >= emb.rows() {
        return Err(Error::Domain(format!("target {target} outside 0..{}", emb.rows())));
    }
    let h_g = match pooler {
        Pooler::Mean => mean_rows(emb),
        Pooler::Structural(p) => p.pooled_row(emb, target)?,
    };
    Ok(StepView { target, h_g, h_v: emb.row(target).to_vec() })
}

pub fn q_value(policy: &AgentPolicy, view: &StepView, emb: &Matrix, u: usize) -> Result<f64> {
    policy.qnet.q_value(emb.row(u), &view.h_g, &view.h_v)
}

/// First index of the largest value, i.e. ties go to the lowest node id when
/// `q` is ordered by id.
pub fn greedy_index(q: &[f64]) -> Option<usize> {
    if q.is_empty() {
        None
    } else {
        Some(argmax(q))
    }
}

/// ε-greedy choice over `candidates` (ascending ids); `None` when empty.
pub fn select_action<R: Rng + ?Sized>(
    policy: &AgentPolicy,
    view: &StepView,
    emb: &Matrix,
    candidates: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<Option<(usize, usize)>> {
    let v = view.target;
    match candidates.len() {
        0 => return Ok(None),
        1 => return Ok(Some((candidates[0], v))),
        _ => {}
    }
    if epsilon > 0.0 && rng.random_bool(epsilon) {
        return Ok(Some((candidates[rng.random_range(0..candidates.len())], v)));
    }
    let q = policy.qnet.q_values(&emb.select_rows(candidates), &view.h_g, &view.h_v)?;
    Ok(greedy_index(&q).map(|i| (candidates[i], v)))
}

fn target_class(g: &SocialGraph, v: usize) -> Result<usize> {
    g.label(v).class().ok_or_else(|| Error::Domain(format!("target {v} has no label")))
}

fn reward_from_hidden(g: &SocialGraph, surrogate: &GcnParams, hidden: &Matrix, v: usize) -> Result<f64> {
    let y = target_class(g, v)?;
    let agg = Matrix::row_vector(&g.propagate_row(hidden, v));
    let logits = agg.matmul(&surrogate.w2)?;
    Ok(if logits.argmax_row(0) != y { 1.0 } else { -1.0 })
}

/// +1 when the surrogate's prediction for `v` differs from its label, else −1.
pub fn reward(g: &SocialGraph, surrogate: &GcnParams, v: usize) -> Result<f64> {
    let hidden = surrogate.embed(g)?;
    reward_from_hidden(g, surrogate, &hidden, v)
}

/// One semi-gradient step on a sampled minibatch. `None` when memory holds
/// fewer than `batch` transitions.
pub fn dqn_update<R: Rng + ?Sized>(policy: &mut AgentPolicy, gamma: f64, batch: usize, rng: &mut R) -> Result<Option<f64>> {
    let Some(sampled) = policy.memory.sample(batch, rng) else {
        return Ok(None);
    };
    let mut targets = Vec::with_capacity(batch);
    for tr in &sampled {
        let mut y = tr.reward;
        if !tr.terminal && tr.next_candidates.rows() > 0 && gamma > 0.0 {
            let q = policy.qnet.q_values(&tr.next_candidates, &tr.next.h_g, &tr.next.h_v)?;
            y += gamma * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        targets.push(y);
    }
    let samples: Vec<QSample> = sampled
        .iter()
        .zip(&targets)
        .map(|(tr, &y)| QSample { h_u: &tr.h_u, h_g: &tr.state.h_g, h_v: &tr.state.h_v, target: y })
        .collect();
    let tape = policy.qnet.td_loss_and_grad(&samples)?;
    let loss = tape.loss;
    policy.adam.step_model(&mut policy.qnet, &tape)?;
    Ok(Some(loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub episode: usize,
    pub greedy: bool,
    pub t: usize,
    pub target: usize,
    pub agent: String,
    pub edge: (usize, usize),
    pub reward: f64,
    pub epsilon: f64,
    pub td_loss: Option<f64>,
}

pub fn write_trace(trace: &[TraceEntry], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in trace {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub poisoned: SocialGraph,
    pub policies: Vec<AgentPolicy>,
    pub trace: Vec<TraceEntry>,
    /// Edges each agent added in the final greedy episode.
    pub spent: Vec<usize>,
    pub budgets: Vec<usize>,
    /// Mean seconds per step spent building the state, over all episodes.
    pub state_secs_per_step: f64,
    pub refreshes: usize,
}

impl AttackOutcome {
    pub fn total_spent(&self) -> usize {
        self.spent.iter().sum()
    }

    /// Fraction of final-episode steps that ended with the target misclassified.
    pub fn final_success_rate(&self) -> f64 {
        let fin: Vec<&TraceEntry> = self.trace.iter().filter(|e| e.greedy).collect();
        if fin.is_empty() {
            return 0.0;
        }
        fin.iter().filter(|e| e.reward > 0.0).count() as f64 / fin.len() as f64
    }
}

struct Pending {
    agent: usize,
    state: Arc<StepView>,
    action: (usize, usize),
    h_u: Vec<f64>,
}

struct EpisodeStats {
    state_secs: f64,
    steps: usize,
    refreshes: usize,
}

/// Plays `config.episodes` training episodes from `g`, then one greedy
/// episode whose graph is returned. `g` must already contain any injected
/// bots; budgets come from `cohorts`.
pub fn run_attack(
    g: &SocialGraph,
    cohorts: &BotCohorts,
    targets: &[usize],
    surrogate: &GcnParams,
    config: &GameConfig,
    seed: u64,
) -> Result<AttackOutcome> {
    config.validate()?;
    cohorts.check(g)?;
    for &v in targets {
        if v >= g.n() {
            return Err(Error::Domain(format!("target {v} outside graph")));
        }
        target_class(g, v)?;
    }
    let h = surrogate.hidden_dim();
    let mut init = rng::derive(seed, 0x0A6E);
    let mut policies: Vec<AgentPolicy> = cohorts
        .cohorts
        .iter()
        .map(|c| {
            let q = QNet::random(h, config.q_width, &mut init);
            AgentPolicy::new(c.kind, c.members.clone(), c.edge_budget, q, config)
        })
        .collect();
    let budgets: Vec<usize> = policies.iter().map(|p| p.budget).collect();
    let total: usize = budgets.iter().sum();
    if total == 0 || targets.is_empty() || policies.is_empty() {
        log::warn!("attack has no budget, targets or agents; returning the input graph");
        return Ok(AttackOutcome {
            poisoned: g.clone(),
            spent: vec![0; policies.len()],
            policies,
            trace: Vec::new(),
            budgets,
            state_secs_per_step: 0.0,
            refreshes: 0,
        });
    }
    let mut trace = Vec::new();
    let planned = (config.episodes * total).max(1);
    let mut global_step = 0usize;
    let mut secs = 0.0;
    let mut steps = 0usize;
    let mut refreshes = 0usize;
    let mut poisoned = g.clone();
    for episode in 0..=config.episodes {
        let greedy = episode == config.episodes;
        let mut r = rng::derive(seed, 0x1000 + episode as u64);
        let mut gt = g.clone();
        gt.set_budget(Budget { edges: Some(g.edge_ops() + total), ..g.budget() });
        for p in policies.iter_mut() {
            p.spent = 0;
        }
        let stats = play_episode(
            &mut gt,
            &mut policies,
            targets,
            surrogate,
            config,
            EpisodeCtx { episode, greedy, planned, global_step: &mut global_step },
            &mut r,
            &mut trace,
        )?;
        secs += stats.state_secs;
        steps += stats.steps;
        refreshes += stats.refreshes;
        if greedy {
            poisoned = gt;
        }
    }
    let spent = policies.iter().map(|p| p.spent).collect();
    Ok(AttackOutcome {
        poisoned,
        policies,
        trace,
        spent,
        budgets,
        state_secs_per_step: if steps > 0 { secs / steps as f64 } else { 0.0 },
        refreshes,
    })
}

struct EpisodeCtx<'a> {
    episode: usize,
    greedy: bool,
    planned: usize,
    global_step: &'a mut usize,
}

fn epsilon_at(config: &GameConfig, step: usize, planned: usize) -> f64 {
    let frac = if planned > 1 { (step as f64 / (planned - 1) as f64).min(1.0) } else { 1.0 };
    config.eps_start + (config.eps_end - config.eps_start) * frac
}

#[allow(clippy::too_many_arguments)]
fn play_episode(
    gt: &mut SocialGraph,
    policies: &mut [AgentPolicy],
    targets: &[usize],
    surrogate: &GcnParams,
    config: &GameConfig,
    ctx: EpisodeCtx<'_>,
    r: &mut rng::Rng,
    trace: &mut Vec<TraceEntry>,
) -> Result<EpisodeStats> {
    let mut cache = match config.pooling {
        StatePooling::Mean => None,
        StatePooling::Structural { t_up, options } => Some(AbstractionCache::new(t_up, options)?),
    };
    let mut emb = surrogate.embed(gt)?;
    let mut pending: Option<(Vec<Pending>, f64)> = None;
    let mut stats = EpisodeStats { state_secs: 0.0, steps: 0, refreshes: 0 };
    let mut idle = 0usize;
    let mut t = 0usize;
    loop {
        if policies.iter().all(|p| p.remaining() == 0) || idle == targets.len() {
            break;
        }
        let v = targets[t % targets.len()];
        if let Some(c) = cache.as_mut() {
            if c.maybe_refresh(t, gt)? {
                stats.refreshes += 1;
            }
        }
        let started = Instant::now();
        let pooler = match cache.as_ref() {
            None => Pooler::Mean,
            Some(c) => Pooler::Structural(c.pooling()?),
        };
        let view = Arc::new(step_view(&emb, v, pooler)?);
        stats.state_secs += started.elapsed().as_secs_f64();
        stats.steps += 1;
        let feasible: Vec<Vec<usize>> = policies.iter().map(|p| p.candidates(gt, v)).collect();

        if let Some((items, reward)) = pending.take() {
            for item in items {
                let next = Arc::new(emb.select_rows(&feasible[item.agent]));
                let terminal = next.rows() == 0;
                let tr = Transition::new(item.state, item.action, item.h_u, view.clone(), next, reward, terminal)?;
                policies[item.agent].memory.push(tr);
            }
        }

        let epsilon = if ctx.greedy { 0.0 } else { epsilon_at(config, *ctx.global_step, ctx.planned) };
        let mut proposals = Vec::new();
        for (j, p) in policies.iter().enumerate() {
            if let Some(a) = select_action(p, &view, &emb, &feasible[j], epsilon, r)? {
                proposals.push((j, a));
            }
        }
        if proposals.is_empty() {
            idle += 1;
            t += 1;
            continue;
        }
        idle = 0;
        let pick = aggregate(&proposals, policies, config.aggregation, r);
        let (agent, (u, _)) = proposals[pick];
        gt.perturb_add_edge(u, v)?;
        policies[agent].spent += 1;
        debug_assert!(policies[agent].spent <= policies[agent].budget);

        let items: Vec<Pending> = proposals
            .iter()
            .map(|&(j, a)| Pending { agent: j, state: view.clone(), action: a, h_u: emb.row(a.0).to_vec() })
            .collect();
        emb = surrogate.embed(gt)?;
        let rew = reward_from_hidden(gt, surrogate, &emb, v)?;

        let mut td_loss = None;
        if !ctx.greedy {
            let mut sum = 0.0;
            let mut count = 0;
            for p in policies.iter_mut() {
                p.epsilon = epsilon;
                if let Some(l) = dqn_update(p, config.gamma, config.batch_size, r)? {
                    sum += l;
                    count += 1;
                }
            }
            if count > 0 {
                td_loss = Some(sum / count as f64);
            }
            *ctx.global_step += 1;
        }
        trace.push(TraceEntry {
            episode: ctx.episode,
            greedy: ctx.greedy,
            t,
            target: v,
            agent: policies[agent].name().to_string(),
            edge: (u, v),
            reward: rew,
            epsilon,
            td_loss,
        });
        pending = Some((items, rew));
        t += 1;
    }
    if let Some((items, reward)) = pending.take() {
        let empty = Arc::new(Matrix::zeros(0, emb.cols()));
        for item in items {
            let tr = Transition::new(item.state.clone(), item.action, item.h_u, item.state, empty.clone(), reward, true)?;
            policies[item.agent].memory.push(tr);
        }
    }
    Ok(stats)
}

/// Index into `proposals` of the executed one.
fn aggregate<R: Rng + ?Sized>(
    proposals: &[(usize, (usize, usize))],
    policies: &[AgentPolicy],
    mode: Aggregation,
    r: &mut R,
) -> usize {
    if proposals.len() == 1 {
        return 0;
    }
    let weights: Vec<f64> = match mode {
        Aggregation::Uniform => vec![1.0; proposals.len()],
        Aggregation::Proportional => proposals.iter().map(|&(j, _)| policies[j].remaining() as f64).collect(),
    };
    let total: f64 = weights.iter().sum();
    let mut x = r.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    proposals.len() - 1
}
