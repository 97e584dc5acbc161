//! GNN bot detectors: two-layer GCN, SGC and a mean-aggregator GraphSAGE
//! variant with seeded neighbour sampling.

pub mod checkpoint;
mod gcn;
mod sage;
mod sgc;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::num::{cross_entropy_with_grad, AdamConfig, AdamState, GradTape, Matrix, Parameterized};
use crate::rng;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use gcn::{gcn_forward, GcnParams};
pub use sage::{sage_mean_forward, SageParams, SampledMean};
pub use sgc::{sgc_forward, SgcParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorKind {
    Gcn,
    Sgc { hops: usize },
    SageMean { sample: usize },
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Gcn => "gcn",
            DetectorKind::Sgc { .. } => "sgc",
            DetectorKind::SageMean { .. } => "sage-mean",
        }
    }

    pub fn parse(s: &str) -> Result<DetectorKind> {
        match s {
            "gcn" => Ok(DetectorKind::Gcn),
            "sgc" => Ok(DetectorKind::Sgc { hops: 2 }),
            "sage" | "sage-mean" => Ok(DetectorKind::SageMean { sample: 10 }),
            other => Err(Error::Config(format!("unknown detector `{other}`"))),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DetectorKind::Sgc { hops: 0 } => Err(Error::Config("sgc needs hops >= 1".into())),
            DetectorKind::SageMean { sample: 0 } => Err(Error::Config("sage-mean needs sample >= 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { hidden: 16, epochs: 200, lr: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Gcn(GcnParams),
    Sgc(SgcParams),
    SageMean(SageParams),
}

impl Detector {
    pub fn init(kind: DetectorKind, in_dim: usize, hidden: usize, seed: u64) -> Result<Detector> {
        kind.validate()?;
        let mut r = rng::derive(seed, 0xDE7);
        Ok(match kind {
            DetectorKind::Gcn => Detector::Gcn(GcnParams::random(in_dim, hidden, &mut r)),
            DetectorKind::Sgc { hops } => Detector::Sgc(SgcParams::random(in_dim, hops, &mut r)),
            DetectorKind::SageMean { sample } => {
                Detector::SageMean(SageParams::random(in_dim, hidden, sample, seed, &mut r))
            }
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Gcn(_) => DetectorKind::Gcn,
            Detector::Sgc(p) => DetectorKind::Sgc { hops: p.hops },
            Detector::SageMean(p) => DetectorKind::SageMean { sample: p.sample },
        }
    }

    /// Inference-time logits (sage-mean uses its stored evaluation seed).
    pub fn logits(&self, g: &SocialGraph) -> Result<Matrix> {
        match self {
            Detector::Gcn(p) => Ok(gcn_forward(g, p)?.0),
            Detector::Sgc(p) => sgc_forward(g, p),
            Detector::SageMean(p) => sage_mean_forward(g, p, p.eval_seed),
        }
    }

    /// Masked cross-entropy and its parameter gradient. `sample_seed` drives
    /// neighbour sampling for sage-mean and is ignored otherwise.
    pub fn loss_and_grad(
        &self,
        g: &SocialGraph,
        labels: &[usize],
        mask: &[usize],
        sample_seed: u64,
    ) -> Result<GradTape> {
        match self {
            Detector::Gcn(p) => p.loss_and_grad(g, labels, mask),
            Detector::Sgc(p) => p.loss_and_grad(g, labels, mask),
            Detector::SageMean(p) => p.loss_and_grad(g, labels, mask, sample_seed),
        }
    }

    pub fn predict(&self, g: &SocialGraph) -> Result<Vec<usize>> {
        let l = self.logits(g)?;
        Ok((0..l.rows()).map(|i| l.argmax_row(i)).collect())
    }
}

impl Parameterized for Detector {
    fn param_names(&self) -> Vec<&'static str> {
        match self {
            Detector::Gcn(p) => p.param_names(),
            Detector::Sgc(p) => p.param_names(),
            Detector::SageMean(p) => p.param_names(),
        }
    }
    fn params(&self) -> Vec<&Matrix> {
        match self {
            Detector::Gcn(p) => p.params(),
            Detector::Sgc(p) => p.params(),
            Detector::SageMean(p) => p.params(),
        }
    }
    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Detector::Gcn(p) => p.params_mut(),
            Detector::Sgc(p) => p.params_mut(),
            Detector::SageMean(p) => p.params_mut(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub detector: Detector,
    pub loss_trace: Vec<f64>,
}

/// Full-batch Adam on masked cross-entropy over the train mask.
pub fn train_detector(
    g: &SocialGraph,
    kind: DetectorKind,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedDetector> {
    let mask = labeled_subset(g, &g.masks.train);
    if mask.is_empty() {
        return Err(Error::Domain("train mask has no labeled nodes".into()));
    }
    let labels = g.class_ids();
    let mut det = Detector::init(kind, g.feature_dim(), cfg.hidden, seed)?;
    let mut opt = AdamState::for_model(AdamConfig::with_lr(cfg.lr), &det);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let tape = det.loss_and_grad(g, &labels, &mask, seed.wrapping_add(epoch as u64))?;
        trace.push(tape.loss);
        opt.step_model(&mut det, &tape)?;
    }
    let last = det.loss_and_grad(g, &labels, &mask, seed.wrapping_add(cfg.epochs as u64))?;
    trace.push(last.loss);
    debug!(
        "trained {} for {} epochs: loss {:.4} -> {:.4}",
        kind.name(),
        cfg.epochs,
        trace[0],
        trace[trace.len() - 1]
    );
    Ok(TrainedDetector { detector: det, loss_trace: trace })
}

fn labeled_subset(g: &SocialGraph, mask: &[usize]) -> Vec<usize> {
    mask.iter().copied().filter(|&i| g.label(i).class().is_some()).collect()
}

/// Fraction of `mask` whose argmax prediction equals the label (ties → class 0).
pub fn evaluate(g: &SocialGraph, det: &Detector, mask: &[usize]) -> Result<f64> {
    let preds = det.predict(g)?;
    accuracy(&preds, g, mask)
}

pub fn accuracy(preds: &[usize], g: &SocialGraph, mask: &[usize]) -> Result<f64> {
    let mask = labeled_subset(g, mask);
    if mask.is_empty() {
        return Err(Error::Domain("accuracy over an empty mask".into()));
    }
    let hits = mask.iter().filter(|&&i| Some(preds[i]) == g.label(i).class()).count();
    Ok(hits as f64 / mask.len() as f64)
}

pub(crate) fn masked_ce(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<(f64, Matrix)> {
    cross_entropy_with_grad(logits, labels, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Label, Masks};
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> SocialGraph {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let bot = i % 2 == 1;
            let c = if bot { 2.0 } else { -2.0 };
            rows.push((0..4).map(|_| c + r.random_range(-1.0..1.0)).collect::<Vec<f64>>());
            labels.push(if bot { Label::Bot } else { Label::Human });
        }
        let g = SocialGraph::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap();
        let m = Masks::stratified(g.labels(), 0.6, 0.2, seed);
        g.with_masks(m).unwrap()
    }

    #[test]
    fn separable_blobs_train_to_high_accuracy() {
        let g = blobs(120, 1);
        for kind in [DetectorKind::Gcn, DetectorKind::Sgc { hops: 2 }, DetectorKind::SageMean { sample: 5 }] {
            let t = train_detector(&g, kind, &TrainConfig::default(), 3).unwrap();
            let acc = evaluate(&g, &t.detector, &g.masks.train).unwrap();
            assert!(acc >= 0.95, "{} train acc {acc}", kind.name());
            assert!(t.loss_trace.last().unwrap() < &t.loss_trace[0]);
        }
    }

    #[test]
    fn untrained_accuracy_near_prior() {
        // Balanced classes: prior 0.5. Averaged over seeds an untrained model
        // lands near it.
        let g = blobs(200, 4);
        let mut accs = Vec::new();
        for seed in 0..10 {
            let d = Detector::init(DetectorKind::Gcn, 4, 16, seed).unwrap();
            accs.push(evaluate(&g, &d, &g.masks.test).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.15, "mean untrained accuracy {mean}");
    }

    #[test]
    fn empty_train_mask_is_an_error() {
        let g = SocialGraph::new(Matrix::zeros(3, 2), vec![Label::Human; 3]).unwrap();
        assert!(matches!(
            train_detector(&g, DetectorKind::Gcn, &TrainConfig::default(), 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn accuracy_counting_oracle() {
        let mut r = rng::seeded(9);
        let labels: Vec<Label> = (0..60).map(|_| if r.random_bool(0.4) { Label::Bot } else { Label::Human }).collect();
        let g = SocialGraph::new(Matrix::zeros(60, 1), labels).unwrap();
        let preds: Vec<usize> = (0..60).map(|_| r.random_range(0..2)).collect();
        let mask: Vec<usize> = (0..60).filter(|i| i % 3 != 0).collect();
        let (mut tp, mut tn, mut fp, mut fneg) = (0, 0, 0, 0);
        for &i in &mask {
            match (g.label(i), preds[i]) {
                (Label::Bot, 1) => tp += 1,
                (Label::Human, 0) => tn += 1,
                (Label::Human, 1) => fp += 1,
                _ => fneg += 1,
            }
        }
        let acc = accuracy(&preds, &g, &mask).unwrap();
        assert!((acc - (tp + tn) as f64 / (tp + tn + fp + fneg) as f64).abs() < 1e-15);
        let all_right: Vec<usize> = g.class_ids();
        assert_eq!(accuracy(&all_right, &g, &mask).unwrap(), 1.0);
        let flipped: Vec<usize> = preds.iter().map(|p| 1 - p).collect();
        assert!((accuracy(&flipped, &g, &mask).unwrap() - (1.0 - acc)).abs() < 1e-15);
    }
}
