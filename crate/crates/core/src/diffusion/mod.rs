//! Feature diffusion: noise schedule, x0-prediction network, training on
//! standardized bot features and partial-corruption generation.

mod model;
mod normalizer;
mod schedule;

pub use model::{timestep_embedding, DiffModel, X0Predictor, DEFAULT_EMBED_DIM};
pub use normalizer::FeatureNormalizer;
pub use schedule::{NoiseSchedule, ScheduleSpec};

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detectors::checkpoint::{Checkpoint, NamedTensor};
use crate::error::{Error, Result};
use crate::num::{AdamConfig, AdamState, Matrix, Parameterized};
use crate::rng;
use normalizer::matrix_from_rows;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionHyper {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: usize,
    pub embed_dim: usize,
}

impl Default for DiffusionHyper {
    fn default() -> Self {
        DiffusionHyper { iterations: 500, batch_size: 64, lr: 1e-3, hidden: 64, embed_dim: DEFAULT_EMBED_DIM }
    }
}

fn gaussian<R: Rng + ?Sized>(d: usize, r: &mut R) -> Vec<f64> {
    (0..d).map(|_| r.sample(StandardNormal)).collect()
}

/// `μ_θ(x_t, t)`: the posterior-mean form with `x̂_θ(x_t, t)` in place of `x_0`.
pub fn mu_theta<P: X0Predictor + ?Sized>(xt: &[f64], t: usize, model: &P, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    let x0_hat = model.predict(xt, t)?;
    let (ct, c0) = schedule.posterior_coeffs(t);
    Ok(xt.iter().zip(&x0_hat).map(|(a, b)| ct * a + c0 * b).collect())
}

/// Single-step term `L_t` with caller-supplied noise.
pub fn loss_t_with_noise<P: X0Predictor + ?Sized>(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    model: &P,
    schedule: &NoiseSchedule,
) -> Result<f64> {
    let xt = schedule.forward_sample(x0, t, eps)?;
    let pred = model.predict(&xt, t)?;
    let sq: f64 = pred.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(schedule.loss_weight(t) * sq)
}

pub fn loss_t<P: X0Predictor + ?Sized, R: Rng + ?Sized>(
    x0: &[f64],
    t: usize,
    model: &P,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64> {
    let eps = gaussian(x0.len(), rng);
    loss_t_with_noise(x0, t, &eps, model, schedule)
}

/// Per-step terms `[L_1, ..., L_T]` on a frozen noise draw (`noise[t-1]` is used at step `t`).
pub fn elbo_terms<P: X0Predictor + ?Sized>(x0: &[f64], noise: &[Vec<f64>], model: &P, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if noise.len() != schedule.steps() {
        return Err(Error::Dimension(format!("need {} noise vectors, got {}", schedule.steps(), noise.len())));
    }
    (1..=schedule.steps()).map(|t| loss_t_with_noise(x0, t, &noise[t - 1], model, schedule)).collect()
}

/// Assembles one training batch: rows `x_t`, steps, targets and weights.
fn batch_inputs(x0: &Matrix, ts: &[usize], noise: &Matrix, schedule: &NoiseSchedule) -> Result<(Matrix, Vec<f64>)> {
    let mut rows = Vec::with_capacity(x0.rows());
    for (i, &t) in ts.iter().enumerate() {
        rows.push(schedule.forward_sample(x0.row(i), t, noise.row(i))?);
    }
    let weights = ts.iter().map(|&t| schedule.loss_weight(t)).collect();
    Ok((matrix_from_rows(rows, x0.cols())?, weights))
}

/// The training objective on a batch, scaled to a sum over rows.
pub fn batch_objective(model: &DiffModel, x0: &Matrix, ts: &[usize], noise: &Matrix, schedule: &NoiseSchedule) -> Result<f64> {
    let (xt, w) = batch_inputs(x0, ts, noise, schedule)?;
    Ok(model.weighted_sq_loss_and_grad(&xt, ts, x0, &w)?.loss * x0.rows() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: DiffModel,
    /// Mean sampled batch loss per iteration.
    pub loss_trace: Vec<f64>,
}

/// Trains on rows that are already standardized.
pub fn train_standardized(z: &Matrix, schedule: &NoiseSchedule, hyper: &DiffusionHyper, seed: u64) -> Result<TrainedModel> {
    if z.rows() == 0 {
        return Err(Error::Domain("diffusion training needs at least one feature row".into()));
    }
    z.check_finite("diffusion training features")?;
    let mut r = rng::seeded(seed);
    let mut model = DiffModel::random(z.cols(), hyper.hidden, hyper.embed_dim, &mut r);
    let mut adam = AdamState::for_model(AdamConfig::with_lr(hyper.lr), &model);
    let bs = hyper.batch_size.max(1);
    let mut trace = Vec::with_capacity(hyper.iterations);
    for _ in 0..hyper.iterations {
        let idx: Vec<usize> = (0..bs).map(|_| r.random_range(0..z.rows())).collect();
        let x0 = z.select_rows(&idx);
        let ts: Vec<usize> = (0..bs).map(|_| r.random_range(1..=schedule.steps())).collect();
        let noise = Matrix::randn(bs, z.cols(), 1.0, &mut r);
        let (xt, w) = batch_inputs(&x0, &ts, &noise, schedule)?;
        let tape = model.weighted_sq_loss_and_grad(&xt, &ts, &x0, &w)?;
        trace.push(tape.loss);
        adam.step_model(&mut model, &tape)?;
    }
    Ok(TrainedModel { model, loss_trace: trace })
}

/// Schedule, normalizer and network: everything generation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct BotDiffusion {
    pub schedule: NoiseSchedule,
    pub normalizer: FeatureNormalizer,
    pub model: DiffModel,
}

#[derive(Debug, Clone)]
pub struct TrainedDiffusion {
    pub diffusion: BotDiffusion,
    pub loss_trace: Vec<f64>,
}

/// Fits the normalizer on raw `features` and trains the network on the standardized rows.
pub fn train_diffusion(features: &Matrix, schedule: &NoiseSchedule, hyper: &DiffusionHyper, seed: u64) -> Result<TrainedDiffusion> {
    if features.rows() == 0 {
        return Err(Error::Domain("diffusion training needs at least one feature row".into()));
    }
    let normalizer = FeatureNormalizer::fit(features)?;
    if !normalizer.dropped().is_empty() {
        log::info!("diffusion: dropping constant dimensions {:?}", normalizer.dropped());
    }
    let z = normalizer.standardize(features)?;
    let trained = train_standardized(&z, schedule, hyper, seed)?;
    Ok(TrainedDiffusion {
        diffusion: BotDiffusion { schedule: schedule.clone(), normalizer, model: trained.model },
        loss_trace: trained.loss_trace,
    })
}

/// Corrupts each standardized source to step `t_corrupt`, then runs the mean-only
/// reverse recursion from `T` down to 1 starting at the corrupted sample.
pub fn generate_standardized<P: X0Predictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    sources: &Matrix,
    t_corrupt: usize,
    seed: u64,
) -> Result<Matrix> {
    schedule.check_step(t_corrupt)?;
    if sources.cols() != model.width() {
        return Err(Error::Dimension(format!("sources width {} vs model {}", sources.cols(), model.width())));
    }
    let mut rows = Vec::with_capacity(sources.rows());
    for (i, src) in sources.iter_rows().enumerate() {
        let mut r = rng::derive(seed, i as u64);
        let eps = gaussian(src.len(), &mut r);
        let mut x = schedule.forward_sample(src, t_corrupt, &eps)?;
        for t in (1..=schedule.steps()).rev() {
            x = mu_theta(&x, t, model, schedule)?;
        }
        rows.push(x);
    }
    matrix_from_rows(rows, sources.cols())
}

impl BotDiffusion {
    /// Default corruption depth `T/5` (at least 1).
    pub fn default_t_corrupt(&self) -> usize {
        (self.schedule.steps() / 5).max(1)
    }

    /// Generates raw feature rows from raw source rows.
    pub fn generate(&self, sources: &Matrix, t_corrupt: usize, seed: u64) -> Result<Matrix> {
        let z = self.normalizer.standardize(sources)?;
        let out = generate_standardized(&self.model, &self.schedule, &z, t_corrupt, seed)?;
        self.normalizer.restore(&out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensors = self
            .model
            .param_names()
            .into_iter()
            .zip(self.model.params())
            .map(|(n, m)| NamedTensor::new(n, m))
            .collect();
        let meta = serde_json::json!({
            "schedule": self.schedule.spec(),
            "normalizer": self.normalizer,
            "embed_dim": self.model.embed_dim,
        });
        Checkpoint::new("diffusion", meta, tensors)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.model != "diffusion" {
            return Err(Error::Config(format!("checkpoint holds `{}`, not a diffusion model", c.model)));
        }
        let spec: ScheduleSpec = serde_json::from_value(c.meta["schedule"].clone())?;
        let normalizer: FeatureNormalizer = serde_json::from_value(c.meta["normalizer"].clone())?;
        let embed_dim = c.meta["embed_dim"]
            .as_u64()
            .ok_or_else(|| Error::Config("checkpoint lacks embed_dim".into()))? as usize;
        let model = DiffModel {
            w1: c.tensor("w1")?,
            b1: c.tensor("b1")?,
            w2: c.tensor("w2")?,
            b2: c.tensor("b2")?,
            w3: c.tensor("w3")?,
            b3: c.tensor("b3")?,
            embed_dim,
        };
        if model.feature_width() != normalizer.width() {
            return Err(Error::Config("model width disagrees with normalizer".into()));
        }
        Ok(BotDiffusion { schedule: NoiseSchedule::new(spec)?, normalizer, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
