//! Two-block stochastic block model with class-conditional Gaussian features.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Label, Masks, SocialGraph};
use crate::num::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub nodes: usize,
    /// Fraction of nodes in the bot block.
    pub bot_fraction: f64,
    pub p_in: f64,
    pub p_out: f64,
    /// Euclidean distance between the two class means.
    pub mu_gap: f64,
    pub dims: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            nodes: 500,
            bot_fraction: 0.5,
            p_in: 0.05,
            p_out: 0.005,
            mu_gap: 2.0,
            dims: 8,
            train_fraction: 0.6,
            val_fraction: 0.2,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_in) || !prob(self.p_out) || !prob(self.bot_fraction) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if self.dims == 0 || self.mu_gap < 0.0 {
            return Err(Error::Config("need dims >= 1 and mu_gap >= 0".into()));
        }
        if self.train_fraction + self.val_fraction > 1.0 || self.train_fraction < 0.0 || self.val_fraction < 0.0 {
            return Err(Error::Config("train + val fractions exceed 1".into()));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.p_in <= self.p_out && self.mu_gap == 0.0
    }
}

/// Humans occupy ids `0..n_h`, bots the rest. Human features are `N(0, I)`,
/// bot features `N(μ, I)` with `μ = mu_gap/√d · 1`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<SocialGraph> {
    spec.validate()?;
    if spec.is_degenerate() {
        log::warn!("synth: p_in <= p_out and mu_gap = 0, the classes are indistinguishable");
    }
    let n = spec.nodes;
    let n_bot = (spec.bot_fraction * n as f64).round() as usize;
    let n_h = n - n_bot;
    let mut r = rng::derive(seed, 0x5e7);
    let shift = spec.mu_gap / (spec.dims as f64).sqrt();
    let mut data = Vec::with_capacity(n * spec.dims);
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let bot = v >= n_h;
        labels.push(if bot { Label::Bot } else { Label::Human });
        for _ in 0..spec.dims {
            let z: f64 = r.sample(StandardNormal);
            data.push(if bot { z + shift } else { z });
        }
    }
    let mut g = SocialGraph::new(Matrix::from_vec(n, spec.dims, data)?, labels)?;
    for u in 0..n {
        for v in u + 1..n {
            let same = (u >= n_h) == (v >= n_h);
            if r.random_bool(if same { spec.p_in } else { spec.p_out }) {
                g.add_edge(u, v)?;
            }
        }
    }
    let masks = Masks::stratified(g.labels(), spec.train_fraction, spec.val_fraction, seed);
    g.set_masks(masks)?;
    Ok(g)
}

/// Two Gaussian blobs in `dims` dimensions, means `0` and `sep/√d · 1`, mixed 50/50.
pub fn gaussian_mixture(rows: usize, dims: usize, sep: f64, seed: u64) -> Matrix {
    let mut r = rng::derive(seed, 0x9a55);
    let shift = sep / (dims as f64).sqrt();
    let mut x = Matrix::randn(rows, dims, 1.0, &mut r);
    for i in 0..rows {
        if r.random_bool(0.5) {
            for j in 0..dims {
                x[(i, j)] += shift;
            }
        }
    }
    x
}
