use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Matrix;

/// Gradients for a parameter list plus the loss they were taken at.
#[derive(Debug, Clone)]
pub struct GradTape {
    pub names: Vec<String>,
    pub grads: Vec<Matrix>,
    pub loss: f64,
}

impl GradTape {
    pub fn new(names: &[&str], grads: Vec<Matrix>, loss: f64) -> Self {
        debug_assert_eq!(names.len(), grads.len());
        GradTape { names: names.iter().map(|s| s.to_string()).collect(), grads, loss }
    }

    pub fn grad(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.grads[i])
    }

    /// Checks gradient shapes against a parameter list.
    pub fn check_shapes(&self, params: &[&Matrix]) -> Result<()> {
        if params.len() != self.grads.len() {
            return Err(Error::Dimension(format!(
                "{} gradients for {} parameters",
                self.grads.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&self.grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "gradient {} is {:?}, parameter is {:?}",
                    self.names.get(i).map_or("?", String::as_str),
                    g.shape(),
                    p.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Anything trainable exposes its parameters in a fixed order.
pub trait Parameterized {
    fn param_names(&self) -> Vec<&'static str>;
    fn params(&self) -> Vec<&Matrix>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        let m: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        AdamState { config, step: 0, v: m.clone(), m }
    }

    pub fn for_model<P: Parameterized + ?Sized>(config: AdamConfig, model: &P) -> Self {
        Self::new(config, &model.params())
    }

    /// One bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut [&mut Matrix], tape: &GradTape) -> Result<()> {
        {
            let view: Vec<&Matrix> = params.iter().map(|p| &**p).collect();
            tape.check_shapes(&view)?;
        }
        if self.m.len() != params.len() {
            return Err(Error::Dimension("optimizer state built for another model".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let g = tape.grads[k].as_slice();
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (((pv, &gv), mv), vv) in p.as_mut_slice().iter_mut().zip(g).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_model<P: Parameterized + ?Sized>(&mut self, model: &mut P, tape: &GradTape) -> Result<()> {
        let mut ps = model.params_mut();
        self.step(&mut ps, tape)
    }
}
