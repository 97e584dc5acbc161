use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::num::{GradTape, Matrix, Parameterized};

use super::masked_ce;

/// Two-layer GCN: `hidden = relu(Â X W1)`, `logits = Â hidden W2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub w1: Matrix,
    pub w2: Matrix,
}

impl GcnParams {
    pub fn random<R: Rng + ?Sized>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        GcnParams { w1: Matrix::glorot(in_dim, hidden, rng), w2: Matrix::glorot(hidden, 2, rng) }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    fn check(&self, g: &SocialGraph) -> Result<()> {
        if g.feature_dim() != self.w1.rows() {
            return Err(Error::Dimension(format!(
                "features have width {}, first layer expects {}",
                g.feature_dim(),
                self.w1.rows()
            )));
        }
        if self.w1.cols() != self.w2.rows() {
            return Err(Error::Dimension("inconsistent hidden width".into()));
        }
        Ok(())
    }

    /// Node embeddings `relu(Â X W1)`; this is the encoder used by the attack agents.
    pub fn embed(&self, g: &SocialGraph) -> Result<Matrix> {
        self.check(g)?;
        let xw = g.features().matmul(&self.w1)?;
        Ok(g.propagate(&xw)?.map(crate::num::relu))
    }

    pub fn loss_and_grad(&self, g: &SocialGraph, labels: &[usize], mask: &[usize]) -> Result<GradTape> {
        self.check(g)?;
        let ax = g.propagate(g.features())?;
        let z1 = ax.matmul(&self.w1)?;
        let h = z1.map(crate::num::relu);
        let ah = g.propagate(&h)?;
        let logits = ah.matmul(&self.w2)?;
        let (loss, dlogits) = masked_ce(&logits, labels, mask)?;
        let dw2 = ah.t_matmul(&dlogits)?;
        let dah = dlogits.matmul_t(&self.w2)?;
        // Â is symmetric, so its adjoint is itself.
        let dh = g.propagate(&dah)?;
        let mut dz1 = dh;
        for (d, z) in dz1.as_mut_slice().iter_mut().zip(z1.as_slice()) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let dw1 = ax.t_matmul(&dz1)?;
        Ok(GradTape::new(&["w1", "w2"], vec![dw1, dw2], loss))
    }
}

impl Parameterized for GcnParams {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["w1", "w2"]
    }
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.w2]
    }
    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.w2]
    }
}

/// Returns `(logits, hidden)`.
pub fn gcn_forward(g: &SocialGraph, p: &GcnParams) -> Result<(Matrix, Matrix)> {
    let hidden = p.embed(g)?;
    let logits = g.propagate(&hidden)?.matmul(&p.w2)?;
    Ok((logits, hidden))
}
