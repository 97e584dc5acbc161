use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{GradTape, Matrix, Parameterized};

pub const DEFAULT_EMBED_DIM: usize = 16;

/// Sinusoidal embedding of step `t`: `[sin(t·ω_k), cos(t·ω_k)]`, `ω_k = 10000^{-k/(dim/2)}`.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let w = 10000f64.powf(-(k as f64) / half.max(1) as f64);
        out[k] = (t as f64 * w).sin();
        out[half + k] = (t as f64 * w).cos();
    }
    out
}

/// Anything that predicts `x̂_0` from `(x_t, t)`.
pub trait X0Predictor {
    fn width(&self) -> usize;
    fn predict(&self, xt: &[f64], t: usize) -> Result<Vec<f64>>;
}

/// MLP `[x_t | emb(t)] → tanh → tanh → x̂_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffModel {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w3: Matrix,
    pub b3: Matrix,
    pub embed_dim: usize,
}

struct Cache {
    input: Matrix,
    h1: Matrix,
    h2: Matrix,
}

impl DiffModel {
    pub fn random<R: Rng + ?Sized>(width: usize, hidden: usize, embed_dim: usize, rng: &mut R) -> Self {
        DiffModel {
            w1: Matrix::glorot(width + embed_dim, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::glorot(hidden, hidden, rng),
            b2: Matrix::zeros(1, hidden),
            w3: Matrix::glorot(hidden, width, rng),
            b3: Matrix::zeros(1, width),
            embed_dim,
        }
    }

    pub fn feature_width(&self) -> usize {
        self.w3.cols()
    }

    fn input(&self, xt: &Matrix, ts: &[usize]) -> Result<Matrix> {
        if xt.cols() != self.feature_width() {
            return Err(Error::Dimension(format!(
                "model expects width {}, got {}",
                self.feature_width(),
                xt.cols()
            )));
        }
        if xt.rows() != ts.len() {
            return Err(Error::Dimension("one step per row required".into()));
        }
        let emb: Vec<Vec<f64>> = ts.iter().map(|&t| timestep_embedding(t, self.embed_dim)).collect();
        let emb = Matrix::from_rows(&emb).unwrap_or_else(|_| Matrix::zeros(ts.len(), self.embed_dim));
        xt.hstack(&emb)
    }

    fn forward_cached(&self, xt: &Matrix, ts: &[usize]) -> Result<(Matrix, Cache)> {
        let input = self.input(xt, ts)?;
        let h1 = affine(&input, &self.w1, &self.b1)?.map(f64::tanh);
        let h2 = affine(&h1, &self.w2, &self.b2)?.map(f64::tanh);
        let out = affine(&h2, &self.w3, &self.b3)?;
        Ok((out, Cache { input, h1, h2 }))
    }

    /// Batched `x̂_θ(x_t, t)`; row `i` uses step `ts[i]`.
    pub fn forward(&self, xt: &Matrix, ts: &[usize]) -> Result<Matrix> {
        Ok(self.forward_cached(xt, ts)?.0)
    }

    /// Loss `(1/B) Σ_i w_i ‖x̂_θ(x_i, t_i) - y_i‖²` and its parameter gradient.
    pub fn weighted_sq_loss_and_grad(&self, xt: &Matrix, ts: &[usize], target: &Matrix, weights: &[f64]) -> Result<GradTape> {
        let (out, c) = self.forward_cached(xt, ts)?;
        if target.shape() != out.shape() || weights.len() != out.rows() {
            return Err(Error::Dimension("target/weights do not match batch".into()));
        }
        let b = out.rows().max(1) as f64;
        let mut loss = 0.0;
        let mut dout = out.sub(target)?;
        for (i, &w) in weights.iter().enumerate() {
            let row = dout.row_mut(i);
            loss += w * row.iter().map(|v| v * v).sum::<f64>();
            for v in row.iter_mut() {
                *v *= 2.0 * w / b;
            }
        }
        loss /= b;
        let dw3 = c.h2.t_matmul(&dout)?;
        let db3 = dout.col_sums();
        let mut dz2 = dout.matmul_t(&self.w3)?;
        tanh_backward(&mut dz2, &c.h2);
        let dw2 = c.h1.t_matmul(&dz2)?;
        let db2 = dz2.col_sums();
        let mut dz1 = dz2.matmul_t(&self.w2)?;
        tanh_backward(&mut dz1, &c.h1);
        let dw1 = c.input.t_matmul(&dz1)?;
        let db1 = dz1.col_sums();
        Ok(GradTape::new(&self.param_names(), vec![dw1, db1, dw2, db2, dw3, db3], loss))
    }
}

fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    let mut z = x.matmul(w)?;
    z.add_row_broadcast(b.as_slice())?;
    Ok(z)
}

fn tanh_backward(d: &mut Matrix, h: &Matrix) {
    for (dv, hv) in d.as_mut_slice().iter_mut().zip(h.as_slice()) {
        *dv *= 1.0 - hv * hv;
    }
}

impl X0Predictor for DiffModel {
    fn width(&self) -> usize {
        self.feature_width()
    }

    fn predict(&self, xt: &[f64], t: usize) -> Result<Vec<f64>> {
        let x = Matrix::from_vec(1, xt.len(), xt.to_vec())?;
        Ok(self.forward(&x, &[t])?.into_vec())
    }
}

impl Parameterized for DiffModel {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["w1", "b1", "w2", "b2", "w3", "b3"]
    }
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }
    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::gradcheck::check_param_gradient;
    use crate::rng;

    #[test]
    fn embedding_shape_and_values() {
        let e = timestep_embedding(0, 16);
        assert_eq!(e.len(), 16);
        assert!(e[..8].iter().all(|&v| v == 0.0));
        assert!(e[8..].iter().all(|&v| v == 1.0));
        let e3 = timestep_embedding(3, 4);
        assert!((e3[0] - 3f64.sin()).abs() < 1e-15);
        assert!((e3[1] - (3.0 * 0.01f64).sin()).abs() < 1e-15);
        assert_ne!(timestep_embedding(4, 16), timestep_embedding(5, 16));
    }

    #[test]
    fn output_width_equals_feature_width() {
        let m = DiffModel::random(7, 12, 16, &mut rng::seeded(1));
        let x = Matrix::zeros(3, 7);
        assert_eq!(m.forward(&x, &[1, 2, 3]).unwrap().shape(), (3, 7));
        assert!(m.forward(&Matrix::zeros(3, 6), &[1, 2, 3]).is_err());
        assert!(m.forward(&x, &[1, 2]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::seeded(2);
        let m = DiffModel::random(5, 9, 16, &mut r);
        let xt = Matrix::randn(6, 5, 1.0, &mut r);
        let y = Matrix::randn(6, 5, 1.0, &mut r);
        let ts = [1, 4, 7, 2, 9, 3];
        let w = [1.0, 2.5, 0.3, 7.0, 0.1, 1.2];
        let tape = m.weighted_sq_loss_and_grad(&xt, &ts, &y, &w).unwrap();
        let params: Vec<Matrix> = m.params().into_iter().cloned().collect();
        let loss = |ps: &[Matrix]| {
            let mut q = m.clone();
            for (dst, src) in q.params_mut().into_iter().zip(ps) {
                *dst = src.clone();
            }
            q.weighted_sq_loss_and_grad(&xt, &ts, &y, &w).unwrap().loss
        };
        for which in 0..params.len() {
            let s = check_param_gradient(&params, which, &tape.grads[which], loss, 20, 1e-6, &mut r);
            assert!(s.max_rel_error <= 1e-4, "param {which}: {}", s.max_rel_error);
        }
    }
}
