use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{dot, sigmoid, GradTape, Matrix, Parameterized};

/// `Q(u, v) = σ([h_u, h_G] W1 + b1) · σ(h_v W2 + b2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNet {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// One regression example for the TD loss.
#[derive(Debug, Clone)]
pub struct QSample<'a> {
    pub h_u: &'a [f64],
    pub h_g: &'a [f64],
    pub h_v: &'a [f64],
    pub target: f64,
}

impl QNet {
    pub fn random<R: Rng + ?Sized>(embed_dim: usize, width: usize, rng: &mut R) -> Self {
        QNet {
            w1: Matrix::glorot(2 * embed_dim, width, rng),
            b1: Matrix::zeros(1, width),
            w2: Matrix::glorot(embed_dim, width, rng),
            b2: Matrix::zeros(1, width),
        }
    }

    pub fn zeros(embed_dim: usize, width: usize) -> Self {
        QNet {
            w1: Matrix::zeros(2 * embed_dim, width),
            b1: Matrix::zeros(1, width),
            w2: Matrix::zeros(embed_dim, width),
            b2: Matrix::zeros(1, width),
        }
    }

    pub fn width(&self) -> usize {
        self.w1.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w2.rows()
    }

    fn pre_u(&self, h_u: &[f64], h_g: &[f64]) -> Vec<f64> {
        let h = self.embed_dim();
        let mut z = self.b1.as_slice().to_vec();
        for (i, x) in h_u.iter().chain(h_g).enumerate() {
            if *x == 0.0 {
                continue;
            }
            let row = self.w1.row(i);
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += x * w;
            }
        }
        debug_assert_eq!(h_u.len() + h_g.len(), 2 * h);
        z
    }

    fn pre_v(&self, h_v: &[f64]) -> Vec<f64> {
        let mut z = self.b2.as_slice().to_vec();
        for (i, x) in h_v.iter().enumerate() {
            let row = self.w2.row(i);
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += x * w;
            }
        }
        z
    }

    /// `σ([h_u, h_G] W1 + b1)`.
    pub fn branch_u(&self, h_u: &[f64], h_g: &[f64]) -> Vec<f64> {
        self.pre_u(h_u, h_g).into_iter().map(sigmoid).collect()
    }

    /// `σ(h_v W2 + b2)`.
    pub fn branch_v(&self, h_v: &[f64]) -> Vec<f64> {
        self.pre_v(h_v).into_iter().map(sigmoid).collect()
    }

    fn check(&self, h_u: &[f64], h_g: &[f64], h_v: &[f64]) -> Result<()> {
        let h = self.embed_dim();
        if h_u.len() != h || h_g.len() != h || h_v.len() != h {
            return Err(Error::Dimension(format!(
                "Q-network expects {h}-dim embeddings, got {}/{}/{}",
                h_u.len(),
                h_g.len(),
                h_v.len()
            )));
        }
        Ok(())
    }

    pub fn q_value(&self, h_u: &[f64], h_g: &[f64], h_v: &[f64]) -> Result<f64> {
        self.check(h_u, h_g, h_v)?;
        Ok(dot(&self.branch_u(h_u, h_g), &self.branch_v(h_v)))
    }

    /// Q for every row of `candidates` against one `(h_G, h_v)`.
    pub fn q_values(&self, candidates: &Matrix, h_g: &[f64], h_v: &[f64]) -> Result<Vec<f64>> {
        if candidates.rows() == 0 {
            return Ok(Vec::new());
        }
        self.check(candidates.row(0), h_g, h_v)?;
        let bv = self.branch_v(h_v);
        Ok(candidates.iter_rows().map(|hu| dot(&self.branch_u(hu, h_g), &bv)).collect())
    }

    /// Mean squared TD error over `samples` with targets held fixed, and its gradient.
    pub fn td_loss_and_grad(&self, samples: &[QSample<'_>]) -> Result<GradTape> {
        if samples.is_empty() {
            return Err(Error::Domain("empty TD batch".into()));
        }
        let (h, k) = (self.embed_dim(), self.width());
        let mut dw1 = Matrix::zeros(2 * h, k);
        let mut db1 = Matrix::zeros(1, k);
        let mut dw2 = Matrix::zeros(h, k);
        let mut db2 = Matrix::zeros(1, k);
        let scale = 1.0 / samples.len() as f64;
        let mut loss = 0.0;
        for s in samples {
            self.check(s.h_u, s.h_g, s.h_v)?;
            let a: Vec<f64> = self.branch_u(s.h_u, s.h_g);
            let b: Vec<f64> = self.branch_v(s.h_v);
            let q = dot(&a, &b);
            let err = q - s.target;
            loss += scale * err * err;
            let c = 2.0 * scale * err;
            let da: Vec<f64> = (0..k).map(|j| c * b[j] * a[j] * (1.0 - a[j])).collect();
            let dbv: Vec<f64> = (0..k).map(|j| c * a[j] * b[j] * (1.0 - b[j])).collect();
            for (i, x) in s.h_u.iter().chain(s.h_g).enumerate() {
                for (g, d) in dw1.row_mut(i).iter_mut().zip(&da) {
                    *g += x * d;
                }
            }
            for (g, d) in db1.as_mut_slice().iter_mut().zip(&da) {
                *g += d;
            }
            for (i, x) in s.h_v.iter().enumerate() {
                for (g, d) in dw2.row_mut(i).iter_mut().zip(&dbv) {
                    *g += x * d;
                }
            }
            for (g, d) in db2.as_mut_slice().iter_mut().zip(&dbv) {
                *g += d;
            }
        }
        Ok(GradTape::new(&self.param_names(), vec![dw1, db1, dw2, db2], loss))
    }
}

impl Parameterized for QNet {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["w1", "b1", "w2", "b2"]
    }
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }
    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::gradcheck::check_param_gradient;
    use crate::rng;

    fn rand_vec(n: usize, r: &mut rng::Rng) -> Vec<f64> {
        Matrix::randn(1, n, 1.0, r).into_vec()
    }

    #[test]
    fn zero_weights_give_quarter_width() {
        let q = QNet::zeros(4, 6);
        let v = q.q_value(&[1.0; 4], &[2.0; 4], &[-3.0; 4]).unwrap();
        assert!((v - 0.25 * 6.0).abs() < 1e-15);
    }

    #[test]
    fn range_and_dense_oracle() {
        let mut r = rng::seeded(1);
        let mut q = QNet::random(5, 7, &mut r);
        q.b1 = Matrix::randn(1, 7, 1.0, &mut r);
        q.b2 = Matrix::randn(1, 7, 1.0, &mut r);
        for _ in 0..20 {
            let (hu, hg, hv) = (rand_vec(5, &mut r), rand_vec(5, &mut r), rand_vec(5, &mut r));
            let got = q.q_value(&hu, &hg, &hv).unwrap();
            assert!(got > 0.0 && got < 7.0);
            // dense evaluation through Matrix products
            let x = Matrix::row_vector(&[hu.clone(), hg.clone()].concat());
            let a = x.matmul(&q.w1).unwrap().add(&q.b1).unwrap().map(sigmoid);
            let b = Matrix::row_vector(&hv).matmul(&q.w2).unwrap().add(&q.b2).unwrap().map(sigmoid);
            let oracle: f64 = a.hadamard(&b).unwrap().sum();
            assert!((got - oracle).abs() < 1e-12);
        }
        assert!(q.q_value(&[0.0; 4], &[0.0; 5], &[0.0; 5]).is_err());
    }

    #[test]
    fn td_gradient_matches_finite_differences() {
        let mut r = rng::seeded(2);
        let mut q = QNet::random(4, 6, &mut r);
        q.b1 = Matrix::randn(1, 6, 0.5, &mut r);
        q.b2 = Matrix::randn(1, 6, 0.5, &mut r);
        let data: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> = (0..8)
            .map(|i| (rand_vec(4, &mut r), rand_vec(4, &mut r), rand_vec(4, &mut r), if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let batch: Vec<QSample> =
            data.iter().map(|(a, b, c, t)| QSample { h_u: a, h_g: b, h_v: c, target: *t }).collect();
        let tape = q.td_loss_and_grad(&batch).unwrap();
        let params: Vec<Matrix> = q.params().into_iter().cloned().collect();
        let f = |ps: &[Matrix]| {
            let p = QNet { w1: ps[0].clone(), b1: ps[1].clone(), w2: ps[2].clone(), b2: ps[3].clone() };
            batch.iter().map(|s| (p.q_value(s.h_u, s.h_g, s.h_v).unwrap() - s.target).powi(2)).sum::<f64>() / 8.0
        };
        for which in 0..4 {
            let c = check_param_gradient(&params, which, &tape.grads[which], f, 20, 1e-6, &mut r);
            assert!(c.max_rel_error <= 1e-4, "param {which}: {}", c.max_rel_error);
        }
    }
}
