use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::num::{relu, GradTape, Matrix, Parameterized};
use crate::rng;

use super::masked_ce;

/// Mean aggregator over at most `cap` sampled neighbours per node.
#[derive(Debug, Clone)]
pub struct SampledMean {
    picks: Vec<Vec<usize>>,
}

impl SampledMean {
    pub fn draw(g: &SocialGraph, cap: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let picks = (0..g.n())
            .map(|v| {
                let nb: Vec<usize> = g.neighbors(v).collect();
                if nb.len() <= cap {
                    nb
                } else {
                    let mut idx = sample(&mut r, nb.len(), cap).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|k| nb[k]).collect()
                }
            })
            .collect();
        SampledMean { picks }
    }

    /// Row `v` of the output is the mean of the sampled neighbours' rows (zero when none).
    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for (v, nb) in self.picks.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let w = 1.0 / nb.len() as f64;
            let o = out.row_mut(v);
            for &u in nb {
                for (ov, xv) in o.iter_mut().zip(x.row(u)) {
                    *ov += w * xv;
                }
            }
        }
        out
    }

    /// Adjoint of [`SampledMean::apply`].
    pub fn apply_transpose(&self, g: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(g.rows(), g.cols());
        for (v, nb) in self.picks.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let w = 1.0 / nb.len() as f64;
            for &u in nb {
                for c in 0..g.cols() {
                    out[(u, c)] += w * g[(v, c)];
                }
            }
        }
        out
    }
}

/// Two mean-aggregator layers: `h = relu([x | mean(x)] W1)`, `logits = [h | mean(h)] W2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub sample: usize,
    /// Sampling seed used at inference time.
    pub eval_seed: u64,
}

impl SageParams {
    pub fn random<R: Rng + ?Sized>(in_dim: usize, hidden: usize, sample: usize, eval_seed: u64, rng: &mut R) -> Self {
        SageParams {
            w1: Matrix::glorot(2 * in_dim, hidden, rng),
            w2: Matrix::glorot(2 * hidden, 2, rng),
            sample,
            eval_seed,
        }
    }

    fn check(&self, g: &SocialGraph) -> Result<()> {
        if 2 * g.feature_dim() != self.w1.rows() {
            return Err(Error::Dimension(format!(
                "features have width {}, sage layer expects {}",
                g.feature_dim(),
                self.w1.rows() / 2
            )));
        }
        Ok(())
    }

    fn samplers(&self, g: &SocialGraph, seed: u64) -> (SampledMean, SampledMean) {
        (SampledMean::draw(g, self.sample, seed), SampledMean::draw(g, self.sample, seed ^ 0xA5A5_5A5A))
    }

    pub fn loss_and_grad(&self, g: &SocialGraph, labels: &[usize], mask: &[usize], seed: u64) -> Result<GradTape> {
        self.check(g)?;
        let (m1, m2) = self.samplers(g, seed);
        let x = g.features();
        let c1 = x.hstack(&m1.apply(x))?;
        let z1 = c1.matmul(&self.w1)?;
        let h = z1.map(relu);
        let c2 = h.hstack(&m2.apply(&h))?;
        let logits = c2.matmul(&self.w2)?;
        let (loss, dl) = masked_ce(&logits, labels, mask)?;
        let dw2 = c2.t_matmul(&dl)?;
        let dc2 = dl.matmul_t(&self.w2)?;
        let (dh_self, dmh) = dc2.split_cols(h.cols());
        let mut dz1 = dh_self.add(&m2.apply_transpose(&dmh))?;
        for (d, z) in dz1.as_mut_slice().iter_mut().zip(z1.as_slice()) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let dw1 = c1.t_matmul(&dz1)?;
        Ok(GradTape::new(&["w1", "w2"], vec![dw1, dw2], loss))
    }
}

impl Parameterized for SageParams {
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

pub fn sage_mean_forward(g: &SocialGraph, p: &SageParams, seed: u64) -> Result<Matrix> {
    p.check(g)?;
    let (m1, m2) = p.samplers(g, seed);
    let x = g.features();
    let h = x.hstack(&m1.apply(x))?.matmul(&p.w1)?.map(relu);
    h.hstack(&m2.apply(&h))?.matmul(&p.w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Label;
    use crate::num::cross_entropy;
    use crate::num::gradcheck::check_param_gradient;

    fn graph(seed: u64) -> SocialGraph {
        let mut r = rng::seeded(seed);
        let x = Matrix::randn(25, 3, 1.0, &mut r);
        let labels = (0..25).map(|i| if i % 2 == 0 { Label::Human } else { Label::Bot }).collect();
        let mut g = SocialGraph::new(x, labels).unwrap();
        for u in 0..25 {
            for v in u + 1..25 {
                if r.random_bool(0.2) {
                    g.add_edge(u, v).unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn saturated_sampling_equals_full_mean() {
        let g = graph(1);
        let maxdeg = g.degrees().into_iter().max().unwrap();
        let p = SageParams::random(3, 4, maxdeg, 0, &mut rng::seeded(2));
        let a = sage_mean_forward(&g, &p, 1).unwrap();
        let b = sage_mean_forward(&g, &p, 999).unwrap();
        assert_eq!(a, b);
        // full mean by hand
        let x = g.features();
        let mut mean = Matrix::zeros(25, 3);
        for v in 0..25 {
            let nb: Vec<usize> = g.neighbors(v).collect();
            for &u in &nb {
                for c in 0..3 {
                    mean[(v, c)] += x[(u, c)] / nb.len() as f64;
                }
            }
        }
        let h = x.hstack(&mean).unwrap().matmul(&p.w1).unwrap().map(relu);
        let mut hm = Matrix::zeros(25, 4);
        for v in 0..25 {
            let nb: Vec<usize> = g.neighbors(v).collect();
            for &u in &nb {
                for c in 0..4 {
                    hm[(v, c)] += h[(u, c)] / nb.len() as f64;
                }
            }
        }
        let logits = h.hstack(&hm).unwrap().matmul(&p.w2).unwrap();
        assert!(logits.max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let g = graph(3);
        let p = SageParams::random(3, 4, 2, 0, &mut rng::seeded(4));
        let a = sage_mean_forward(&g, &p, 17).unwrap();
        let b = sage_mean_forward(&g, &p, 17).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = graph(5);
        let ids = g.class_ids();
        let mask: Vec<usize> = (0..25).collect();
        let p = SageParams::random(3, 6, 3, 0, &mut rng::seeded(6));
        let tape = p.loss_and_grad(&g, &ids, &mask, 42).unwrap();
        let loss = |ps: &[Matrix]| {
            let q = SageParams { w1: ps[0].clone(), w2: ps[1].clone(), ..p.clone() };
            cross_entropy(&sage_mean_forward(&g, &q, 42).unwrap(), &ids, &mask).unwrap()
        };
        let params = vec![p.w1.clone(), p.w2.clone()];
        let mut r = rng::seeded(7);
        for which in 0..2 {
            let s = check_param_gradient(&params, which, &tape.grads[which], loss, 20, 1e-6, &mut r);
            assert!(s.max_rel_error <= 1e-4, "param {which}: {}", s.max_rel_error);
        }
    }
}
