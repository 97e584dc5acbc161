use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::num::{GradTape, Matrix, Parameterized};

use super::masked_ce;

/// Simplified graph convolution: `logits = Â^K X W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgcParams {
    pub w: Matrix,
    pub hops: usize,
}

impl SgcParams {
    pub fn random<R: Rng + ?Sized>(in_dim: usize, hops: usize, rng: &mut R) -> Self {
        SgcParams { w: Matrix::glorot(in_dim, 2, rng), hops }
    }

    fn smoothed(&self, g: &SocialGraph) -> Result<Matrix> {
        if g.feature_dim() != self.w.rows() {
            return Err(Error::Dimension(format!(
                "features have width {}, sgc expects {}",
                g.feature_dim(),
                self.w.rows()
            )));
        }
        let mut s = g.features().clone();
        for _ in 0..self.hops {
            s = g.propagate(&s)?;
        }
        Ok(s)
    }

    pub fn loss_and_grad(&self, g: &SocialGraph, labels: &[usize], mask: &[usize]) -> Result<GradTape> {
        let s = self.smoothed(g)?;
        let logits = s.matmul(&self.w)?;
        let (loss, dl) = masked_ce(&logits, labels, mask)?;
        Ok(GradTape::new(&["w"], vec![s.t_matmul(&dl)?], loss))
    }
}

impl Parameterized for SgcParams {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["w"]
    }
    fn params(&self) -> Vec<&Matrix> {
        vec![&self.w]
    }
    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w]
    }
}

pub fn sgc_forward(g: &SocialGraph, p: &SgcParams) -> Result<Matrix> {
    p.smoothed(g)?.matmul(&p.w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Label;
    use crate::num::cross_entropy;
    use crate::num::gradcheck::check_param_gradient;
    use crate::rng;

    #[test]
    fn one_hop_matches_smoothing_oracle() {
        let mut r = rng::seeded(1);
        let x = Matrix::randn(4, 2, 1.0, &mut r);
        let mut g = SocialGraph::new(x.clone(), vec![Label::Human; 4]).unwrap();
        g.add_edge(0, 1).unwrap();
        g.add_edge(1, 2).unwrap();
        let p = SgcParams { w: Matrix::identity(2), hops: 1 };
        let got = sgc_forward(&g, &p).unwrap();
        // one-hop smoothing by hand: node 1 has degree 2 (d̃ = 3)
        let s = |a: usize, b: usize| 1.0 / (((g.degree(a) + 1) * (g.degree(b) + 1)) as f64).sqrt();
        for c in 0..2 {
            let expect1 = x[(1, c)] * s(1, 1) + x[(0, c)] * s(1, 0) + x[(2, c)] * s(1, 2);
            assert!((got[(1, c)] - expect1).abs() < 1e-14);
            assert!((got[(3, c)] - x[(3, c)]).abs() < 1e-14);
        }
        let dense = g.normalized_adjacency().matmul(&x).unwrap();
        assert!(dense.max_abs_diff(&got) < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::seeded(2);
        let x = Matrix::randn(20, 4, 1.0, &mut r);
        let labels: Vec<Label> = (0..20).map(|i| if i % 3 == 0 { Label::Bot } else { Label::Human }).collect();
        let mut g = SocialGraph::new(x, labels).unwrap();
        for i in 0..19 {
            g.add_edge(i, i + 1).unwrap();
        }
        let ids = g.class_ids();
        let mask: Vec<usize> = (0..20).collect();
        let p = SgcParams::random(4, 2, &mut r);
        let tape = p.loss_and_grad(&g, &ids, &mask).unwrap();
        let loss = |ps: &[Matrix]| {
            let q = SgcParams { w: ps[0].clone(), hops: 2 };
            cross_entropy(&sgc_forward(&g, &q).unwrap(), &ids, &mask).unwrap()
        };
        let s = check_param_gradient(std::slice::from_ref(&p.w), 0, &tape.grads[0], loss, 20, 1e-6, &mut r);
        assert!(s.max_rel_error <= 1e-4);
    }

    #[test]
    fn permutation_equivariance() {
        use rand::seq::SliceRandom;
        let mut r = rng::seeded(3);
        let x = Matrix::randn(10, 3, 1.0, &mut r);
        let mut g = SocialGraph::new(x, vec![Label::Human; 10]).unwrap();
        for (u, v) in [(0, 1), (1, 2), (3, 4), (2, 7), (8, 9), (0, 9)] {
            g.add_edge(u, v).unwrap();
        }
        let p = SgcParams::random(3, 3, &mut r);
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut r);
        let a = sgc_forward(&g, &p).unwrap();
        let b = sgc_forward(&g.permuted(&perm).unwrap(), &p).unwrap();
        for i in 0..10 {
            assert!((a[(i, 0)] - b[(perm[i], 0)]).abs() < 1e-12);
        }
    }
}
