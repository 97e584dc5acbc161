//! Central finite differences, used as the independent oracle for every
//! hand-written backward pass in the crate.

use rand::seq::index::sample;
use rand::Rng;

use crate::num::Matrix;

/// `(f(x+e) - f(x-e)) / 2e` for every entry of `x`.
pub fn finite_diff_grad(f: impl Fn(&Matrix) -> f64, x: &Matrix, eps: f64) -> Matrix {
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + eps;
        let up = f(&probe);
        probe.as_mut_slice()[k] = orig - eps;
        let down = f(&probe);
        probe.as_mut_slice()[k] = orig;
        g.as_mut_slice()[k] = (up - down) / (2.0 * eps);
    }
    g
}

/// Central difference of a single flat coordinate.
pub fn finite_diff_entry(f: impl Fn(&Matrix) -> f64, x: &Matrix, k: usize, eps: f64) -> f64 {
    let mut probe = x.clone();
    let orig = probe.as_slice()[k];
    probe.as_mut_slice()[k] = orig + eps;
    let up = f(&probe);
    probe.as_mut_slice()[k] = orig - eps;
    let down = f(&probe);
    (up - down) / (2.0 * eps)
}

/// Relative error with an absolute floor so that near-zero gradients do not
/// blow up the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, Copy)]
pub struct CheckSummary {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Compares an analytic gradient for parameter `which` of a parameter list
/// against central differences on `count` randomly chosen coordinates.
pub fn check_param_gradient<R: Rng + ?Sized>(
    params: &[Matrix],
    which: usize,
    analytic: &Matrix,
    loss: impl Fn(&[Matrix]) -> f64,
    count: usize,
    eps: f64,
    rng: &mut R,
) -> CheckSummary {
    let len = params[which].as_slice().len();
    let picks: Vec<usize> = if count >= len {
        (0..len).collect()
    } else {
        sample(rng, len, count).into_vec()
    };
    let mut work = params.to_vec();
    let mut max_rel: f64 = 0.0;
    for &k in &picks {
        let orig = work[which].as_slice()[k];
        work[which].as_mut_slice()[k] = orig + eps;
        let up = loss(&work);
        work[which].as_mut_slice()[k] = orig - eps;
        let down = loss(&work);
        work[which].as_mut_slice()[k] = orig;
        let numeric = (up - down) / (2.0 * eps);
        max_rel = max_rel.max(relative_error(analytic.as_slice()[k], numeric));
    }
    CheckSummary { checked: picks.len(), max_rel_error: max_rel }
}
