use crate::error::{Error, Result};
use crate::num::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    SoftmaxRows,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn activate(x: &Matrix, kind: Activation) -> Result<Matrix> {
    x.check_finite("activation input")?;
    Ok(match kind {
        Activation::Relu => x.map(relu),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::SoftmaxRows => softmax_rows(x),
    })
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn check_ce_inputs(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::Domain("cross-entropy over an empty mask".into()));
    }
    if labels.len() < logits.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    for &i in mask {
        if i >= logits.rows() {
            return Err(Error::Dimension(format!("mask index {i} >= {}", logits.rows())));
        }
        if labels[i] >= logits.cols() {
            return Err(Error::Domain(format!("label {} out of range at node {i}", labels[i])));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels` under softmax(`logits`) over the
/// rows listed in `mask`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    check_ce_inputs(logits, labels, mask)?;
    let total: f64 = mask
        .iter()
        .map(|&i| -log_softmax_row(logits.row(i))[labels[i]])
        .sum();
    Ok((total / mask.len() as f64).max(0.0))
}

/// Loss and its gradient with respect to the logits.
pub fn cross_entropy_with_grad(
    logits: &Matrix,
    labels: &[usize],
    mask: &[usize],
) -> Result<(f64, Matrix)> {
    check_ce_inputs(logits, labels, mask)?;
    let m = mask.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for &i in mask {
        let lsm = log_softmax_row(logits.row(i));
        total -= lsm[labels[i]];
        let g = grad.row_mut(i);
        for (c, v) in lsm.iter().enumerate() {
            g[c] += v.exp() / m;
        }
        g[labels[i]] -= 1.0 / m;
    }
    Ok(((total / m).max(0.0), grad))
}
