use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Matrix;

/// Relative spread below which a dimension is treated as constant.
const CONSTANT_TOL: f64 = 1e-12;

/// Per-dimension standardization. Constant dimensions are dropped on the way in
/// and restored as their constant value on the way out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Indices of the dimensions the model sees.
    pub retained: Vec<usize>,
}

impl FeatureNormalizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Domain("cannot fit a normalizer on zero rows".into()));
        }
        x.check_finite("normalizer input")?;
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let retained: Vec<usize> = (0..d).filter(|&j| std[j] > CONSTANT_TOL * mean[j].abs().max(1.0)).collect();
        for j in 0..d {
            if !retained.contains(&j) {
                mean[j] = x[(0, j)];
            }
        }
        Ok(FeatureNormalizer { mean, std, retained })
    }

    pub fn raw_width(&self) -> usize {
        self.mean.len()
    }

    pub fn width(&self) -> usize {
        self.retained.len()
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.raw_width()).filter(|j| !self.retained.contains(j)).collect()
    }

    pub fn standardize_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.raw_width() {
            return Err(Error::Dimension(format!("row width {} vs {}", row.len(), self.raw_width())));
        }
        Ok(self.retained.iter().map(|&j| (row[j] - self.mean[j]) / self.std[j]).collect())
    }

    pub fn restore_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.width() {
            return Err(Error::Dimension(format!("standardized width {} vs {}", z.len(), self.width())));
        }
        let mut out = self.mean.clone();
        for (&j, v) in self.retained.iter().zip(z) {
            out[j] = v * self.std[j] + self.mean[j];
        }
        Ok(out)
    }

    pub fn standardize(&self, x: &Matrix) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| self.standardize_row(r)).collect::<Result<_>>()?;
        matrix_from_rows(rows, self.width())
    }

    pub fn restore(&self, z: &Matrix) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = z.iter_rows().map(|r| self.restore_row(r)).collect::<Result<_>>()?;
        matrix_from_rows(rows, self.raw_width())
    }
}

pub(crate) fn matrix_from_rows(rows: Vec<Vec<f64>>, width: usize) -> Result<Matrix> {
    let n = rows.len();
    Matrix::from_vec(n, width, rows.into_iter().flatten().collect())
}
