//! PCA whitening with dimensionality reduction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{chunked_sum, columns, sorted_symmetric_eigen};

/// `x ↦ basis · (x − mean)`, where each basis row is a principal direction
/// scaled by `1 / sqrt(λ + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub eps: f64,
}

impl WhiteningTransform {
    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn identity(dim: usize) -> Self {
        WhiteningTransform {
            mean: DVector::zeros(dim),
            basis: DMatrix::identity(dim, dim),
            eps: 0.0,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        let centered = DVector::from_iterator(
            x.len(),
            x.iter().zip(self.mean.iter()).map(|(a, m)| a - m),
        );
        Ok((&self.basis * centered).iter().copied().collect())
    }

    /// Whitens every column of `samples`.
    pub fn apply_columns(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if samples.nrows() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: samples.nrows(),
            });
        }
        let mut centered = samples.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        Ok(&self.basis * centered)
    }
}

pub fn fit_pca_whitening(
    patches: &[Vec<f64>],
    out_dim: usize,
    eps: f64,
) -> Result<WhiteningTransform> {
    if patches.len() < 2 {
        return Err(Error::NotEnoughSamples {
            needed: 2,
            got: patches.len(),
        });
    }
    let in_dim = patches[0].len();
    if let Some(bad) = patches.iter().find(|p| p.len() != in_dim) {
        return Err(Error::DimensionMismatch {
            expected: in_dim,
            got: bad.len(),
        });
    }
    if out_dim == 0 || out_dim > in_dim {
        return Err(Error::InvalidConfig(format!(
            "whitening output dimension {out_dim} must be in 1..={in_dim}"
        )));
    }
    if eps < 0.0 {
        return Err(Error::InvalidConfig(format!("whitening eps {eps} is negative")));
    }

    let data = columns(patches);
    let n = data.ncols();
    let mean = data.column_mean();
    let mut centered = data;
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let scatter = chunked_sum(n, DMatrix::zeros(in_dim, in_dim), |range| {
        let block = centered.columns(range.start, range.len());
        &block * block.transpose()
    });
    let covariance = scatter / (n as f64 - 1.0);
    let (values, vectors) = sorted_symmetric_eigen(covariance);

    let mut basis = DMatrix::zeros(out_dim, in_dim);
    for i in 0..out_dim {
        let lambda = values[i].max(0.0);
        let denom = (lambda + eps).sqrt();
        if denom <= f64::MIN_POSITIVE {
            return Err(Error::InvalidConfig(format!(
                "principal direction {i} has zero variance; use a positive eps or a smaller output dimension"
            )));
        }
        let mut dir: DVector<f64> = vectors.column(i).into_owned();
        let pivot = dir
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (j, v)| {
                if v.abs() > best.1 { (j, v.abs()) } else { best }
            })
            .0;
        if dir[pivot] < 0.0 {
            dir.neg_mut();
        }
        basis.row_mut(i).copy_from(&(dir / denom).transpose());
    }

    Ok(WhiteningTransform { mean, basis, eps })
}
