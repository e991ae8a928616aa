use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use super::vi::ViReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// First principal component scores.
    pub scores: Vec<f64>,
    pub loadings: Vec<f64>,
    /// Share of total variance carried by the first component.
    pub explained: f64,
}

/// First principal component of the columns of `x` (centred first). With
/// `weights`, columns are multiplied by the weights normalised to mean one.
/// The sign makes the scores non-negatively correlated with `reference` when
/// given, otherwise makes the loadings sum non-negative.
pub fn pca_extract(
    x: ArrayView2<f64>,
    weights: Option<&[f64]>,
    reference: Option<&[f64]>,
) -> Result<PcaResult> {
    let (t, p) = x.dim();
    if t < 2 || p == 0 {
        return Err(Error::Insufficient(format!("pca needs ≥2 rows and ≥1 column, got {t}×{p}")));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != p || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config("pca weights must be non-negative, one per column".into()));
            }
            let mean = w.iter().sum::<f64>() / p as f64;
            if !(mean > 0.0) {
                return Err(Error::Config("pca weights are all zero".into()));
            }
            w.iter().map(|v| v / mean).collect()
        }
        None => vec![1.0; p],
    };
    let mut m = DMatrix::<f64>::zeros(t, p);
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / t as f64;
        for i in 0..t {
            m[(i, j)] = (col[i] - mean) * w[j];
        }
    }
    let cov = m.transpose() * &m / t as f64;
    let total = cov.trace();
    if !(total > 0.0) {
        return Err(Error::Numerical("all columns are constant".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let (k, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
    let mut loadings: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let mut scores: Vec<f64> = (0..t)
        .map(|i| (0..p).map(|j| m[(i, j)] * loadings[j]).sum())
        .collect();
    let flip = match reference {
        Some(r) => {
            if r.len() != t {
                return Err(Error::Dimension("reference length differs from rows".into()));
            }
            let rm = r.iter().sum::<f64>() / t as f64;
            scores.iter().zip(r).map(|(s, v)| s * (v - rm)).sum::<f64>() < 0.0
        }
        None => loadings.iter().sum::<f64>() < 0.0,
    };
    if flip {
        loadings.iter_mut().for_each(|v| *v = -*v);
        scores.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(PcaResult {
        scores,
        loadings,
        explained: (lambda / total).clamp(0.0, 1.0),
    })
}

/// Column weights for [`pca_extract`] from a VI report: each variable's
/// (non-negative part of its) importance is given to all of its columns; the
/// trend column gets zero.
pub fn vi_column_weights(features: &FeatureMatrix, report: &ViReport) -> Vec<f64> {
    let mut w = vec![0.0; features.width()];
    for (var, cols) in features.variable_groups() {
        let v = report.get(&var).unwrap_or(0.0).max(0.0);
        for c in cols {
            w[c] = v;
        }
    }
    w
}
