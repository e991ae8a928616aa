use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual variance with n − k degrees of freedom (NaN when n == k).
    pub sigma2: f64,
    /// Conventional standard errors, σ²(X'X)⁻¹ diagonal.
    pub std_errors: Vec<f64>,
}

/// Least squares via Householder QR. Rows of `x` are observations.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if n != y.len() {
        return Err(Error::Dimension(format!("design has {n} rows, response {}", y.len())));
    }
    if n < k || k == 0 {
        return Err(Error::Insufficient(format!("{n} observations for {k} regressors")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    if (0..k).any(|j| !(r[(j, j)].abs() > 1e-10 * scale.max(1e-300))) {
        return Err(Error::Numerical("singular regression design".into()));
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular regression design".into()))?;
    let resid = &yv - x * &beta;
    let sigma2 = if n > k { resid.norm_squared() / (n - k) as f64 } else { f64::NAN };
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numerical("singular regression design".into()))?;
    let std_errors = (0..k).map(|j| (sigma2 * rinv.row(j).norm_squared()).sqrt()).collect();
    Ok(OlsFit {
        coef: beta.iter().copied().collect(),
        residuals: resid.iter().copied().collect(),
        sigma2,
        std_errors,
    })
}

/// Design matrix from row vectors.
pub fn design(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let k = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j])
}
