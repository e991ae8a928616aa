use crate::error::{Error, Result};

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension(format!(
            "loss inputs have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean squared error.
pub fn loss_mse(target: &[f64], prediction: &[f64]) -> Result<f64> {
    check_len(target, prediction)?;
    let n = target.len() as f64;
    Ok(target
        .iter()
        .zip(prediction)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / n)
}

/// Gradient of [`loss_mse`] with respect to the prediction.
pub fn loss_mse_grad(target: &[f64], prediction: &[f64]) -> Vec<f64> {
    let n = target.len() as f64;
    target
        .iter()
        .zip(prediction)
        .map(|(y, p)| -2.0 * (y - p) / n)
        .collect()
}

/// Joint mean/volatility objective `(1/T) Σ [((y - ŷ)/h)² + 1] h`.
pub fn loss_mean_variance(target: &[f64], prediction: &[f64], volatility: &[f64]) -> Result<f64> {
    check_len(target, prediction)?;
    check_len(target, volatility)?;
    if let Some(h) = volatility.iter().find(|h| !(**h > 0.0)) {
        return Err(Error::Numerical(format!("volatility must be positive, got {h}")));
    }
    let n = target.len() as f64;
    Ok(target
        .iter()
        .zip(prediction)
        .zip(volatility)
        .map(|((y, p), h)| {
            let z = (y - p) / h;
            (z * z + 1.0) * h
        })
        .sum::<f64>()
        / n)
}

/// Gradients of [`loss_mean_variance`] with respect to the prediction and the
/// volatility. With h ≡ 1 the first equals [`loss_mse_grad`] bit for bit.
pub fn loss_mean_variance_grad(
    target: &[f64],
    prediction: &[f64],
    volatility: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = target.len() as f64;
    let mut gp = Vec::with_capacity(target.len());
    let mut gh = Vec::with_capacity(target.len());
    for ((y, p), h) in target.iter().zip(prediction).zip(volatility) {
        let e = y - p;
        gp.push(-2.0 * (e / h) / n);
        let z = e / h;
        gh.push((1.0 - z * z) / n);
    }
    (gp, gh)
}
