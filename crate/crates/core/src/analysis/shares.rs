use crate::error::{Error, Result};
use crate::estimate::{ComponentPaths, MeanPolicy, SeriesKind};

/// `|h_j(t)| / Σ_k |h_k(t)|` for each component path.
pub fn absolute_shares(components: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let t = components.first().map_or(0, |c| c.len());
    if components.iter().any(|c| c.len() != t) {
        return Err(Error::Dimension("component paths differ in length".into()));
    }
    let mut out = vec![vec![0.0; t]; components.len()];
    for i in 0..t {
        let total: f64 = components.iter().map(|c| c[i].abs()).sum();
        if !(total > 0.0) {
            return Err(Error::Numerical(format!("all components are zero at row {i}")));
        }
        for (o, c) in out.iter_mut().zip(components) {
            o[i] = c[i].abs() / total;
        }
    }
    Ok(out)
}

/// Absolute shares of the aggregated contributions in `paths`. Rows without
/// usable draws are NaN.
pub fn contribution_shares(paths: &ComponentPaths, policy: MeanPolicy) -> Result<Vec<(String, Vec<f64>)>> {
    let names: Vec<String> = paths
        .series
        .iter()
        .filter(|s| s.kind == SeriesKind::Contribution)
        .map(|s| s.name.clone())
        .collect();
    let means = names
        .iter()
        .map(|n| paths.mean(n, policy))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![vec![f64::NAN; paths.len()]; names.len()];
    for t in 0..paths.len() {
        let row: Vec<Vec<f64>> = means.iter().map(|m| vec![m[t]]).collect();
        if row.iter().any(|r| !r[0].is_finite()) {
            continue;
        }
        let s = absolute_shares(&row)?;
        for (o, v) in out.iter_mut().zip(s) {
            o[t] = v[0];
        }
    }
    Ok(names.into_iter().zip(out).collect())
}
