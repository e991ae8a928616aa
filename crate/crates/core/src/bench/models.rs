//! Econometric benchmark forecasts. All are deterministic functions of the
//! history they are given; the last element of a history is the origin.

use serde::{Deserialize, Serialize};

use super::ols::{design, ols, OlsFit};
use crate::data::Aggregation;
use crate::error::{Error, Result};

/// Minimum history for the autoregressive benchmark.
pub const AR_MIN_OBS: usize = 40;

/// Forecast target relative to the origin: `steps` ahead, aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    pub aggregation: Aggregation,
}

impl Horizon {
    pub fn one() -> Self {
        Self { steps: 1, aggregation: Aggregation::OneStep }
    }

    pub fn mean(steps: usize) -> Self {
        Self { steps, aggregation: Aggregation::HorizonMean }
    }

    /// Combine the path `x_{t+1..t+s}`.
    pub fn combine(&self, path: &[f64]) -> f64 {
        match self.aggregation {
            Aggregation::OneStep => path[self.steps - 1],
            Aggregation::HorizonSum => path[..self.steps].iter().sum(),
            Aggregation::HorizonMean => path[..self.steps].iter().sum::<f64>() / self.steps as f64,
        }
    }

    /// Target attached to position `t` of `base`, if observed.
    pub fn target_at(&self, base: &[f64], t: usize) -> Option<f64> {
        let end = t + self.steps;
        if end >= base.len() {
            return None;
        }
        let v = self.combine(&base[t + 1..=end]);
        v.is_finite().then_some(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    /// Intercept followed by the lag coefficients φ₁..φ_p.
    pub coef: Vec<f64>,
    pub fit: OlsFit,
}

impl ArFit {
    pub fn order(&self) -> usize {
        self.coef.len() - 1
    }

    /// Iterated forecasts `x̂_{T+1..T+s}` from the end of `history`.
    pub fn iterate(&self, history: &[f64], steps: usize) -> Vec<f64> {
        let p = self.order();
        let mut buf: Vec<f64> = history[history.len() - p..].to_vec();
        for _ in 0..steps {
            let n = buf.len();
            let next = self.coef[0] + (1..=p).map(|l| self.coef[l] * buf[n - l]).sum::<f64>();
            buf.push(next);
        }
        buf[p..].to_vec()
    }
}

/// Rows `[1, x_{t-1}, …, x_{t-p}]` and responses `x_t` for t = p..n.
pub fn ar_design(history: &[f64], p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    (p..history.len())
        .map(|t| {
            let mut row = Vec::with_capacity(p + 1);
            row.push(1.0);
            row.extend((1..=p).map(|l| history[t - l]));
            (row, history[t])
        })
        .unzip()
}

/// Least-squares AR(p) with intercept on the whole history.
pub fn fit_ar(history: &[f64], p: usize) -> Result<ArFit> {
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("benchmark history contains missing values".into()));
    }
    if history.len() < AR_MIN_OBS.max(p + 2) {
        return Err(Error::Insufficient(format!(
            "AR({p}) needs at least {} observations, have {}",
            AR_MIN_OBS.max(p + 2),
            history.len()
        )));
    }
    let (rows, y) = ar_design(history, p);
    let fit = ols(&design(&rows), &y)?;
    Ok(ArFit { coef: fit.coef.clone(), fit })
}

/// AR(4) forecast of the aggregated target, by iterating one-step forecasts.
pub fn bench_ar4(history: &[f64], horizon: Horizon) -> Result<f64> {
    let fit = fit_ar(history, 4)?;
    Ok(horizon.combine(&fit.iterate(history, horizon.steps)))
}

/// Mean of the last `window` observations.
pub fn bench_rolling_mean(history: &[f64], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::Config("rolling mean window must be at least 1".into()));
    }
    if history.len() < window {
        return Err(Error::Insufficient(format!(
            "rolling mean over {window} needs as many observations, have {}",
            history.len()
        )));
    }
    let tail = &history[history.len() - window..];
    if tail.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("benchmark history contains missing values".into()));
    }
    Ok(tail.iter().sum::<f64>() / window as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcSpec {
    /// Regression rows in the rolling window.
    pub window: usize,
    /// Lags (including the current value) of inflation, the gap and each extra.
    pub lags: usize,
}

impl Default for PcSpec {
    fn default() -> Self {
        Self { window: 60, lags: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcFit {
    /// Intercept, inflation lags, gap lags, then each extra's lags.
    pub coef: Vec<f64>,
    pub forecast: f64,
    pub rows: usize,
}

fn pc_row(t: usize, history: &[f64], gap: &[f64], extras: &[&[f64]], lags: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for series in std::iter::once(history).chain(std::iter::once(gap)).chain(extras.iter().copied()) {
        row.extend((0..lags).map(|l| series[t - l]));
    }
    row
}

/// Regression rows of the Phillips-curve benchmark: the aggregated target
/// at t on `lags` values of inflation, the gap and each extra ending at t.
/// Returns rows, responses and the forecast row at the origin.
pub fn pc_design(
    history: &[f64],
    gap: &[f64],
    extras: &[&[f64]],
    horizon: Horizon,
    lags: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let n = history.len();
    if gap.len() != n || extras.iter().any(|e| e.len() != n) {
        return Err(Error::Dimension("benchmark regressors are not aligned with the history".into()));
    }
    if lags == 0 || n < lags {
        return Err(Error::Insufficient(format!("{n} observations for {lags} lags")));
    }
    let finite = |t: usize| {
        (0..lags).all(|l| {
            history[t - l].is_finite() && gap[t - l].is_finite() && extras.iter().all(|e| e[t - l].is_finite())
        })
    };
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for t in lags - 1..n {
        if let Some(v) = horizon.target_at(history, t) {
            if finite(t) {
                rows.push(pc_row(t, history, gap, extras, lags));
                y.push(v);
            }
        }
    }
    if !finite(n - 1) {
        return Err(Error::Data("benchmark regressors are missing at the origin".into()));
    }
    Ok((rows, y, pc_row(n - 1, history, gap, extras, lags)))
}

/// Rolling-window Phillips curve: OLS on the last `spec.window` complete rows.
/// With `extras` (e.g. oil prices and survey expectations) this is PC+.
pub fn bench_pc(
    history: &[f64],
    gap: &[f64],
    extras: &[&[f64]],
    horizon: Horizon,
    spec: &PcSpec,
) -> Result<PcFit> {
    let (rows, y, at) = pc_design(history, gap, extras, horizon, spec.lags)?;
    if spec.window == 0 || rows.len() < spec.window {
        return Err(Error::Insufficient(format!(
            "PC window of {} rows exceeds the {} available",
            spec.window,
            rows.len()
        )));
    }
    let start = rows.len() - spec.window;
    let fit = ols(&design(&rows[start..]), &y[start..])?;
    let forecast = fit.coef.iter().zip(&at).map(|(b, x)| b * x).sum();
    Ok(PcFit { coef: fit.coef, forecast, rows: spec.window })
}
