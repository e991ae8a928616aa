//! Lag and moving-average expansion of a single series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which lags accompany the moving averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagConvention {
    /// x_t, x_{t-1}, x_{t-2}, x_{t-3}
    #[default]
    IncludeCurrent,
    /// x_{t-1} .. x_{t-4}
    Lagged,
}

/// Kind of an expanded column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Lag(u8),
    MovingAverage(u8),
    Trend,
}

impl FeatureKind {
    pub fn label(self) -> String {
        match self {
            FeatureKind::Lag(k) => format!("lag{k}"),
            FeatureKind::MovingAverage(k) => format!("ma{k}"),
            FeatureKind::Trend => "trend".to_string(),
        }
    }
}

pub const MA_ORDERS: [usize; 3] = [2, 4, 8];
pub const N_MARX: usize = 7;

/// Seven columns aligned on the input's index; undefined heads are NaN.
#[derive(Debug, Clone)]
pub struct MarxColumns {
    pub kinds: [FeatureKind; N_MARX],
    pub columns: [Vec<f64>; N_MARX],
}

fn lag(x: &[f64], k: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| if t >= k { x[t - k] } else { f64::NAN })
        .collect()
}

fn moving_average(x: &[f64], k: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if t + 1 < k {
                f64::NAN
            } else {
                x[t + 1 - k..=t].iter().sum::<f64>() / k as f64
            }
        })
        .collect()
}

/// Expand `series` into four lags and moving averages of order 2, 4 and 8.
/// Every column at position t uses only values at positions ≤ t.
pub fn marx_expand(series: &[f64], convention: LagConvention) -> Result<MarxColumns> {
    if series.len() <= 8 {
        return Err(Error::SeriesTooShort {
            mnemonic: String::new(),
            needed: 9,
            have: series.len(),
        });
    }
    let first_lag = match convention {
        LagConvention::IncludeCurrent => 0,
        LagConvention::Lagged => 1,
    };
    let lags: Vec<usize> = (first_lag..first_lag + 4).collect();
    let kinds = [
        FeatureKind::Lag(lags[0] as u8),
        FeatureKind::Lag(lags[1] as u8),
        FeatureKind::Lag(lags[2] as u8),
        FeatureKind::Lag(lags[3] as u8),
        FeatureKind::MovingAverage(2),
        FeatureKind::MovingAverage(4),
        FeatureKind::MovingAverage(8),
    ];
    let columns = [
        lag(series, lags[0]),
        lag(series, lags[1]),
        lag(series, lags[2]),
        lag(series, lags[3]),
        moving_average(series, MA_ORDERS[0]),
        moving_average(series, MA_ORDERS[1]),
        moving_average(series, MA_ORDERS[2]),
    ];
    Ok(MarxColumns { kinds, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_series_gives_constant_columns() {
        let x = vec![3.25; 20];
        let m = marx_expand(&x, LagConvention::IncludeCurrent).unwrap();
        for col in &m.columns {
            for v in &col[7..] {
                assert_eq!(*v, 3.25);
            }
        }
    }

    #[test]
    fn ma2_by_hand() {
        let x: Vec<f64> = (1..=12).map(f64::from).collect();
        let m = marx_expand(&x, LagConvention::IncludeCurrent).unwrap();
        // 1-indexed t = 4 -> (4 + 3) / 2
        assert_eq!(m.columns[4][3], 3.5);
        assert_eq!(m.columns[6][7], 4.5);
        assert!(m.columns[6][6].is_nan());
        assert_eq!(m.columns[3][5], 3.0);
    }

    #[test]
    fn lagged_convention_shifts() {
        let x: Vec<f64> = (1..=12).map(f64::from).collect();
        let m = marx_expand(&x, LagConvention::Lagged).unwrap();
        assert_eq!(m.kinds[0], FeatureKind::Lag(1));
        assert_eq!(m.columns[0][5], 5.0);
        assert_eq!(m.columns[3][5], 2.0);
    }

    #[test]
    fn short_series_rejected() {
        assert!(marx_expand(&[1.0; 8], LagConvention::IncludeCurrent).is_err());
    }

    #[test]
    fn causal() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let base = marx_expand(&x, LagConvention::IncludeCurrent).unwrap();
        let mut y = x.clone();
        for v in &mut y[20..] {
            *v += 100.0;
        }
        let bumped = marx_expand(&y, LagConvention::IncludeCurrent).unwrap();
        for (a, b) in base.columns.iter().zip(&bumped.columns) {
            for t in 0..20 {
                assert!(a[t].to_bits() == b[t].to_bits());
            }
        }
    }

    #[test]
    fn moving_average_variance_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let var = |v: &[f64]| {
            let v: Vec<f64> = v.iter().copied().filter(|z| z.is_finite()).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|z| (z - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let vx = var(&x);
        let m = marx_expand(&x, LagConvention::IncludeCurrent).unwrap();
        for (i, k) in MA_ORDERS.iter().enumerate() {
            let ratio = var(&m.columns[4 + i]) / (vx / *k as f64);
            assert!((ratio - 1.0).abs() < 0.15, "ma{k}: ratio {ratio}");
        }
    }
}
