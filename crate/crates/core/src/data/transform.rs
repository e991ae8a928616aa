//! Stationarity transforms using the FRED-MD/QD transform codes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FRED-QD transform code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Tcode {
    /// x
    Level,
    /// Δx
    Diff,
    /// Δ²x
    Diff2,
    /// log x
    Log,
    /// Δ log x
    LogDiff,
    /// Δ² log x
    LogDiff2,
    /// Δ(x_t / x_{t-1} - 1)
    PctChangeDiff,
}

impl TryFrom<i64> for Tcode {
    type Error = Error;

    fn try_from(code: i64) -> Result<Self> {
        Ok(match code {
            1 => Tcode::Level,
            2 => Tcode::Diff,
            3 => Tcode::Diff2,
            4 => Tcode::Log,
            5 => Tcode::LogDiff,
            6 => Tcode::LogDiff2,
            7 => Tcode::PctChangeDiff,
            _ => {
                return Err(Error::UnknownTcode {
                    mnemonic: String::new(),
                    code,
                })
            }
        })
    }
}

impl From<Tcode> for i64 {
    fn from(t: Tcode) -> i64 {
        match t {
            Tcode::Level => 1,
            Tcode::Diff => 2,
            Tcode::Diff2 => 3,
            Tcode::Log => 4,
            Tcode::LogDiff => 5,
            Tcode::LogDiff2 => 6,
            Tcode::PctChangeDiff => 7,
        }
    }
}

impl Tcode {
    /// Leading observations lost to differencing.
    pub fn depth(self) -> usize {
        match self {
            Tcode::Level | Tcode::Log => 0,
            Tcode::Diff | Tcode::LogDiff => 1,
            Tcode::Diff2 | Tcode::LogDiff2 | Tcode::PctChangeDiff => 2,
        }
    }

    fn uses_log(self) -> bool {
        matches!(self, Tcode::Log | Tcode::LogDiff | Tcode::LogDiff2)
    }

    /// Transform keeping the input length; the first `depth()` entries are NaN.
    /// Missing inputs (NaN) propagate.
    pub fn apply_aligned(self, mnemonic: &str, series: &[f64]) -> Result<Vec<f64>> {
        if self.uses_log() {
            if let Some((index, &value)) = series
                .iter()
                .enumerate()
                .find(|(_, v)| v.is_finite() && **v <= 0.0)
            {
                return Err(Error::NonPositiveLog {
                    mnemonic: mnemonic.to_string(),
                    index,
                    value,
                });
            }
        }
        let base: Vec<f64> = if self.uses_log() {
            series.iter().map(|v| v.ln()).collect()
        } else {
            series.to_vec()
        };
        let out = match self {
            Tcode::Level | Tcode::Log => base,
            Tcode::Diff | Tcode::LogDiff => diff(&base),
            Tcode::Diff2 | Tcode::LogDiff2 => diff(&diff(&base)),
            Tcode::PctChangeDiff => {
                let mut growth = vec![f64::NAN; base.len()];
                for t in 1..base.len() {
                    growth[t] = base[t] / base[t - 1] - 1.0;
                }
                diff(&growth)
            }
        };
        Ok(out)
    }

    /// Transform and drop the undefined head, as in the usual FRED-QD workflow.
    pub fn apply(self, mnemonic: &str, series: &[f64]) -> Result<Vec<f64>> {
        if series.len() < self.depth() + 1 {
            return Err(Error::SeriesTooShort {
                mnemonic: mnemonic.to_string(),
                needed: self.depth() + 1,
                have: series.len(),
            });
        }
        let mut out = self.apply_aligned(mnemonic, series)?;
        out.drain(..self.depth());
        Ok(out)
    }

    /// Rebuild levels from transformed values and the first `depth()` raw levels.
    ///
    /// For `Level`/`Log` the `initial` slice is ignored.
    pub fn invert(self, transformed: &[f64], initial: &[f64]) -> Result<Vec<f64>> {
        let depth = self.depth();
        if initial.len() < depth {
            return Err(Error::Insufficient(format!(
                "inverse of tcode {} needs {} initial values",
                i64::from(self),
                depth
            )));
        }
        let log_init = || initial.iter().map(|v| v.ln()).collect::<Vec<_>>();
        let out = match self {
            Tcode::Level => transformed.to_vec(),
            Tcode::Log => transformed.iter().map(|v| v.exp()).collect(),
            Tcode::Diff => cumulate(initial[0], transformed),
            Tcode::Diff2 => cumulate2(&initial[..2], transformed),
            Tcode::LogDiff => cumulate(log_init()[0], transformed)
                .into_iter()
                .map(f64::exp)
                .collect(),
            Tcode::LogDiff2 => cumulate2(&log_init()[..2], transformed)
                .into_iter()
                .map(f64::exp)
                .collect(),
            Tcode::PctChangeDiff => {
                let mut levels = initial[..2].to_vec();
                let mut growth = initial[1] / initial[0] - 1.0;
                for &y in transformed {
                    growth += y;
                    let prev = *levels.last().unwrap();
                    levels.push(prev * (1.0 + growth));
                }
                levels
            }
        };
        Ok(out)
    }
}

fn diff(x: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    for t in 1..x.len() {
        out[t] = x[t] - x[t - 1];
    }
    out
}

fn cumulate(start: f64, increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(start);
    let mut level = start;
    for &d in increments {
        level += d;
        out.push(level);
    }
    out
}

fn cumulate2(start: &[f64], increments: &[f64]) -> Vec<f64> {
    let mut first_diff = start[1] - start[0];
    let mut out = start.to_vec();
    let mut level = start[1];
    for &d in increments {
        first_diff += d;
        level += first_diff;
        out.push(level);
    }
    out
}

/// Convenience wrapper taking the raw integer code.
pub fn apply_tcode(mnemonic: &str, series: &[f64], code: i64) -> Result<Vec<f64>> {
    let tcode = Tcode::try_from(code).map_err(|_| Error::UnknownTcode {
        mnemonic: mnemonic.to_string(),
        code,
    })?;
    tcode.apply(mnemonic, series)
}
