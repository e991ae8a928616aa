//! Permutation importance of variables for a hemisphere's component.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::estimate::{oob_components, Ensemble, MeanPolicy};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViScale {
    /// 100 · mean((h̃ − h)²) / Var(h): zero for an input without influence.
    Excess,
    /// The same minus 100.
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViConfig {
    pub reps: usize,
    /// Shuffle all columns of a variable with one permutation.
    pub joint: bool,
    pub scale: ViScale,
    pub seed: u64,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            reps: 30,
            joint: true,
            scale: ViScale::Excess,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViEntry {
    pub variable: String,
    pub vi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViReport {
    pub hemisphere: String,
    /// Sorted by decreasing importance.
    pub entries: Vec<ViEntry>,
    pub reps: usize,
}

impl ViReport {
    pub fn rank_of(&self, variable: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.variable == variable)
    }

    pub fn get(&self, variable: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.variable == variable).map(|e| e.vi)
    }

    /// `hemisphere,variable,vi,rank` (rank starts at 1).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["hemisphere", "variable", "vi", "rank"])?;
        for (i, e) in self.entries.iter().enumerate() {
            wr.write_record([
                self.hemisphere.clone(),
                e.variable.clone(),
                crate::estimate::fmt_num(e.vi),
                (i + 1).to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Top `n` entries as plot-ready JSON.
    pub fn top_json(&self, n: usize) -> serde_json::Value {
        serde_json::json!({
            "hemisphere": self.hemisphere,
            "reps": self.reps,
            "variables": self.entries.iter().take(n).map(|e| &e.variable).collect::<Vec<_>>(),
            "vi": self.entries.iter().take(n).map(|e| e.vi).collect::<Vec<_>>(),
        })
    }
}

fn oob_mean(ensemble: &Ensemble, features: &FeatureSet, hemisphere: &str) -> Result<Vec<f64>> {
    oob_components(ensemble, features)?.mean(hemisphere, MeanPolicy::PerT)
}

/// Columns of `variable` in hemisphere `hemisphere`.
fn columns_of(features: &FeatureSet, hemisphere: &str, variable: &str) -> Result<(usize, Vec<usize>)> {
    let k = features
        .hemispheres
        .iter()
        .position(|h| h.name == hemisphere)
        .ok_or_else(|| Error::Config(format!("no hemisphere `{hemisphere}`")))?;
    let cols = features.hemispheres[k]
        .variable_groups()
        .into_iter()
        .find(|(m, _)| m == variable)
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Config(format!("`{variable}` is not in hemisphere `{hemisphere}`")))?;
    Ok((k, cols))
}

/// Permutation importance of `variable` for the out-of-bag component of
/// `hemisphere`. The training rows of all the variable's columns are shuffled
/// (jointly by default), the ensemble is re-evaluated without retraining, and
/// the mean squared change of the component is expressed in percent of its
/// variance, averaged over `reps` shuffles.
pub fn variable_importance(
    ensemble: &Ensemble,
    features: &FeatureSet,
    hemisphere: &str,
    variable: &str,
    config: &ViConfig,
) -> Result<f64> {
    let base = oob_mean(ensemble, features, hemisphere)?;
    importance_with_base(ensemble, features, hemisphere, variable, config, &base)
}

/// FNV-1a; keeps shuffles tied to the variable name rather than its position.
fn name_key(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

fn importance_with_base(
    ensemble: &Ensemble,
    features: &FeatureSet,
    hemisphere: &str,
    variable: &str,
    config: &ViConfig,
    base: &[f64],
) -> Result<f64> {
    if config.reps == 0 {
        return Err(Error::Config("vi needs at least one repetition".into()));
    }
    let (k, cols) = columns_of(features, hemisphere, variable)?;
    let n = features.n_train;
    let rows: Vec<usize> = (0..n).filter(|&t| base[t].is_finite()).collect();
    let m = rows.iter().map(|&t| base[t]).sum::<f64>() / rows.len() as f64;
    let var = rows.iter().map(|&t| (base[t] - m).powi(2)).sum::<f64>() / rows.len() as f64;
    if !(var > 0.0) {
        return Err(Error::Numerical(format!("component `{hemisphere}` has zero variance")));
    }
    let mut total = 0.0;
    for rep in 0..config.reps {
        let mut rng = seed::rng_for(config.seed, &[name_key(variable), rep as u64]);
        let mut shuffled = features.clone();
        let mat = &mut shuffled.hemispheres[k].matrix;
        let original = features.hemispheres[k].matrix.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for (i, &c) in cols.iter().enumerate() {
            if i == 0 || !config.joint {
                perm.shuffle(&mut rng);
            }
            for (t, &p) in perm.iter().enumerate() {
                mat[[t, c]] = original[[p, c]];
            }
        }
        let moved = oob_mean(ensemble, &shuffled, hemisphere)?;
        let msd = rows.iter().map(|&t| (moved[t] - base[t]).powi(2)).sum::<f64>() / rows.len() as f64;
        total += msd / var;
    }
    let ratio = total / config.reps as f64;
    Ok(match config.scale {
        ViScale::Excess => 100.0 * ratio,
        ViScale::Offset => 100.0 * (ratio - 1.0),
    })
}

/// Importance of every variable of `hemisphere`, ranked.
pub fn vi_report(
    ensemble: &Ensemble,
    features: &FeatureSet,
    hemisphere: &str,
    config: &ViConfig,
) -> Result<ViReport> {
    let h = features
        .hemisphere(hemisphere)
        .ok_or_else(|| Error::Config(format!("no hemisphere `{hemisphere}`")))?;
    let vars: Vec<String> = h.variable_groups().into_iter().map(|(m, _)| m).collect();
    let base = oob_mean(ensemble, features, hemisphere)?;
    let values: Vec<f64> = vars
        .par_iter()
        .map(|v| importance_with_base(ensemble, features, hemisphere, v, config, &base))
        .collect::<Result<_>>()?;
    let mut entries: Vec<ViEntry> = vars
        .into_iter()
        .zip(values)
        .map(|(variable, vi)| ViEntry { variable, vi })
        .collect();
    entries.sort_by(|a, b| b.vi.total_cmp(&a.vi));
    Ok(ViReport {
        hemisphere: hemisphere.to_string(),
        entries,
        reps: config.reps,
    })
}
