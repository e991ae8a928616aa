//! Assemble per-hemisphere design matrices from a raw panel.
//!
//! Every hemisphere variable is transformed with its FRED-QD code, expanded into
//! four lags and three moving averages, standardised on the training range and
//! divided by the square root of the hemisphere's column count so that each
//! hemisphere enters with unit prior variance. Statistics are frozen at fit time
//! and reused for any later panel.

use std::collections::{BTreeMap, HashMap, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::marx::{marx_expand, FeatureKind, LagConvention};
use crate::data::panel::RawPanel;
use crate::data::transform::Tcode;
use crate::date::Quarter;
use crate::error::{Error, Result};

/// Mnemonic that refers to the (transformed, scaled) target series itself.
pub const TARGET_ALIAS: &str = "Y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Data-driven latent state.
    State,
    /// Trend-only hemisphere (e.g. long-run expectations).
    Coefficient,
    /// Inputs for the fast volatility net.
    Volatility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HemisphereSpec {
    pub name: String,
    #[serde(default)]
    pub mnemonics: Vec<String>,
    #[serde(default)]
    pub include_trend: bool,
    #[serde(default = "default_role")]
    pub role: Role,
}

fn default_role() -> Role {
    Role::State
}

impl HemisphereSpec {
    pub fn state(name: &str, mnemonics: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            mnemonics: mnemonics.iter().map(|s| s.to_string()).collect(),
            include_trend: false,
            role: Role::State,
        }
    }

    pub fn trend(name: &str) -> Self {
        Self {
            name: name.to_string(),
            mnemonics: Vec::new(),
            include_trend: true,
            role: Role::Coefficient,
        }
    }
}

/// Check hemisphere composition rules.
pub fn validate_hemispheres(specs: &[HemisphereSpec], allow_overlap: bool) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("no hemispheres defined".into()));
    }
    let mut names = HashSet::new();
    let mut seen: HashMap<&str, &str> = HashMap::new();
    for h in specs {
        if !names.insert(h.name.as_str()) {
            return Err(Error::Config(format!("duplicate hemisphere name `{}`", h.name)));
        }
        match h.role {
            Role::Coefficient => {
                if !h.mnemonics.is_empty() {
                    return Err(Error::Config(format!(
                        "trend-only hemisphere `{}` may not list mnemonics",
                        h.name
                    )));
                }
            }
            Role::State | Role::Volatility => {
                if h.mnemonics.is_empty() {
                    return Err(Error::Config(format!("hemisphere `{}` is empty", h.name)));
                }
            }
        }
        if h.role == Role::State && !allow_overlap {
            for m in &h.mnemonics {
                if let Some(other) = seen.insert(m, &h.name) {
                    return Err(Error::Config(format!(
                        "`{m}` appears in both `{other}` and `{}`",
                        h.name
                    )));
                }
            }
        }
    }
    if specs.iter().filter(|h| h.role == Role::Volatility).count() > 1 {
        return Err(Error::Config("at most one volatility hemisphere".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// y_{t+s}
    OneStep,
    /// (1/s) Σ_{i=1..s} y_{t+i}
    HorizonMean,
    /// Σ_{i=1..s} y_{t+i}
    HorizonSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub mnemonic: String,
    #[serde(default = "one")]
    pub horizon: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    /// Transform for the target; defaults to the panel's code.
    #[serde(default)]
    pub tcode: Option<Tcode>,
    /// Multiplier applied after the transform (400 gives annualised percent for Δlog).
    #[serde(default = "unit")]
    pub scale: f64,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_aggregation() -> Aggregation {
    Aggregation::OneStep
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("target horizon must be >= 1".into()));
        }
        if self.aggregation != Aggregation::OneStep && self.horizon < 2 {
            return Err(Error::Config(
                "horizon aggregation requires horizon > 1".into(),
            ));
        }
        if !self.scale.is_finite() || self.scale == 0.0 {
            return Err(Error::Config("target scale must be finite and non-zero".into()));
        }
        Ok(())
    }

    /// Transformed and scaled base series (π_t), aligned with the panel.
    pub fn base_series(&self, panel: &RawPanel) -> Result<Vec<f64>> {
        let raw = panel.series(&self.mnemonic)?;
        let tcode = match self.tcode {
            Some(t) => t,
            None => panel.tcode(&self.mnemonic)?,
        };
        Ok(tcode
            .apply_aligned(&self.mnemonic, raw)?
            .into_iter()
            .map(|v| v * self.scale)
            .collect())
    }

    /// Supervisor value attached to position t (NaN if not observed).
    pub fn aggregate(&self, base: &[f64], t: usize) -> f64 {
        let s = self.horizon;
        if t + s >= base.len() {
            return f64::NAN;
        }
        match self.aggregation {
            Aggregation::OneStep => base[t + s],
            Aggregation::HorizonSum => base[t + 1..=t + s].iter().sum(),
            Aggregation::HorizonMean => base[t + 1..=t + s].iter().sum::<f64>() / s as f64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub lag_convention: LagConvention,
    /// Per-mnemonic transform overrides.
    pub tcode_overrides: BTreeMap<String, Tcode>,
    /// First date admitted into any sample.
    pub sample_start: Option<Quarter>,
    pub allow_overlap: bool,
    pub expansion: Expansion,
}

/// Columns generated per variable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    /// Four lags and moving averages of order 2, 4 and 8.
    #[default]
    Marx,
    /// The first lag only (the current value under the default convention).
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureName {
    pub mnemonic: String,
    pub kind: FeatureKind,
}

impl std::fmt::Display for FeatureName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.mnemonic, self.kind.label())
    }
}

/// Frozen standardisation of one hemisphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Number of scaled columns; each is divided by its square root.
    pub cardinality: usize,
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub name: String,
    pub role: Role,
    /// Rows × columns; a trailing trend column is present when `has_trend`.
    pub matrix: Array2<f64>,
    pub names: Vec<FeatureName>,
    pub scaling: ScalingRecord,
    pub has_trend: bool,
}

impl FeatureMatrix {
    /// Wrap an already scaled matrix. Each non-trend column is treated as its
    /// own variable named `<name>.<j>`; a trend column, if any, must be last.
    pub fn from_matrix(name: &str, role: Role, matrix: Array2<f64>, has_trend: bool) -> Self {
        let k = matrix.ncols() - usize::from(has_trend);
        let mut names: Vec<FeatureName> = (0..k)
            .map(|j| FeatureName {
                mnemonic: format!("{name}.{j}"),
                kind: FeatureKind::Lag(0),
            })
            .collect();
        if has_trend {
            names.push(FeatureName {
                mnemonic: "trend".into(),
                kind: FeatureKind::Trend,
            });
        }
        Self {
            name: name.to_string(),
            role,
            matrix,
            names,
            scaling: ScalingRecord {
                means: vec![0.0; k],
                stds: vec![1.0; k],
                cardinality: k,
            },
            has_trend,
        }
    }

    pub fn width(&self) -> usize {
        self.matrix.ncols()
    }

    /// Column indices grouped by source variable, in first-appearance order.
    pub fn variable_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (j, n) in self.names.iter().enumerate() {
            if n.kind == FeatureKind::Trend {
                continue;
            }
            match out.iter_mut().find(|(m, _)| *m == n.mnemonic) {
                Some((_, cols)) => cols.push(j),
                None => out.push((n.mnemonic.clone(), vec![j])),
            }
        }
        out
    }
}

/// Features for a contiguous range of quarters.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub dates: Vec<Quarter>,
    pub hemispheres: Vec<FeatureMatrix>,
    /// Linear time index, 0 at the first and 1 at the last training row.
    pub trend: Vec<f64>,
    /// Supervisor aligned on `dates`; NaN where not yet observed.
    pub target: Vec<f64>,
    /// Leading rows forming the estimation sample.
    pub n_train: usize,
}

impl FeatureSet {
    /// Assemble from prepared hemisphere matrices over consecutive quarters
    /// starting at `start`; the trend runs from 0 to 1 over the first
    /// `n_train` rows.
    pub fn from_parts(
        start: Quarter,
        hemispheres: Vec<FeatureMatrix>,
        target: Vec<f64>,
        n_train: usize,
    ) -> Result<Self> {
        let n = target.len();
        if let Some(h) = hemispheres.iter().find(|h| h.matrix.nrows() != n) {
            return Err(Error::Dimension(format!(
                "hemisphere `{}` has {} rows, target has {n}",
                h.name,
                h.matrix.nrows()
            )));
        }
        if n_train < 2 || n_train > n {
            return Err(Error::Insufficient(format!("{n_train} training rows of {n}")));
        }
        let span = (n_train - 1) as f64;
        Ok(FeatureSet {
            dates: (0..n as i64).map(|k| start.offset(k)).collect(),
            hemispheres,
            trend: (0..n).map(|t| t as f64 / span).collect(),
            target,
            n_train,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn row_of(&self, date: Quarter) -> Option<usize> {
        self.dates.iter().position(|d| *d == date)
    }

    pub fn hemisphere(&self, name: &str) -> Option<&FeatureMatrix> {
        self.hemispheres.iter().find(|h| h.name == name)
    }

    /// Restrict to the given rows (in order).
    pub fn select_rows(&self, rows: &[usize]) -> FeatureSet {
        FeatureSet {
            dates: rows.iter().map(|&r| self.dates[r]).collect(),
            hemispheres: self
                .hemispheres
                .iter()
                .map(|h| FeatureMatrix {
                    matrix: h.matrix.select(ndarray::Axis(0), rows),
                    ..h.clone()
                })
                .collect(),
            trend: rows.iter().map(|&r| self.trend[r]).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            n_train: rows.iter().filter(|&&r| r < self.n_train).count(),
        }
    }
}

/// Fitted feature construction: frozen scaling plus trend anchoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub specs: Vec<HemisphereSpec>,
    pub target: TargetSpec,
    pub options: FeatureOptions,
    pub scaling: Vec<ScalingRecord>,
    pub trend_origin: Quarter,
    pub trend_span: f64,
    pub train_end: Quarter,
}

struct RawFeatures {
    dates: Vec<Quarter>,
    /// Per hemisphere: unscaled columns over all panel positions.
    columns: Vec<Vec<Vec<f64>>>,
    names: Vec<Vec<FeatureName>>,
    target: Vec<f64>,
}

fn raw_features(
    panel: &RawPanel,
    specs: &[HemisphereSpec],
    target: &TargetSpec,
    options: &FeatureOptions,
) -> Result<RawFeatures> {
    let base = target.base_series(panel)?;
    let mut columns = Vec::with_capacity(specs.len());
    let mut names = Vec::with_capacity(specs.len());
    for h in specs {
        let mut cols = Vec::new();
        let mut nm = Vec::new();
        for m in &h.mnemonics {
            let transformed = if m == TARGET_ALIAS {
                base.clone()
            } else {
                let raw = panel.series(m)?;
                let tcode = match options.tcode_overrides.get(m) {
                    Some(t) => *t,
                    None => panel.tcode(m)?,
                };
                tcode.apply_aligned(m, raw)?
            };
            let marx = marx_expand(&transformed, options.lag_convention).map_err(|_| {
                Error::SeriesTooShort {
                    mnemonic: m.clone(),
                    needed: 9,
                    have: transformed.len(),
                }
            })?;
            let keep = match options.expansion {
                Expansion::Marx => marx.kinds.len(),
                Expansion::Single => 1,
            };
            for (kind, col) in marx.kinds.into_iter().zip(marx.columns).take(keep) {
                nm.push(FeatureName {
                    mnemonic: m.clone(),
                    kind,
                });
                cols.push(col);
            }
        }
        columns.push(cols);
        names.push(nm);
    }
    let target_vals = (0..panel.len()).map(|t| target.aggregate(&base, t)).collect();
    Ok(RawFeatures {
        dates: panel.dates().to_vec(),
        columns,
        names,
        target: target_vals,
    })
}

/// Positions where every feature is defined, restricted to `start`.
fn complete_rows(raw: &RawFeatures, start: Option<Quarter>) -> Result<Vec<usize>> {
    let rows: Vec<usize> = (0..raw.dates.len())
        .filter(|&t| start.is_none_or(|s| raw.dates[t] >= s))
        .filter(|&t| {
            raw.columns
                .iter()
                .all(|cols| cols.iter().all(|c| c[t].is_finite()))
        })
        .collect();
    if let (Some(&a), Some(&b)) = (rows.first(), rows.last()) {
        if b - a + 1 != rows.len() {
            return Err(Error::Data(
                "features have interior missing values; rows are not contiguous".into(),
            ));
        }
    }
    Ok(rows)
}

impl FeaturePipeline {
    /// Fit scaling on rows whose supervisor is observed by `train_end`, and
    /// build features for every complete row of `panel`.
    pub fn fit(
        panel: &RawPanel,
        specs: &[HemisphereSpec],
        target: &TargetSpec,
        train_end: Quarter,
        options: &FeatureOptions,
    ) -> Result<(FeaturePipeline, FeatureSet)> {
        validate_hemispheres(specs, options.allow_overlap)?;
        target.validate()?;
        if panel.position(train_end).is_none() {
            return Err(Error::Data(format!(
                "train end {train_end} outside panel range"
            )));
        }
        let raw = raw_features(panel, specs, target, options)?;
        let rows = complete_rows(&raw, options.sample_start)?;
        let horizon = target.horizon as i64;
        let train_rows: Vec<usize> = rows
            .iter()
            .copied()
            .take_while(|&t| raw.dates[t].offset(horizon) <= train_end)
            .filter(|&t| raw.target[t].is_finite())
            .collect();
        if train_rows.len() < 3 {
            return Err(Error::Insufficient(format!(
                "only {} training rows end by {train_end}",
                train_rows.len()
            )));
        }
        if train_rows.len() != train_rows.last().unwrap() - train_rows[0] + 1 {
            return Err(Error::Data("target has interior gaps in training range".into()));
        }

        let mut scaling = Vec::with_capacity(specs.len());
        for (h, (cols, names)) in specs.iter().zip(raw.columns.iter().zip(&raw.names)) {
            let card = cols.len();
            let mut means = Vec::with_capacity(card);
            let mut stds = Vec::with_capacity(card);
            for (c, name) in cols.iter().zip(names) {
                let n = train_rows.len() as f64;
                let mean = train_rows.iter().map(|&t| c[t]).sum::<f64>() / n;
                let var = train_rows.iter().map(|&t| (c[t] - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                if !(std > 1e-12 * mean.abs().max(1.0)) {
                    return Err(Error::ConstantFeature(name.to_string()));
                }
                means.push(mean);
                stds.push(std);
            }
            if card == 0 && !h.include_trend {
                return Err(Error::EmptyHemisphere(h.name.clone()));
            }
            scaling.push(ScalingRecord {
                means,
                stds,
                cardinality: card,
            });
        }

        let pipeline = FeaturePipeline {
            specs: specs.to_vec(),
            target: target.clone(),
            options: options.clone(),
            scaling,
            trend_origin: raw.dates[train_rows[0]],
            trend_span: (train_rows.len() - 1) as f64,
            train_end,
        };
        let set = pipeline.assemble(&raw, &rows)?;
        Ok((pipeline, set))
    }

    /// Features for `panel` using the frozen statistics.
    pub fn transform(&self, panel: &RawPanel) -> Result<FeatureSet> {
        let raw = raw_features(panel, &self.specs, &self.target, &self.options)?;
        let rows = complete_rows(&raw, self.options.sample_start)?;
        self.assemble(&raw, &rows)
    }

    fn assemble(&self, raw: &RawFeatures, rows: &[usize]) -> Result<FeatureSet> {
        let horizon = self.target.horizon as i64;
        let n_train = rows
            .iter()
            .take_while(|&&t| raw.dates[t].offset(horizon) <= self.train_end)
            .filter(|&&t| raw.target[t].is_finite())
            .count();
        let trend: Vec<f64> = rows
            .iter()
            .map(|&t| self.trend_origin.quarters_until(raw.dates[t]) as f64 / self.trend_span)
            .collect();
        let mut hemispheres = Vec::with_capacity(self.specs.len());
        for (k, h) in self.specs.iter().enumerate() {
            let sc = &self.scaling[k];
            let cols = &raw.columns[k];
            let width = cols.len() + usize::from(h.include_trend);
            if width == 0 {
                return Err(Error::EmptyHemisphere(h.name.clone()));
            }
            let divisor = (sc.cardinality.max(1) as f64).sqrt();
            let mut m = Array2::zeros((rows.len(), width));
            for (i, &t) in rows.iter().enumerate() {
                for (j, c) in cols.iter().enumerate() {
                    m[[i, j]] = (c[t] - sc.means[j]) / sc.stds[j] / divisor;
                }
                if h.include_trend {
                    m[[i, width - 1]] = trend[i];
                }
            }
            let mut names = raw.names[k].clone();
            if h.include_trend {
                names.push(FeatureName {
                    mnemonic: "trend".into(),
                    kind: FeatureKind::Trend,
                });
            }
            hemispheres.push(FeatureMatrix {
                name: h.name.clone(),
                role: h.role,
                matrix: m,
                names,
                scaling: sc.clone(),
                has_trend: h.include_trend,
            });
        }
        Ok(FeatureSet {
            dates: rows.iter().map(|&t| raw.dates[t]).collect(),
            hemispheres,
            trend,
            target: rows.iter().map(|&t| raw.target[t]).collect(),
            n_train,
        })
    }
}

/// One-shot feature construction; see [`FeaturePipeline::fit`].
pub fn build_features(
    panel: &RawPanel,
    specs: &[HemisphereSpec],
    target: &TargetSpec,
    train_end: Quarter,
    options: &FeatureOptions,
) -> Result<FeatureSet> {
    FeaturePipeline::fit(panel, specs, target, train_end, options).map(|(_, set)| set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_panel(n: usize, vars: &[&str]) -> RawPanel {
        let start: Quarter = "1980Q1".parse().unwrap();
        let dates = (0..n as i64).map(|k| start.offset(k)).collect();
        let mut p = RawPanel::new(dates).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in vars {
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            p.insert(v, x, Tcode::Level).unwrap();
        }
        let mut level = 100.0f64;
        let cpi: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                level *= (0.01 + 0.002 * z).exp();
                level
            })
            .collect();
        p.insert("CPI", cpi, Tcode::LogDiff).unwrap();
        p
    }

    fn target() -> TargetSpec {
        TargetSpec {
            mnemonic: "CPI".into(),
            horizon: 1,
            aggregation: Aggregation::OneStep,
            tcode: None,
            scale: 400.0,
        }
    }

    #[test]
    fn single_variable_has_seven_columns_plus_trend() {
        let p = toy_panel(60, &["A"]);
        let end = p.dates()[50];
        let mut h = HemisphereSpec::state("g", &["A"]);
        let set = build_features(&p, &[h.clone()], &target(), end, &Default::default()).unwrap();
        assert_eq!(set.hemispheres[0].width(), 7);
        h.include_trend = true;
        let set = build_features(&p, &[h], &target(), end, &Default::default()).unwrap();
        assert_eq!(set.hemispheres[0].width(), 8);
    }

    #[test]
    fn scaled_variance_sums_to_one() {
        let p = toy_panel(120, &["A", "B", "C", "D"]);
        let end = p.dates()[100];
        let h = HemisphereSpec::state("g", &["A", "B", "C", "D"]);
        let set = build_features(&p, &[h], &target(), end, &Default::default()).unwrap();
        let m = &set.hemispheres[0].matrix;
        assert_eq!(m.ncols(), 28);
        let n = set.n_train;
        let mut total = 0.0;
        for j in 0..28 {
            let col: Vec<f64> = (0..n).map(|i| m[[i, j]]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var.sqrt() - 1.0 / 28f64.sqrt()).abs() < 1e-10);
            total += var;
        }
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn target_shift_and_horizon_mean() {
        let p = toy_panel(40, &["A"]);
        let base = target().base_series(&p).unwrap();
        let mut t4 = target();
        t4.horizon = 4;
        t4.aggregation = Aggregation::HorizonMean;
        let v = t4.aggregate(&base, 10);
        let expect = (base[11] + base[12] + base[13] + base[14]) / 4.0;
        assert!((v - expect).abs() < 1e-12);
        t4.aggregation = Aggregation::HorizonSum;
        assert!((t4.aggregate(&base, 10) - 4.0 * expect).abs() < 1e-10);
        assert!(t4.aggregate(&base, 37).is_nan());
        let mut bad = target();
        bad.aggregation = Aggregation::HorizonMean;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rows_align_and_stats_are_frozen() {
        let p = toy_panel(80, &["A", "B"]);
        let end = p.dates()[60];
        let hs = vec![
            HemisphereSpec::trend("lr"),
            HemisphereSpec::state("g", &["A"]),
            HemisphereSpec::state("c", &["B", "Y"]),
        ];
        let (pipe, set) =
            FeaturePipeline::fit(&p, &hs, &target(), end, &Default::default()).unwrap();
        // Δlog loses one row and ma8 another seven.
        assert_eq!(set.dates[0], p.dates()[8]);
        for h in &set.hemispheres {
            assert_eq!(h.matrix.nrows(), set.len());
            assert!(h.matrix.iter().all(|v| v.is_finite()));
        }
        assert_eq!(set.hemispheres[0].width(), 1);
        assert_eq!(*set.dates.get(set.n_train - 1).unwrap(), end.offset(-1));
        assert!((set.trend[0]).abs() < 1e-15);
        assert!((set.trend[set.n_train - 1] - 1.0).abs() < 1e-15);
        assert!(set.trend[set.len() - 1] > 1.0);
        // Transform on an extended panel reproduces the same rows.
        let again = pipe.transform(&p).unwrap();
        assert_eq!(again.hemispheres[1].matrix, set.hemispheres[1].matrix);
        // Training rows are unchanged by later data: truncation keeps values.
        let short = pipe.transform(&p.truncate(end)).unwrap();
        let k = short.len();
        assert_eq!(
            short.hemispheres[2].matrix,
            set.hemispheres[2].matrix.slice(ndarray::s![..k, ..])
        );
    }

    #[test]
    fn validation_rules() {
        let dup = vec![
            HemisphereSpec::state("g", &["A"]),
            HemisphereSpec::state("c", &["A"]),
        ];
        assert!(validate_hemispheres(&dup, false).is_err());
        assert!(validate_hemispheres(&dup, true).is_ok());
        let empty = vec![HemisphereSpec::state("g", &[])];
        assert!(validate_hemispheres(&empty, false).is_err());
        let mut coef = HemisphereSpec::trend("lr");
        coef.mnemonics.push("A".into());
        assert!(validate_hemispheres(&[coef], false).is_err());
    }

    #[test]
    fn missing_mnemonic_is_named() {
        let p = toy_panel(40, &["A"]);
        let hs = vec![HemisphereSpec::state("g", &["NOPE"])];
        let err = build_features(&p, &hs, &target(), p.dates()[30], &Default::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingMnemonic(ref m) if m == "NOPE"));
    }
}
