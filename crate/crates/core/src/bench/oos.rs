//! Pseudo-out-of-sample harness. Each forecaster only ever receives the panel
//! truncated at the origin, and every forecast reports the last date it used.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::models::{bench_ar4, bench_pc, bench_rolling_mean, Horizon, PcSpec};
use super::score::{rmse, ForecastRecord, SummaryRow};
use crate::data::{FeatureOptions, FeaturePipeline, HemisphereSpec, RawPanel, TargetSpec};
use crate::date::{Quarter, QuarterRange};
use crate::error::{Error, Result};
use crate::estimate::{estimate_ensemble, Ensemble, TrainConfig};
use crate::model::HnnArchitecture;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OosPlan {
    pub first_origin: Quarter,
    pub last_origin: Quarter,
    pub estimation_start: Option<Quarter>,
    /// Quarters between network re-estimations.
    pub network_cadence: usize,
    pub benchmark_cadence: usize,
    /// Origins left out of the `excl` scores.
    pub exclusions: Vec<QuarterRange>,
    /// Model whose RMSE is the ratio denominator.
    pub numeraire: String,
}

impl Default for OosPlan {
    fn default() -> Self {
        let q = |y, k| Quarter::new(y, k).expect("valid quarter");
        Self {
            first_origin: q(2008, 1),
            last_origin: q(2021, 3),
            estimation_start: Some(q(1961, 3)),
            network_cadence: 4,
            benchmark_cadence: 1,
            exclusions: Self::default_exclusions(1),
            numeraire: "ar4".into(),
        }
    }
}

impl OosPlan {
    /// 2020 for one-step targets; through 2021Q2 for longer horizons.
    pub fn default_exclusions(horizon: usize) -> Vec<QuarterRange> {
        let end = if horizon >= 4 { Quarter::new(2021, 2) } else { Quarter::new(2020, 4) };
        vec![QuarterRange {
            start: Quarter::new(2020, 1).expect("valid quarter"),
            end: end.expect("valid quarter"),
        }]
    }

    pub fn origins(&self) -> Vec<Quarter> {
        QuarterRange { start: self.first_origin, end: self.last_origin }.iter().collect()
    }

    pub fn validate(&self, panel: &RawPanel) -> Result<()> {
        if self.first_origin > self.last_origin {
            return Err(Error::Config(format!(
                "empty forecast plan: first origin {} is after last origin {}",
                self.first_origin, self.last_origin
            )));
        }
        if self.network_cadence == 0 || self.benchmark_cadence == 0 {
            return Err(Error::Config("re-estimation cadence must be at least 1".into()));
        }
        for q in [self.first_origin, self.last_origin] {
            if panel.position(q).is_none() {
                return Err(Error::Config(format!("origin {q} is outside the data range")));
            }
        }
        if let Some(s) = self.estimation_start {
            if s >= self.first_origin {
                return Err(Error::Config("estimation start must precede the first origin".into()));
            }
        }
        Ok(())
    }
}

/// What a forecaster sees at one origin.
pub struct OosContext<'a> {
    /// Panel truncated at `origin`.
    pub panel: &'a RawPanel,
    pub target: &'a TargetSpec,
    pub origin: Quarter,
    pub estimation_start: Option<Quarter>,
}

impl OosContext<'_> {
    pub fn horizon(&self) -> Horizon {
        Horizon { steps: self.target.horizon, aggregation: self.target.aggregation }
    }

    /// Transformed target series from the estimation start on, with its dates.
    /// Leading missing values from differencing are dropped.
    pub fn history(&self) -> Result<(Vec<Quarter>, Vec<f64>)> {
        let base = self.target.base_series(self.panel)?;
        let dates = self.panel.dates();
        let start = (0..base.len())
            .find(|&t| self.estimation_start.is_none_or(|s| dates[t] >= s) && base[t].is_finite())
            .ok_or_else(|| Error::Insufficient("no target history before the origin".into()))?;
        Ok((dates[start..].to_vec(), base[start..].to_vec()))
    }

    /// A regressor transformed with its panel code, aligned with `history`.
    pub fn regressor(&self, mnemonic: &str, from: Quarter) -> Result<Vec<f64>> {
        let raw = self.panel.series(mnemonic)?;
        let v = self.panel.tcode(mnemonic)?.apply_aligned(mnemonic, raw)?;
        let start = self.panel.position(from).expect("history date is in the panel");
        Ok(v[start..].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub value: f64,
    pub volatility: Option<f64>,
    /// Latest observation the forecast depends on.
    pub last_input: Quarter,
}

pub trait Forecaster: Sync {
    fn id(&self) -> String;

    /// Networks follow the plan's network cadence, everything else the benchmark cadence.
    fn is_network(&self) -> bool {
        false
    }

    /// Estimate at the first origin of a re-estimation block.
    fn fit(&self, ctx: &OosContext) -> Result<Box<dyn Fitted + '_>>;
}

pub trait Fitted: Send + Sync {
    fn predict(&self, ctx: &OosContext) -> Result<Forecast>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Benchmark {
    Ar4,
    RollingMean { window: usize },
    /// Phillips curve on inflation and gap lags; with extras this is PC+.
    Pc {
        gap: String,
        #[serde(default)]
        extras: Vec<String>,
        #[serde(default)]
        spec: PcSpec,
    },
}

impl Forecaster for Benchmark {
    fn id(&self) -> String {
        match self {
            Benchmark::Ar4 => "ar4".into(),
            Benchmark::RollingMean { window } => format!("mean{window}"),
            Benchmark::Pc { extras, .. } if extras.is_empty() => "pc".into(),
            Benchmark::Pc { .. } => "pc_plus".into(),
        }
    }

    fn fit(&self, _: &OosContext) -> Result<Box<dyn Fitted + '_>> {
        Ok(Box::new(self.clone()))
    }
}

impl Fitted for Benchmark {
    fn predict(&self, ctx: &OosContext) -> Result<Forecast> {
        let (dates, history) = ctx.history()?;
        let value = match self {
            Benchmark::Ar4 => bench_ar4(&history, ctx.horizon())?,
            Benchmark::RollingMean { window } => bench_rolling_mean(&history, *window)?,
            Benchmark::Pc { gap, extras, spec } => {
                let g = ctx.regressor(gap, dates[0])?;
                let ex = extras
                    .iter()
                    .map(|m| ctx.regressor(m, dates[0]))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[f64]> = ex.iter().map(Vec::as_slice).collect();
                bench_pc(&history, &g, &refs, ctx.horizon(), spec)?.forecast
            }
        };
        Ok(Forecast { value, volatility: None, last_input: *dates.last().expect("non-empty history") })
    }
}

/// Forecasts read from a file, keyed by origin.
pub struct External {
    pub id: String,
    pub values: BTreeMap<Quarter, f64>,
}

impl Forecaster for External {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn fit(&self, _: &OosContext) -> Result<Box<dyn Fitted + '_>> {
        Ok(Box::new(ExternalFitted(&self.values, self.id.clone())))
    }
}

struct ExternalFitted<'a>(&'a BTreeMap<Quarter, f64>, String);

impl Fitted for ExternalFitted<'_> {
    fn predict(&self, ctx: &OosContext) -> Result<Forecast> {
        let value = *self
            .0
            .get(&ctx.origin)
            .ok_or_else(|| Error::Data(format!("`{}` has no forecast for {}", self.1, ctx.origin)))?;
        Ok(Forecast { value, volatility: None, last_input: ctx.origin })
    }
}

/// HNN ensemble re-estimated on an expanding window.
#[derive(Debug, Clone)]
pub struct HnnForecaster {
    pub id: String,
    pub arch: HnnArchitecture,
    pub train: TrainConfig,
    pub specs: Vec<HemisphereSpec>,
    pub options: FeatureOptions,
}

struct HnnFitted {
    pipeline: FeaturePipeline,
    ensemble: Ensemble,
}

impl Forecaster for HnnForecaster {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn is_network(&self) -> bool {
        true
    }

    fn fit(&self, ctx: &OosContext) -> Result<Box<dyn Fitted + '_>> {
        let mut options = self.options.clone();
        if options.sample_start.is_none() {
            options.sample_start = ctx.estimation_start;
        }
        let (pipeline, set) = FeaturePipeline::fit(ctx.panel, &self.specs, ctx.target, ctx.origin, &options)?;
        let mut train = self.train.clone();
        train.seed = seed::derive(train.seed, &[ctx.origin.year() as u64, ctx.origin.quarter() as u64]);
        let ensemble = estimate_ensemble(&self.arch, &set, &train, train.ensemble_size, train.block_len)?;
        Ok(Box::new(HnnFitted { pipeline, ensemble }))
    }
}

impl Fitted for HnnFitted {
    fn predict(&self, ctx: &OosContext) -> Result<Forecast> {
        let set = self.pipeline.transform(ctx.panel)?;
        let row = set
            .row_of(ctx.origin)
            .ok_or_else(|| Error::Data(format!("no complete feature row at origin {}", ctx.origin)))?;
        let last_input = *set.dates.last().expect("row exists");
        let one = set.select_rows(&[row]);
        let outs = self.ensemble.evaluate(&one)?;
        let b = outs.len() as f64;
        let value = outs.iter().map(|o| o.prediction[0]).sum::<f64>() / b;
        let volatility = outs
            .iter()
            .map(|o| o.volatility.as_ref().map(|v| v.total[0]))
            .sum::<Option<f64>>()
            .map(|s| s / b);
        Ok(Forecast { value, volatility, last_input })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosResult {
    pub records: Vec<ForecastRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Forecast every origin of `plan` with every model, then score. Origins are
/// processed in parallel by re-estimation block.
pub fn run_oos(
    plan: &OosPlan,
    target: &TargetSpec,
    models: &[&dyn Forecaster],
    panel: &RawPanel,
) -> Result<OosResult> {
    plan.validate(panel)?;
    target.validate()?;
    if models.is_empty() {
        return Err(Error::Config("no forecasting models configured".into()));
    }
    let origins = plan.origins();
    let horizon = Horizon { steps: target.horizon, aggregation: target.aggregation };
    let base = target.base_series(panel)?;

    let mut jobs: Vec<(usize, &[Quarter])> = Vec::new();
    for (m, model) in models.iter().enumerate() {
        let cadence = if model.is_network() { plan.network_cadence } else { plan.benchmark_cadence };
        jobs.extend(origins.chunks(cadence).map(|block| (m, block)));
    }

    let blocks: Vec<Vec<ForecastRecord>> = jobs
        .par_iter()
        .map(|&(m, block)| -> Result<Vec<ForecastRecord>> {
            let model = models[m];
            let id = model.id();
            let fit_panel = panel.truncate(block[0]);
            let fitted = model.fit(&OosContext {
                panel: &fit_panel,
                target,
                origin: block[0],
                estimation_start: plan.estimation_start,
            })?;
            block
                .iter()
                .map(|&origin| {
                    let view = panel.truncate(origin);
                    let f = fitted.predict(&OosContext {
                        panel: &view,
                        target,
                        origin,
                        estimation_start: plan.estimation_start,
                    })?;
                    if f.last_input > origin {
                        return Err(Error::Leakage(format!(
                            "`{id}` used data from {} for origin {origin}",
                            f.last_input
                        )));
                    }
                    if !f.value.is_finite() {
                        return Err(Error::Numerical(format!("`{id}` produced a non-finite forecast at {origin}")));
                    }
                    let pos = panel.position(origin).expect("validated origin");
                    Ok(ForecastRecord {
                        origin,
                        model: id.clone(),
                        horizon: target.horizon,
                        forecast: f.value,
                        realized: horizon.target_at(&base, pos),
                        volatility: f.volatility,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let records: Vec<ForecastRecord> = blocks.into_iter().flatten().collect();

    let numeraire = models.iter().any(|m| m.id() == plan.numeraire).then_some(plan.numeraire.as_str());
    let mut summary = Vec::new();
    for model in models {
        for (sample, ex) in [("all", &[][..]), ("excl", &plan.exclusions[..])] {
            match rmse(&records, &model.id(), ex, numeraire) {
                Ok(score) => summary.push(SummaryRow {
                    target: target.mnemonic.clone(),
                    horizon: target.horizon,
                    sample: sample.into(),
                    score,
                }),
                Err(Error::Insufficient(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(OosResult { records, summary })
}
