//! End-to-end runs driven by a [`RunConfig`], writing plot-ready artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::analysis::{pca_extract, vi_column_weights, vi_report, PcaResult, ViReport};
use crate::bench::{read_external_csv, run_oos, write_records_csv, write_summary_csv, External, Forecaster, HnnForecaster, OosResult};
use crate::config::{sha256_hex, Identification, RunConfig};
use crate::data::{FeaturePipeline, FeatureSet, RawPanel};
use crate::date::Quarter;
use crate::error::{Error, Result};
use crate::estimate::{estimate_ensemble, fmt_num, oob_components, ComponentPaths, DrawLog, Ensemble, MeanPolicy, SeriesKind};

/// Config, data and features ready for estimation.
pub struct Prepared {
    pub config: RunConfig,
    pub config_hash: String,
    pub panel: RawPanel,
    pub data_fingerprint: String,
    pub pipeline: FeaturePipeline,
    pub features: FeatureSet,
    /// Directory that relative paths in the config refer to.
    pub base: PathBuf,
}

/// Load the config file, apply overrides and build features.
pub fn prepare_file(path: &Path, seed: Option<u64>) -> Result<Prepared> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = RunConfig::from_toml(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    prepare(config, &base)
}

pub fn prepare(config: RunConfig, base: &Path) -> Result<Prepared> {
    config.validate()?;
    let config_hash = sha256_hex(config.to_toml()?.as_bytes());
    let panel = config.load_panel(base)?;
    let mut bytes = Vec::new();
    panel.write_csv(&mut bytes)?;
    let data_fingerprint = sha256_hex(&bytes);
    let train_end = match config.data.train_end {
        Some(q) => q,
        None => *panel.dates().last().ok_or_else(|| Error::Data("empty panel".into()))?,
    };
    let (pipeline, features) =
        FeaturePipeline::fit(&panel, &config.hemispheres, &config.target, train_end, &config.features)?;
    Ok(Prepared {
        config,
        config_hash,
        panel,
        data_fingerprint,
        pipeline,
        features,
        base: base.to_path_buf(),
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings(pub BTreeMap<String, f64>);

impl Timings {
    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(label.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

pub struct Estimate {
    pub ensemble: Ensemble,
    /// Out-of-bag paths as estimated.
    pub raw: ComponentPaths,
    /// After identification and centring.
    pub report: ComponentPaths,
}

/// Inference ensemble and its out-of-bag component paths.
pub fn estimate(prep: &Prepared) -> Result<Estimate> {
    let cfg = &prep.config;
    let train = cfg.train_config();
    let ensemble = estimate_ensemble(
        &cfg.model,
        &prep.features,
        &train,
        train.inference_size,
        train.bootstrap_block_len,
    )?;
    let raw = oob_components(&ensemble, &prep.features)?;
    let report = postprocess(prep, &raw)?;
    Ok(Estimate { ensemble, raw, report })
}

/// Standard deviation over the training rows of a panel series, transformed
/// with its code (or the configured override).
pub fn training_std(prep: &Prepared, mnemonic: &str) -> Result<f64> {
    let raw = prep.panel.series(mnemonic)?;
    let code = match prep.config.features.tcode_overrides.get(mnemonic) {
        Some(c) => *c,
        None => prep.panel.tcode(mnemonic)?,
    };
    let v = code.apply_aligned(mnemonic, raw)?;
    let vals: Vec<f64> = prep.features.dates[..prep.features.n_train]
        .iter()
        .map(|d| v[prep.panel.position(*d).expect("feature date in panel")])
        .filter(|x| x.is_finite())
        .collect();
    if vals.len() < 2 {
        return Err(Error::Insufficient(format!("`{mnemonic}` is missing over the training rows")));
    }
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    Ok((vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Apply the configured identification and centring.
pub fn postprocess(prep: &Prepared, raw: &ComponentPaths) -> Result<ComponentPaths> {
    let mut out = raw.clone();
    if let Some(id) = &prep.config.output.identify {
        let sd = match id {
            Identification::Std(s) => *s,
            Identification::Like(m) => training_std(prep, m)?,
        };
        out = out.identify_factorization(sd)?;
    }
    if prep.config.output.center {
        out = out.center_contributions()?;
    }
    Ok(out)
}

/// Everything needed to reproduce a run on the same machine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub command: String,
    pub software_version: String,
    pub config_hash: String,
    pub data_fingerprint: String,
    pub seed: u64,
    pub train_seed: u64,
    pub threads: usize,
    pub timings: Timings,
    pub draws: Vec<DrawLog>,
    /// SHA-256 of each written file, by name.
    pub outputs: BTreeMap<String, String>,
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(prep: &Prepared, command: &str) -> Self {
        Self {
            name: prep.config.name.clone(),
            command: command.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: prep.config_hash.clone(),
            data_fingerprint: prep.data_fingerprint.clone(),
            seed: prep.config.seed,
            train_seed: prep.config.train_config().seed,
            threads: rayon::current_num_threads(),
            timings: Timings::default(),
            draws: Vec::new(),
            outputs: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    /// Write `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Collects output files and their hashes.
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, &buf)?;
        self.files.insert(name.to_string(), sha256_hex(&buf));
        Ok(path)
    }
}

/// Wide CSV of contribution shares: `date,<component>...`.
pub fn write_shares_csv(paths: &ComponentPaths, policy: MeanPolicy, w: &mut Vec<u8>) -> Result<()> {
    let shares = crate::analysis::contribution_shares(paths, policy)?;
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(shares.iter().map(|(n, _)| n.clone()));
    wr.write_record(&header)?;
    for (t, d) in paths.dates.iter().enumerate() {
        let mut row = vec![d.to_string()];
        row.extend(shares.iter().map(|(_, v)| fmt_num(v[t])));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Write the estimate artifacts: tidy components with bands, shares, draws,
/// weights and the manifest.
pub fn write_estimate(prep: &Prepared, est: &Estimate, art: &mut Artifacts, manifest: &mut RunManifest) -> Result<()> {
    let out = &prep.config.output;
    art.write("components.csv", |w| est.report.write_csv(w, out.level, out.mean))?;
    if est.report.series.iter().filter(|s| s.kind == SeriesKind::Contribution).count() > 1 {
        art.write("shares.csv", |w| write_shares_csv(&est.report, out.mean, w))?;
    }
    if out.save_draws {
        art.write("paths.json", |w| Ok(serde_json::to_writer(w, &est.raw)?))?;
    }
    if out.save_weights {
        for m in &est.ensemble.members {
            art.write(&format!("weights/member_{:04}.hnnm", m.draw), |w| m.model.write_binary(w))?;
        }
    }
    manifest.draws = est.ensemble.log.clone();
    manifest.details = serde_json::json!({
        "components": est.report.manifest(out.level, out.mean),
        "members": est.ensemble.len(),
        "retries": est.ensemble.retries(),
        "train_rows": prep.features.n_train,
        "first_date": prep.features.dates.first().map(Quarter::to_string),
        "last_date": prep.features.dates.last().map(Quarter::to_string),
    });
    Ok(())
}

/// Variable importance for the configured hemispheres.
pub fn variable_importance(prep: &Prepared, ensemble: &Ensemble, hemispheres: &[String]) -> Result<Vec<ViReport>> {
    let cfg = prep.config.vi.vi_config(prep.config.vi_seed());
    hemispheres
        .iter()
        .map(|h| vi_report(ensemble, &prep.features, h, &cfg))
        .collect()
}

pub fn vi_hemispheres(config: &RunConfig) -> Vec<String> {
    if config.vi.hemispheres.is_empty() {
        config.state_hemispheres()
    } else {
        config.vi.hemispheres.clone()
    }
}

pub fn write_vi(reports: &[ViReport], top: usize, art: &mut Artifacts) -> Result<()> {
    for r in reports {
        art.write(&format!("vi_{}.csv", r.hemisphere), |w| r.write_csv(w))?;
    }
    let json: Vec<_> = reports.iter().map(|r| r.top_json(top)).collect();
    art.write("vi.json", |w| Ok(serde_json::to_writer_pretty(w, &json)?))?;
    Ok(())
}

/// Pseudo-out-of-sample exercise with the configured benchmarks.
pub fn forecast(prep: &Prepared) -> Result<OosResult> {
    let cfg = &prep.config;
    let externals = cfg
        .forecast
        .external
        .iter()
        .map(|e| {
            let file = fs::File::open(prep.base.join(&e.path))?;
            Ok(External {
                id: e.id.clone(),
                values: read_external_csv(file)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let network = HnnForecaster {
        id: cfg.forecast.network_id.clone(),
        arch: cfg.model.clone(),
        train: crate::estimate::TrainConfig {
            seed: cfg.forecast_seed(),
            ..cfg.train.clone()
        },
        specs: cfg.hemispheres.clone(),
        options: cfg.features.clone(),
    };
    let mut models: Vec<&dyn Forecaster> = Vec::new();
    if cfg.forecast.network {
        models.push(&network);
    }
    models.extend(cfg.forecast.benchmarks.iter().map(|b| b as &dyn Forecaster));
    models.extend(externals.iter().map(|e| e as &dyn Forecaster));
    run_oos(&cfg.forecast.plan, &cfg.target, &models, &prep.panel)
}

pub fn write_forecast(res: &OosResult, art: &mut Artifacts) -> Result<()> {
    art.write("forecasts.csv", |w| write_records_csv(&res.records, w))?;
    art.write("rmse.csv", |w| write_summary_csv(&res.summary, w))?;
    Ok(())
}

/// One extracted path of the ablation comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub hemisphere: String,
    pub method: String,
    pub values: Vec<f64>,
    /// Share of variance of the first component (None for the network path).
    pub explained: Option<f64>,
}

fn finite_reference(v: &[f64]) -> Vec<f64> {
    let fin: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    let m = if fin.is_empty() { 0.0 } else { fin.iter().sum::<f64>() / fin.len() as f64 };
    v.iter().map(|x| if x.is_finite() { *x } else { m }).collect()
}

fn columns(features: &FeatureSet, pick: impl Fn(&crate::data::FeatureMatrix) -> Vec<usize>) -> Array2<f64> {
    let blocks: Vec<Array2<f64>> = features
        .hemispheres
        .iter()
        .filter(|h| !h.variable_groups().is_empty())
        .map(|h| h.matrix.select(ndarray::Axis(1), &pick(h)))
        .collect();
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(ndarray::Axis(1), &views).expect("rows agree")
}

/// Network path of each hemisphere next to principal-component extractions
/// from the same inputs. The network path is the identified state for
/// factorized models and the contribution otherwise.
pub fn ablation(prep: &Prepared, est: &Estimate, reports: &[ViReport]) -> Result<Vec<Extraction>> {
    let cfg = &prep.config;
    let policy = cfg.output.mean;
    let hemis = if cfg.ablation.hemispheres.is_empty() {
        cfg.state_hemispheres()
    } else {
        cfg.ablation.hemispheres.clone()
    };
    let mut out = Vec::new();
    for h in &hemis {
        let state = format!("{h}.state");
        let name = if est.report.get(&state).is_some() { state } else { h.clone() };
        let hnn = est.report.mean(&name, policy)?;
        let reference = finite_reference(&hnn);
        let fm = prep
            .features
            .hemisphere(h)
            .ok_or_else(|| Error::Config(format!("no hemisphere `{h}`")))?;
        let cols: Vec<usize> = fm.variable_groups().into_iter().flat_map(|(_, c)| c).collect();
        let x = fm.matrix.select(ndarray::Axis(1), &cols);
        let push = |out: &mut Vec<Extraction>, method: &str, r: PcaResult| {
            out.push(Extraction {
                hemisphere: h.clone(),
                method: method.into(),
                values: r.scores,
                explained: Some(r.explained),
            })
        };
        out.push(Extraction {
            hemisphere: h.clone(),
            method: "hnn".into(),
            values: hnn,
            explained: None,
        });
        push(&mut out, "pca", pca_extract(x.view(), None, Some(&reference))?);
        if cfg.ablation.weighted {
            let report = reports
                .iter()
                .find(|r| &r.hemisphere == h)
                .ok_or_else(|| Error::Config(format!("no importance report for `{h}`")))?;
            let all = vi_column_weights(fm, report);
            let w: Vec<f64> = cols.iter().map(|&c| all[c]).collect();
            push(&mut out, "weighted_pca", pca_extract(x.view(), Some(&w), Some(&reference))?);
        }
        if cfg.ablation.all {
            let current = columns(&prep.features, |m| m.variable_groups().into_iter().map(|(_, c)| c[0]).collect());
            push(&mut out, "pca_all", pca_extract(current.view(), None, Some(&reference))?);
            let every = columns(&prep.features, |m| m.variable_groups().into_iter().flat_map(|(_, c)| c).collect());
            push(&mut out, "pca_all_plus", pca_extract(every.view(), None, Some(&reference))?);
        }
    }
    Ok(out)
}

pub fn write_ablation(dates: &[Quarter], ex: &[Extraction], art: &mut Artifacts) -> Result<()> {
    art.write("ablation.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["date", "hemisphere", "method", "value"])?;
        for e in ex {
            for (d, v) in dates.iter().zip(&e.values) {
                wr.write_record([d.to_string(), e.hemisphere.clone(), e.method.clone(), fmt_num(*v)])?;
            }
        }
        wr.flush()?;
        Ok(())
    })?;
    let summary: Vec<_> = ex
        .iter()
        .map(|e| serde_json::json!({"hemisphere": e.hemisphere, "method": e.method, "explained": e.explained}))
        .collect();
    art.write("ablation.json", |w| Ok(serde_json::to_writer_pretty(w, &summary)?))?;
    Ok(())
}

/// Load saved out-of-bag paths.
pub fn read_paths(path: &Path) -> Result<ComponentPaths> {
    let file = fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Tidy rows as JSON: one object per series with aligned arrays.
pub fn tidy_json(paths: &ComponentPaths, level: f64, policy: MeanPolicy) -> Result<serde_json::Value> {
    let counts = paths.counts();
    let mut series = Vec::new();
    for s in &paths.series {
        let mean = paths.mean(&s.name, policy)?;
        let band = paths.band(&s.name, level)?;
        let num = |v: &[f64]| v.iter().map(|x| x.is_finite().then_some(*x)).collect::<Vec<_>>();
        series.push(serde_json::json!({
            "name": s.name,
            "kind": s.kind,
            "mean": num(&mean),
            "lower": num(&band.lower),
            "upper": num(&band.upper),
        }));
    }
    Ok(serde_json::json!({
        "dates": paths.dates.iter().map(Quarter::to_string).collect::<Vec<_>>(),
        "n_draws": counts,
        "level": level,
        "series": series,
    }))
}

/// Write `value` as pretty JSON to a file.
pub fn write_json_file(path: &Path, value: &impl Serialize) -> Result<()> {
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}
