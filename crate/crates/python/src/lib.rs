use std::fs;
use std::path::{Path, PathBuf};

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use hnn_core::config::{Dgp, RunConfig, SyntheticData, SHIPPED};
use hnn_core::estimate::{with_threads, MeanPolicy};
use hnn_core::run::{self, Prepared};
use hnn_core::{Error, ErrorCategory};

create_exception!(hnn, HnnError, PyException);
create_exception!(hnn, ConfigError, HnnError);
create_exception!(hnn, DataError, HnnError);
create_exception!(hnn, NumericalError, HnnError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.category() {
        ErrorCategory::Config => ConfigError::new_err(msg),
        ErrorCategory::Data | ErrorCategory::Io => DataError::new_err(msg),
        ErrorCategory::Numerical => NumericalError::new_err(msg),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (_, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn prepare(config: &str, seed: Option<u64>) -> hnn_core::Result<Prepared> {
    run::prepare_file(Path::new(config), seed)
}

/// Runs `f` on a pool of `threads` workers with the GIL released.
fn compute<T: Send>(py: Python<'_>, threads: usize, f: impl FnOnce() -> hnn_core::Result<T> + Send) -> PyResult<T> {
    py.detach(|| with_threads(threads, f).and_then(|r| r)).map_err(py_err)
}

/// Package version.
#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Names of the bundled configurations.
#[pyfunction]
fn shipped_configs() -> Vec<&'static str> {
    SHIPPED.iter().map(|(n, _)| *n).collect()
}

/// TOML text of a bundled configuration.
#[pyfunction]
fn shipped_config(name: &str) -> PyResult<&'static str> {
    SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| ConfigError::new_err(format!("no shipped config `{name}`")))
}

/// Parses and validates a TOML configuration; returns the mnemonics it needs.
#[pyfunction]
fn check_config(text: &str) -> PyResult<Vec<String>> {
    let c = RunConfig::from_toml(text).map_err(py_err)?;
    Ok(c.mnemonics())
}

/// Writes a synthetic panel in FRED-QD layout and returns its row count.
#[pyfunction]
#[pyo3(signature = (path, dgp = "demo", n = 260, seed = 1))]
fn simulate(path: PathBuf, dgp: &str, n: usize, seed: u64) -> PyResult<usize> {
    let dgp = match dgp {
        "demo" => Dgp::Demo,
        "latent_state" => Dgp::LatentState,
        "two_regime_volatility" => Dgp::TwoRegimeVolatility,
        "planted_driver" => Dgp::PlantedDriver,
        other => return Err(ConfigError::new_err(format!("unknown dgp `{other}`"))),
    };
    let panel = SyntheticData { dgp, n, seed }.panel().map_err(py_err)?;
    let f = fs::File::create(&path).map_err(|e| py_err(e.into()))?;
    panel.write_csv(f).map_err(py_err)?;
    Ok(panel.len())
}

/// Estimates the configured model. Returns dates, draw counts and, per series,
/// the mean path with its credible band. With `out`, also writes the usual
/// run artifacts there.
#[pyfunction]
#[pyo3(signature = (config, seed = None, threads = 0, out = None))]
fn estimate<'py>(
    py: Python<'py>,
    config: &str,
    seed: Option<u64>,
    threads: usize,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let v = compute(py, threads, || {
        let prep = prepare(config, seed)?;
        let est = run::estimate(&prep)?;
        if let Some(dir) = &out {
            let mut manifest = run::RunManifest::new(&prep, "estimate");
            let mut art = run::Artifacts::new(dir)?;
            run::write_estimate(&prep, &est, &mut art, &mut manifest)?;
            manifest.outputs = art.files;
            manifest.write(dir)?;
        }
        let o = &prep.config.output;
        run::tidy_json(&est.report, o.level, o.mean)
    })?;
    to_py(py, &v)
}

/// Pseudo-out-of-sample forecasts: `{"records": [...], "summary": [...]}`.
#[pyfunction]
#[pyo3(signature = (config, seed = None, threads = 0))]
fn forecast<'py>(py: Python<'py>, config: &str, seed: Option<u64>, threads: usize) -> PyResult<Bound<'py, PyAny>> {
    let v = compute(py, threads, || {
        let prep = prepare(config, seed)?;
        let res = run::forecast(&prep)?;
        Ok(serde_json::json!({ "records": res.records, "summary": res.summary }))
    })?;
    to_py(py, &v)
}

/// Variable importance per hemisphere, ranked: `{hemisphere: [(variable, vi), ...]}`.
#[pyfunction]
#[pyo3(signature = (config, seed = None, threads = 0))]
fn variable_importance(py: Python<'_>, config: &str, seed: Option<u64>, threads: usize) -> PyResult<Vec<(String, Vec<(String, f64)>)>> {
    compute(py, threads, || {
        let prep = prepare(config, seed)?;
        let est = run::estimate(&prep)?;
        let hemis = run::vi_hemispheres(&prep.config);
        let reports = run::variable_importance(&prep, &est.ensemble, &hemis)?;
        Ok(reports
            .into_iter()
            .map(|r| (r.hemisphere, r.entries.into_iter().map(|e| (e.variable, e.vi)).collect()))
            .collect())
    })
}

/// Re-summarises a saved `paths.json` at another band level.
#[pyfunction]
#[pyo3(signature = (path, level = 0.68, fixed_mean = None))]
fn read_components<'py>(py: Python<'py>, path: PathBuf, level: f64, fixed_mean: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let policy = fixed_mean.map_or(MeanPolicy::PerT, |f| MeanPolicy::Fixed { train_frac: f });
    let paths = run::read_paths(&path).map_err(py_err)?;
    let v = run::tidy_json(&paths, level, policy).map_err(py_err)?;
    to_py(py, &v)
}

#[pymodule]
fn hnn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("HnnError", py.get_type::<HnnError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(shipped_configs, m)?)?;
    m.add_function(wrap_pyfunction!(shipped_config, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(variable_importance, m)?)?;
    m.add_function(wrap_pyfunction!(read_components, m)?)?;
    Ok(())
}
