//! Pseudo-out-of-sample forecasting with econometric benchmarks.

pub mod models;
pub mod ols;
pub mod oos;
pub mod score;

pub use models::{
    ar_design, bench_ar4, bench_pc, bench_rolling_mean, fit_ar, pc_design, ArFit, Horizon, PcFit, PcSpec,
    AR_MIN_OBS,
};
pub use ols::{design, ols, OlsFit};
pub use oos::{run_oos, Benchmark, External, Fitted, Forecast, Forecaster, HnnForecaster, OosContext, OosPlan, OosResult};
pub use score::{
    read_external_csv, rmse, write_records_csv, write_summary_csv, ForecastRecord, RmseSummary, SummaryRow,
};
