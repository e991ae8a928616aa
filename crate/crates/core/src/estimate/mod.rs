//! Ensemble estimation, out-of-bag paths and identification.

pub mod allocate;
pub mod ensemble;
pub mod paths;
pub mod train;

pub use allocate::{block_allocate, Allocation};
pub use ensemble::{estimate_ensemble, member_seed, with_threads, DrawLog, Ensemble, Member};
pub use paths::{
    credible_band, fmt_num, full_components, oob_components, quantile_sorted, Band,
    ComponentPaths, MeanPolicy, Series, SeriesKind, TidyRow, MIN_BAND_DRAWS,
};
pub use train::{train_one, TrainConfig, TrainOutcome};
