//! Variable importance, contribution shares and principal-component ablations.

pub mod pca;
pub mod shares;
pub mod vi;

pub use pca::{pca_extract, vi_column_weights, PcaResult};
pub use shares::{absolute_shares, contribution_shares};
pub use vi::{variable_importance, vi_report, ViConfig, ViEntry, ViReport, ViScale};
