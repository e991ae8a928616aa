//! Hemisphere architectures and their losses.

pub mod arch;
pub mod hnn;
pub mod loss;

pub use arch::{HnnArchitecture, NetShape, Variant};
pub use hnn::{
    predict_additive, predict_factorized, volatility_head, Component, ComponentKind,
    ComponentOutput, ComponentValues, HemisphereLayout, HnnModel, InputSource, ModelInputs,
    Objective, VolNorm, VolatilitySpec, VolatilityValues,
};
pub use loss::{loss_mean_variance, loss_mean_variance_grad, loss_mse, loss_mse_grad};
