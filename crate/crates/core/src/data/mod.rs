//! Panel ingest, stationarity transforms and feature assembly.

pub mod features;
pub mod marx;
pub mod panel;
pub mod transform;

pub use features::{
    build_features, validate_hemispheres, Aggregation, Expansion, FeatureMatrix, FeatureName, FeatureOptions,
    FeaturePipeline, FeatureSet, HemisphereSpec, Role, ScalingRecord, TargetSpec, TARGET_ALIAS,
};
pub use marx::{marx_expand, FeatureKind, LagConvention, MarxColumns};
pub use panel::RawPanel;
pub use transform::{apply_tcode, Tcode};
