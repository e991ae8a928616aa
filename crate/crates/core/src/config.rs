//! TOML run configuration shared by the command line and the bindings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ViConfig, ViScale};
use crate::bench::{Benchmark, OosPlan};
use crate::data::{FeatureOptions, HemisphereSpec, RawPanel, Role, TargetSpec};
use crate::date::Quarter;
use crate::error::{Error, Result};
use crate::estimate::{MeanPolicy, TrainConfig};
use crate::model::{HnnArchitecture, Variant};
use crate::synthetic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Root of every random stream in the run.
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    pub target: TargetSpec,
    #[serde(default)]
    pub features: FeatureOptions,
    pub hemispheres: Vec<HemisphereSpec>,
    #[serde(default)]
    pub model: HnnArchitecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub vi: ViSection,
    #[serde(default)]
    pub forecast: ForecastSection,
    #[serde(default)]
    pub ablation: AblationSection,
}

fn default_name() -> String {
    "run".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// FRED-QD style CSV, relative to the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticData>,
    /// Last quarter whose supervisor may enter training (default: all observed).
    #[serde(default)]
    pub train_end: Option<Quarter>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    Demo,
    LatentState,
    TwoRegimeVolatility,
    PlantedDriver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub dgp: Dgp,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticData {
    pub fn panel(&self) -> Result<RawPanel> {
        Ok(match self.dgp {
            Dgp::Demo => synthetic::demo_panel(self.n, self.seed)?,
            Dgp::LatentState => synthetic::latent_state(self.n, self.seed)?.panel,
            Dgp::TwoRegimeVolatility => synthetic::two_regime_volatility(self.n, self.seed)?.panel,
            Dgp::PlantedDriver => synthetic::planted_driver(self.n, self.seed)?.panel,
        })
    }
}

/// How factorized states are scaled before export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Identification {
    /// Fixed standard deviation for every state.
    Std(f64),
    /// Standard deviation of a (transformed) panel series over the training rows.
    Like(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Central credible level of the bands.
    pub level: f64,
    pub mean: MeanPolicy,
    pub identify: Option<Identification>,
    /// Shift non-trend contributions to mean zero in-sample.
    pub center: bool,
    pub save_weights: bool,
    pub save_draws: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            level: 0.68,
            mean: MeanPolicy::PerT,
            identify: None,
            center: false,
            save_weights: true,
            save_draws: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViSection {
    /// Hemispheres to analyse (default: every state hemisphere).
    pub hemispheres: Vec<String>,
    pub reps: usize,
    pub joint: bool,
    pub scale: ViScale,
    /// Entries kept in the plot-ready JSON.
    pub top: usize,
}

impl Default for ViSection {
    fn default() -> Self {
        let d = ViConfig::default();
        Self {
            hemispheres: Vec::new(),
            reps: d.reps,
            joint: d.joint,
            scale: d.scale,
            top: 20,
        }
    }
}

impl ViSection {
    pub fn vi_config(&self, seed: u64) -> ViConfig {
        ViConfig {
            reps: self.reps,
            joint: self.joint,
            scale: self.scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSource {
    pub id: String,
    /// `origin,value` CSV, relative to the config file.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSection {
    pub plan: OosPlan,
    pub benchmarks: Vec<Benchmark>,
    pub external: Vec<ExternalSource>,
    /// Include the network itself.
    pub network: bool,
    pub network_id: String,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            plan: OosPlan::default(),
            benchmarks: vec![
                Benchmark::Ar4,
                Benchmark::RollingMean { window: 4 },
                Benchmark::RollingMean { window: 40 },
            ],
            external: Vec::new(),
            network: true,
            network_id: "hnn".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    /// Hemispheres to compare (default: every state hemisphere).
    pub hemispheres: Vec<String>,
    /// Also extract the VI-weighted component.
    pub weighted: bool,
    /// Also extract the first component of all current values, and of all columns.
    pub all: bool,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            hemispheres: Vec::new(),
            weighted: true,
            all: true,
        }
    }
}

/// Shipped configurations, by name.
pub const SHIPPED: [(&str, &str); 6] = [
    ("benchmark", include_str!("../../../configs/benchmark.toml")),
    ("data-poor", include_str!("../../../configs/data-poor.toml")),
    ("4nk", include_str!("../../../configs/4nk.toml")),
    ("taylor", include_str!("../../../configs/taylor.toml")),
    ("synthetic", include_str!("../../../configs/synthetic.toml")),
    ("volatility", include_str!("../../../configs/volatility.toml")),
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn shipped(name: &str) -> Result<Self> {
        let (_, text) = SHIPPED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no shipped config `{name}`")))?;
        Self::from_toml(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => return Err(Error::Config("data: give either `path` or `synthetic`".into())),
            (None, None) => return Err(Error::Config("data: one of `path` or `synthetic` is required".into())),
            _ => {}
        }
        if self.hemispheres.is_empty() {
            return Err(Error::Config("at least one hemisphere is required".into()));
        }
        crate::data::validate_hemispheres(&self.hemispheres, self.features.allow_overlap)?;
        self.target.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.output.level > 0.0 && self.output.level < 1.0) {
            return Err(Error::Config(format!("output.level {} not in (0, 1)", self.output.level)));
        }
        if let MeanPolicy::Fixed { train_frac } = self.output.mean {
            if !(train_frac > 0.0 && train_frac < 1.0) {
                return Err(Error::Config("output.mean.train_frac must be in (0, 1)".into()));
            }
        }
        match &self.output.identify {
            Some(Identification::Std(s)) if !(*s > 0.0) => {
                return Err(Error::Config("output.identify.std must be positive".into()))
            }
            Some(_) if !self.model.variant.is_factorized() => {
                return Err(Error::Config("output.identify needs a factorized variant".into()))
            }
            _ => {}
        }
        if self.model.variant == Variant::Volatility
            && self.hemispheres.iter().filter(|h| h.role == Role::Volatility).count() > 1
        {
            return Err(Error::Config("at most one volatility hemisphere".into()));
        }
        if self.vi.reps == 0 {
            return Err(Error::Config("vi.reps must be at least 1".into()));
        }
        for name in self.vi.hemispheres.iter().chain(&self.ablation.hemispheres) {
            if !self.hemispheres.iter().any(|h| &h.name == name) {
                return Err(Error::Config(format!("unknown hemisphere `{name}`")));
            }
        }
        Ok(())
    }

    /// Names of hemispheres with data-driven states.
    pub fn state_hemispheres(&self) -> Vec<String> {
        self.hemispheres
            .iter()
            .filter(|h| h.role == Role::State && !h.mnemonics.is_empty())
            .map(|h| h.name.clone())
            .collect()
    }

    /// Every mnemonic the run reads from the panel.
    pub fn mnemonics(&self) -> Vec<String> {
        let mut out = vec![self.target.mnemonic.clone()];
        let extra = self.forecast.benchmarks.iter().flat_map(|b| match b {
            Benchmark::Pc { gap, extras, .. } => std::iter::once(gap.clone()).chain(extras.clone()).collect(),
            _ => Vec::new(),
        });
        let ident = match &self.output.identify {
            Some(Identification::Like(m)) => vec![m.clone()],
            _ => Vec::new(),
        };
        for m in self
            .hemispheres
            .iter()
            .flat_map(|h| h.mnemonics.iter().cloned())
            .chain(extra)
            .chain(ident)
        {
            if m != crate::data::TARGET_ALIAS && !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    /// Load the panel; relative paths are resolved against `base`.
    pub fn load_panel(&self, base: &Path) -> Result<RawPanel> {
        let panel = match (&self.data.path, &self.data.synthetic) {
            (Some(p), _) => RawPanel::from_path(&base.join(p))?,
            (_, Some(s)) => s.panel()?,
            (None, None) => return Err(Error::Config("no data source".into())),
        };
        for m in self.mnemonics() {
            if !panel.contains(&m) {
                return Err(Error::MissingMnemonic(m));
            }
        }
        Ok(panel)
    }

    /// Training configuration with the root seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: crate::seed::derive(self.seed, &[0]),
            ..self.train.clone()
        }
    }

    pub fn vi_seed(&self) -> u64 {
        crate::seed::derive(self.seed, &[1])
    }

    pub fn forecast_seed(&self) -> u64 {
        crate::seed::derive(self.seed, &[2])
    }
}

/// Hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
