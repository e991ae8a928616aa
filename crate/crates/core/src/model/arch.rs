use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// π̂ = Σ_j h_j(𝓗_j).
    Additive,
    /// State nets times non-negative trend-driven coefficients.
    Factorized,
    /// Factorized plus a volatility head trained with the mean-variance loss.
    Volatility,
}

impl Variant {
    pub fn is_factorized(self) -> bool {
        self != Variant::Additive
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Additive => "additive",
            Variant::Factorized => "factorized",
            Variant::Volatility => "volatility",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "additive" | "hnn" => Ok(Variant::Additive),
            "factorized" | "hnn-f" => Ok(Variant::Factorized),
            "volatility" | "factorized+volatility" => Ok(Variant::Volatility),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

/// Hidden layer count and width of a sub-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetShape {
    pub layers: usize,
    pub neurons: usize,
}

impl NetShape {
    pub const fn new(layers: usize, neurons: usize) -> Self {
        Self { layers, neurons }
    }

    /// Layer sizes for `inputs` inputs and a scalar output.
    pub fn sizes(&self, inputs: usize) -> Vec<usize> {
        let mut s = vec![inputs];
        s.extend(std::iter::repeat_n(self.neurons, self.layers));
        s.push(1);
        s
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.layers == 0 || self.neurons == 0 {
            return Err(Error::Config(format!("{what} net needs at least one hidden unit")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HnnArchitecture {
    pub variant: Variant,
    /// Hemisphere nets of the additive model.
    pub additive: NetShape,
    /// State nets of the factorized model.
    pub state: NetShape,
    /// Trend-driven coefficient nets (and the trend-only hemisphere).
    pub coefficient: NetShape,
    /// Fast volatility net.
    pub volatility: NetShape,
    /// Additive model only: layers 2..L shared across hemispheres, each
    /// hemisphere keeping its own first layer.
    pub share_weights: bool,
    pub dropout: f64,
}

impl Default for HnnArchitecture {
    fn default() -> Self {
        Self {
            variant: Variant::Factorized,
            additive: NetShape::new(5, 400),
            state: NetShape::new(3, 400),
            coefficient: NetShape::new(3, 100),
            volatility: NetShape::new(3, 100),
            share_weights: true,
            dropout: 0.2,
        }
    }
}

impl HnnArchitecture {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    /// Same variant with every sub-network replaced by `shape`.
    pub fn uniform(variant: Variant, shape: NetShape, dropout: f64) -> Self {
        Self {
            variant,
            additive: shape,
            state: shape,
            coefficient: shape,
            volatility: shape,
            share_weights: false,
            dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.additive.validate("additive")?;
        self.state.validate("state")?;
        self.coefficient.validate("coefficient")?;
        self.volatility.validate("volatility")?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        assert_eq!("Additive".parse::<Variant>().unwrap(), Variant::Additive);
        assert_eq!("hnn-f".parse::<Variant>().unwrap(), Variant::Factorized);
        assert_eq!("volatility".parse::<Variant>().unwrap(), Variant::Volatility);
        assert!("deep".parse::<Variant>().is_err());
        assert_eq!(Variant::Volatility.to_string(), "volatility");
    }

    #[test]
    fn sizes_and_defaults() {
        assert_eq!(NetShape::new(3, 100).sizes(1), vec![1, 100, 100, 100, 1]);
        let a = HnnArchitecture::default();
        assert_eq!(a.additive, NetShape::new(5, 400));
        assert_eq!(a.state, NetShape::new(3, 400));
        a.validate().unwrap();
        let mut bad = a.clone();
        bad.dropout = 1.0;
        assert!(bad.validate().is_err());
    }
}
