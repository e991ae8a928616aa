//! Weight serialisation.
//!
//! JSON layout:
//!
//! ```text
//! { "sizes": [in, h1, .., out],
//!   "activations": ["relu", .., "linear"],
//!   "dropout": 0.2,
//!   "weights": [[row-major in×h1], ..],
//!   "biases": [[h1], ..] }
//! ```
//!
//! Binary layout (little endian): magic `HNNW`, `u32` version (1), `u32` layer
//! count L, L+1 `u32` sizes, L `u8` activation codes (0 relu, 1 abs, 2 linear),
//! `f64` dropout, then per layer the row-major weights followed by the bias,
//! all `f64`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet, Layer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HNNW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNetRecord {
    pub sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub dropout: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&DenseNet> for DenseNetRecord {
    fn from(net: &DenseNet) -> Self {
        Self {
            sizes: net.sizes(),
            activations: net.layers().iter().map(|l| l.activation).collect(),
            dropout: net.dropout(),
            weights: net.layers().iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: net.layers().iter().map(|l| l.bias.to_vec()).collect(),
        }
    }
}

impl TryFrom<DenseNetRecord> for DenseNet {
    type Error = Error;

    fn try_from(r: DenseNetRecord) -> Result<Self> {
        let n = r.activations.len();
        if r.sizes.len() != n + 1 || r.weights.len() != n || r.biases.len() != n {
            return Err(Error::Data("inconsistent network record".into()));
        }
        let layers = (0..n)
            .map(|i| {
                let weights = Array2::from_shape_vec((r.sizes[i], r.sizes[i + 1]), r.weights[i].clone())
                    .map_err(|e| Error::Data(format!("layer {i}: {e}")))?;
                Ok(Layer {
                    weights,
                    bias: Array1::from(r.biases[i].clone()),
                    activation: r.activations[i],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::from_layers(layers, r.dropout)
    }
}

impl Serialize for DenseNet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DenseNetRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseNet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = DenseNetRecord::deserialize(d)?;
        DenseNet::try_from(rec).map_err(serde::de::Error::custom)
    }
}

impl DenseNet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers().len() as u32).to_le_bytes())?;
        for s in self.sizes() {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for l in self.layers() {
            w.write_all(&[l.activation.code()])?;
        }
        w.write_all(&self.dropout().to_le_bytes())?;
        for l in self.layers() {
            for v in l.weights.iter().chain(l.bias.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data("not an HNNW weight block".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Data(format!("unsupported weight format version {version}")));
        }
        let n = read_u32(r)? as usize;
        let sizes = (0..=n).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let mut codes = vec![0u8; n];
        r.read_exact(&mut codes)?;
        let dropout = read_f64(r)?;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let (fi, fo) = (sizes[i], sizes[i + 1]);
            let w = (0..fi * fo).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            let b = (0..fo).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((fi, fo), w).map_err(|e| Error::Data(e.to_string()))?,
                bias: Array1::from(b),
                activation: Activation::from_code(codes[i])?,
            });
        }
        DenseNet::from_layers(layers, dropout)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn both_formats_round_trip(seed in 0u64..1000, width in 1usize..6, depth in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sizes = vec![3];
            sizes.extend(std::iter::repeat_n(width, depth));
            sizes.push(1);
            let net = DenseNet::new(&sizes, Activation::Relu, Activation::Abs, 0.1, &mut rng).unwrap();
            let json = net.to_json().unwrap();
            prop_assert_eq!(&DenseNet::from_json(&json).unwrap(), &net);
            let mut buf = Vec::new();
            net.write_binary(&mut buf).unwrap();
            prop_assert_eq!(&DenseNet::read_binary(&mut buf.as_slice()).unwrap(), &net);
        }
    }

    #[test]
    fn rejects_foreign_bytes() {
        assert!(DenseNet::read_binary(&mut &b"NOPE0000"[..]).is_err());
    }
}
