use serde::{Deserialize, Serialize};

use super::allocate::Allocation;
use crate::error::{Error, Result};
use crate::model::{HnnModel, ModelInputs, Objective, VolNorm};
use crate::nn::{AdamConfig, AdamState, Mode};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_frac: f64,
    /// Block length (quarters) of the 85/15 reshuffles.
    pub block_len: usize,
    /// Members in a forecasting ensemble.
    pub ensemble_size: usize,
    /// Members in an inference ensemble.
    pub inference_size: usize,
    /// Block length (quarters) used for inference ensembles.
    pub bootstrap_block_len: usize,
    /// Stop after this many epochs without a new holdout minimum.
    pub patience: Option<usize>,
    /// Replacement attempts per member after a divergent draw.
    pub max_retries: usize,
    /// Train the volatility variant with h ≡ 1.
    pub freeze_volatility: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.005,
            train_frac: 0.85,
            block_len: 6,
            ensemble_size: 50,
            inference_size: 300,
            bootstrap_block_len: 6,
            patience: None,
            max_retries: 3,
            freeze_volatility: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Config(format!("train_frac {} not in (0, 1)", self.train_frac)));
        }
        if self.block_len == 0 || self.bootstrap_block_len == 0 {
            return Err(Error::Config("block lengths must be at least 1".into()));
        }
        if self.ensemble_size == 0 || self.inference_size == 0 {
            return Err(Error::Config("ensemble sizes must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn objective(&self, model: &HnnModel) -> Objective {
        match Objective::default_for(model.variant()) {
            Objective::MeanVariance if self.freeze_volatility => Objective::MeanVarianceUnit,
            o => o,
        }
    }
}

/// Result of one early-stopped optimisation.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HnnModel,
    pub best_epoch: usize,
    /// Holdout objective after each epoch; entry 0 is the initial weights.
    pub holdout_path: Vec<f64>,
    pub train_loss: f64,
}

/// Full-batch Adam on the training rows of `allocation`, returning the
/// weights at the epoch with the lowest holdout objective (MSE, or the
/// mean-variance loss when the volatility head is trained). Row indices
/// refer to `inputs`/`target`.
pub fn train_one(
    mut model: HnnModel,
    inputs: &ModelInputs,
    target: &[f64],
    allocation: &Allocation,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if allocation.train.is_empty() || allocation.holdout.is_empty() {
        return Err(Error::Insufficient("allocation has an empty side".into()));
    }
    if allocation.len() > inputs.rows() || target.len() != inputs.rows() {
        return Err(Error::Dimension("allocation exceeds the sample".into()));
    }
    let objective = config.objective(&model);
    let train_x = inputs.select(&allocation.train);
    let hold_x = inputs.select(&allocation.holdout);
    let train_y: Vec<f64> = allocation.train.iter().map(|&t| target[t]).collect();
    let hold_y: Vec<f64> = allocation.holdout.iter().map(|&t| target[t]).collect();
    if train_y.iter().chain(&hold_y).any(|v| !v.is_finite()) {
        return Err(Error::Data("target missing on an allocated row".into()));
    }
    let mut rng = seed::rng_for(seed, &[2]);
    let diverged = |epoch: usize| Error::Diverged { seed, epoch };

    let holdout_value = |m: &HnnModel, rng: &mut rand_chacha::ChaCha8Rng| -> Result<f64> {
        let reference;
        let norm = if objective == Objective::MeanVariance {
            reference = m.coefficient_means(&train_x)?;
            VolNorm::Reference(&reference)
        } else {
            VolNorm::Batch
        };
        m.loss(&hold_x, &hold_y, objective, Mode::Eval, rng, norm)
    };

    let mut adam: Vec<AdamState> = model
        .nets
        .iter()
        .map(|n| AdamState::new(n, config.adam()))
        .collect();
    let first = holdout_value(&model, &mut rng).map_err(|_| diverged(0))?;
    if !first.is_finite() {
        return Err(diverged(0));
    }
    let mut path = vec![first];
    let mut best = (0usize, first, model.nets.clone());
    let mut train_loss = f64::NAN;
    for epoch in 1..=config.epochs {
        let (loss, grads) = model
            .loss_and_gradients(&train_x, &train_y, objective, Mode::Train, &mut rng)
            .map_err(|_| diverged(epoch))?;
        if !loss.is_finite() {
            return Err(diverged(epoch));
        }
        train_loss = loss;
        for ((net, st), g) in model.nets.iter_mut().zip(&mut adam).zip(&grads) {
            st.step(net, g);
        }
        let h = holdout_value(&model, &mut rng).map_err(|_| diverged(epoch))?;
        if !h.is_finite() {
            return Err(diverged(epoch));
        }
        path.push(h);
        if h < best.1 {
            best = (epoch, h, model.nets.clone());
        } else if config.patience.is_some_and(|p| epoch - best.0 >= p) {
            break;
        }
    }
    model.nets = best.2;
    model.set_vol_reference(&train_x)?;
    Ok(TrainOutcome {
        model,
        best_epoch: best.0,
        holdout_path: path,
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::block_allocate;
    use crate::model::{HnnArchitecture, NetShape, Variant};
    use crate::synthetic::{toy_features, ToyHemisphere};

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let fs = toy_features(&[ToyHemisphere::state("a", 3)], 40, 1).unwrap();
        let arch = HnnArchitecture::uniform(Variant::Additive, NetShape::new(2, 8), 0.0);
        let m = HnnModel::new(&arch, &fs, 1).unwrap();
        let x = m.inputs(&fs).unwrap();
        let alloc = block_allocate(40, 4, 0.8, &mut seed::rng_for(1, &[])).unwrap();
        let out = train_one(m.clone(), &x, &fs.target, &alloc, &cfg(0), 3).unwrap();
        assert_eq!(out.best_epoch, 0);
        assert_eq!(out.model.nets, m.nets);
        assert_eq!(out.holdout_path.len(), 1);
    }

    #[test]
    fn best_epoch_is_argmin_of_path() {
        let fs = toy_features(&[ToyHemisphere::state("a", 3)], 60, 2).unwrap();
        let arch = HnnArchitecture::uniform(Variant::Factorized, NetShape::new(2, 8), 0.1);
        let m = HnnModel::new(&arch, &fs, 4).unwrap();
        let x = m.inputs(&fs).unwrap();
        let alloc = block_allocate(60, 6, 0.8, &mut seed::rng_for(2, &[])).unwrap();
        let out = train_one(m, &x, &fs.target, &alloc, &cfg(60), 5).unwrap();
        let (arg, min) = out
            .holdout_path
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |a, (i, v)| if *v < a.1 { (i, *v) } else { a });
        assert_eq!(out.best_epoch, arg);
        assert!(min <= out.holdout_path[0]);
        // The returned weights reproduce the recorded minimum.
        let hx = x.select(&alloc.holdout);
        let hy: Vec<f64> = alloc.holdout.iter().map(|&t| fs.target[t]).collect();
        let got = crate::model::loss_mse(&hy, &out.model.evaluate(&hx).unwrap().prediction).unwrap();
        assert!((got - min).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let fs = toy_features(&[ToyHemisphere::state("a", 3)], 40, 3).unwrap();
        let arch = HnnArchitecture::uniform(Variant::Volatility, NetShape::new(1, 6), 0.2);
        let m = HnnModel::new(&arch, &fs, 4).unwrap();
        let x = m.inputs(&fs).unwrap();
        let alloc = block_allocate(40, 4, 0.8, &mut seed::rng_for(3, &[])).unwrap();
        let a = train_one(m.clone(), &x, &fs.target, &alloc, &cfg(20), 9).unwrap();
        let b = train_one(m, &x, &fs.target, &alloc, &cfg(20), 9).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.holdout_path, b.holdout_path);
    }

    #[test]
    fn patience_stops_early() {
        let fs = toy_features(&[ToyHemisphere::state("a", 3)], 40, 4).unwrap();
        let arch = HnnArchitecture::uniform(Variant::Additive, NetShape::new(1, 6), 0.0);
        let m = HnnModel::new(&arch, &fs, 4).unwrap();
        let x = m.inputs(&fs).unwrap();
        let alloc = block_allocate(40, 4, 0.8, &mut seed::rng_for(4, &[])).unwrap();
        let c = TrainConfig {
            patience: Some(5),
            learning_rate: 0.05,
            ..cfg(400)
        };
        let out = train_one(m, &x, &fs.target, &alloc, &c, 1).unwrap();
        assert!(out.holdout_path.len() <= out.best_epoch + 6);
    }

    #[test]
    fn exploding_learning_rate_reports_divergence() {
        let fs = toy_features(&[ToyHemisphere::state("a", 3)], 40, 5).unwrap();
        let arch = HnnArchitecture::uniform(Variant::Volatility, NetShape::new(2, 8), 0.0);
        let m = HnnModel::new(&arch, &fs, 4).unwrap();
        let x = m.inputs(&fs).unwrap();
        let alloc = block_allocate(40, 4, 0.8, &mut seed::rng_for(5, &[])).unwrap();
        let c = TrainConfig {
            learning_rate: 1e6,
            ..cfg(200)
        };
        match train_one(m, &x, &fs.target, &alloc, &c, 77) {
            Err(Error::Diverged { seed, .. }) => assert_eq!(seed, 77),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.best_epoch)),
        }
    }
}
