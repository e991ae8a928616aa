use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::allocate::{block_allocate, Allocation};
use super::train::{train_one, TrainConfig};
use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::model::{ComponentOutput, HnnArchitecture, HnnModel};
use crate::seed;

/// Convergence record of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawLog {
    pub draw: usize,
    /// Seed of the accepted attempt (or of the last failure).
    pub seed: u64,
    pub attempts: usize,
    pub best_epoch: Option<usize>,
    pub holdout_loss: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Member {
    pub draw: usize,
    pub seed: u64,
    pub model: HnnModel,
    /// Allocation over the training rows of the feature set.
    pub allocation: Allocation,
    pub best_epoch: usize,
    pub holdout_path: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<Member>,
    pub log: Vec<DrawLog>,
    pub n_train: usize,
}

/// Seed for attempt `attempt` of draw `draw`.
pub fn member_seed(root: u64, draw: usize, attempt: usize) -> u64 {
    seed::derive(root, &[draw as u64, attempt as u64])
}

/// Train `size` members on reshuffled block allocations of the training rows,
/// in parallel on the current rayon pool. Member `b` depends only on
/// `(config.seed, b)`, so results do not depend on scheduling. A divergent
/// attempt is replaced by a fresh one up to `config.max_retries` times; a
/// member that keeps diverging is dropped and logged.
pub fn estimate_ensemble(
    arch: &HnnArchitecture,
    features: &FeatureSet,
    config: &TrainConfig,
    size: usize,
    block_len: usize,
) -> Result<Ensemble> {
    config.validate()?;
    arch.validate()?;
    let n = features.n_train;
    let template = HnnModel::new(arch, features, 0)?;
    let inputs = template.inputs(features)?.select(&(0..n).collect::<Vec<_>>());
    let target = &features.target[..n];

    let results: Vec<(Option<Member>, DrawLog, Option<Error>)> = (0..size)
        .into_par_iter()
        .map(|draw| {
            let mut log = DrawLog {
                draw,
                seed: 0,
                attempts: 0,
                best_epoch: None,
                holdout_loss: None,
                failures: Vec::new(),
            };
            for attempt in 0..=config.max_retries {
                let s = member_seed(config.seed, draw, attempt);
                log.seed = s;
                log.attempts = attempt + 1;
                let run = || -> Result<Member> {
                    let allocation =
                        block_allocate(n, block_len, config.train_frac, &mut seed::rng_for(s, &[0]))?;
                    let model = HnnModel::new(arch, features, seed::derive(s, &[1]))?;
                    let out = train_one(model, &inputs, target, &allocation, config, s)?;
                    Ok(Member {
                        draw,
                        seed: s,
                        model: out.model,
                        allocation,
                        best_epoch: out.best_epoch,
                        holdout_path: out.holdout_path,
                    })
                };
                match run() {
                    Ok(m) => {
                        log.best_epoch = Some(m.best_epoch);
                        log.holdout_loss = Some(m.holdout_path[m.best_epoch]);
                        return (Some(m), log, None);
                    }
                    Err(e @ Error::Diverged { .. }) => log.failures.push(e.to_string()),
                    Err(e) => {
                        log.failures.push(e.to_string());
                        return (None, log, Some(e));
                    }
                }
            }
            (None, log, None)
        })
        .collect();

    let mut members = Vec::with_capacity(size);
    let mut log = Vec::with_capacity(size);
    for (m, l, fatal) in results {
        if let Some(e) = fatal {
            return Err(e);
        }
        members.extend(m);
        log.push(l);
    }
    if members.is_empty() {
        return Err(Error::Numerical("every ensemble member diverged".into()));
    }
    Ok(Ensemble {
        members,
        log,
        n_train: n,
    })
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn retries(&self) -> usize {
        self.log.iter().map(|l| l.attempts - 1).sum()
    }

    /// Each member's evaluation over all rows of `features`.
    pub fn evaluate(&self, features: &FeatureSet) -> Result<Vec<ComponentOutput>> {
        self.members
            .par_iter()
            .map(|m| m.model.predict(features))
            .collect()
    }

    /// Ensemble point prediction: the member mean at every row.
    pub fn forecast(&self, features: &FeatureSet) -> Result<Vec<f64>> {
        let outs = self.evaluate(features)?;
        let b = outs.len() as f64;
        Ok((0..features.len())
            .map(|t| outs.iter().map(|o| o.prediction[t]).sum::<f64>() / b)
            .collect())
    }
}

/// Run `f` on a dedicated rayon pool with `threads` workers (0 = default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NetShape, Variant};
    use crate::synthetic::{toy_features, ToyHemisphere};

    fn setup() -> (HnnArchitecture, FeatureSet, TrainConfig) {
        let fs = toy_features(&[ToyHemisphere::trend("lr"), ToyHemisphere::state("g", 3)], 48, 1)
            .unwrap();
        let arch = HnnArchitecture::uniform(Variant::Factorized, NetShape::new(1, 6), 0.1);
        let cfg = TrainConfig {
            epochs: 15,
            seed: 21,
            ..TrainConfig::default()
        };
        (arch, fs, cfg)
    }

    #[test]
    fn independent_of_thread_count() {
        let (arch, fs, cfg) = setup();
        let a = with_threads(1, || estimate_ensemble(&arch, &fs, &cfg, 4, 6)).unwrap().unwrap();
        let b = with_threads(3, || estimate_ensemble(&arch, &fs, &cfg, 4, 6)).unwrap().unwrap();
        for (x, y) in a.members.iter().zip(&b.members) {
            assert_eq!(x.model, y.model);
            assert_eq!(x.allocation, y.allocation);
        }
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn forecast_is_member_mean() {
        let (arch, fs, cfg) = setup();
        let e = estimate_ensemble(&arch, &fs, &cfg, 3, 6).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e.retries(), 0);
        let f = e.forecast(&fs).unwrap();
        let outs = e.evaluate(&fs).unwrap();
        for t in [0, 10, 47] {
            let m = (outs[0].prediction[t] + outs[1].prediction[t] + outs[2].prediction[t]) / 3.0;
            assert!((f[t] - m).abs() < 1e-14);
        }
    }

    #[test]
    fn divergent_members_are_retried_then_dropped() {
        let (arch, fs, mut cfg) = setup();
        cfg.learning_rate = 1e8;
        let mut arch = arch;
        arch.variant = Variant::Volatility;
        match estimate_ensemble(&arch, &fs, &cfg, 2, 6) {
            Ok(e) => assert!(e.log.iter().all(|l| l.attempts <= cfg.max_retries + 1)),
            Err(e) => assert!(matches!(e, Error::Numerical(_))),
        }
    }
}
