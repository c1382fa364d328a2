//! Mini-batch Adam training with seeded shuffling and dropout.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamParams};
use super::def::NetworkDef;
use super::loss::{prediction_loss, LossParams};
use super::network::{Batch, Network};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::sim::DirectionCommand;

/// One training example: normalized planar image(s), command and the
/// normalized expert action `[v, omega]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub primary: Vec<f32>,
    pub semantic: Option<Vec<f32>>,
    pub command: DirectionCommand,
    pub target: [f32; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    pub loss: LossParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 400, batch_size: 40, adam: AdamParams::default(), loss: LossParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean total loss, regularizer included.
    pub loss: f64,
    /// Mean of the action-error part alone.
    pub prediction_loss: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub network: Network<T>,
    pub adam: Adam<T>,
    pub epochs_completed: usize,
}

impl<T: Scalar> TrainState<T> {
    /// Fresh He-initialized network from the stream's `init` substream.
    pub fn new(def: &NetworkDef, adam: AdamParams, rng: &RngStream) -> Result<Self> {
        let network = Network::init(def, &mut rng.named("init").rng())?;
        let n = network.num_params();
        Ok(Self { network, adam: Adam::new(adam, n), epochs_completed: 0 })
    }
}

fn check_samples(def: &NetworkDef, samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.primary.len() != def.primary_len() || s.semantic.as_ref().map_or(0, Vec::len) != def.semantic_len() {
            return Err(Error::Shape(format!("sample {i} does not match the network input")));
        }
    }
    Ok(())
}

struct BatchData<T> {
    primary: Vec<T>,
    semantic: Option<Vec<T>>,
    commands: Vec<T>,
    targets: Vec<T>,
}

fn gather<T: Scalar>(samples: &[Sample], idx: &[usize], dual: bool) -> BatchData<T> {
    let conv = |v: f32| T::from_f64_lossy(f64::from(v));
    let mut b = BatchData { primary: Vec::new(), semantic: dual.then(Vec::new), commands: Vec::new(), targets: Vec::new() };
    for &i in idx {
        let s = &samples[i];
        b.primary.extend(s.primary.iter().map(|&v| conv(v)));
        if let (Some(dst), Some(src)) = (b.semantic.as_mut(), s.semantic.as_ref()) {
            dst.extend(src.iter().map(|&v| conv(v)));
        }
        b.commands.extend(s.command.one_hot().iter().map(|&v| conv(v)));
        b.targets.extend(s.target.iter().map(|&v| conv(v)));
    }
    b
}

/// One Adam step on the given samples. Returns `(loss, prediction_loss)`.
pub fn train_step<T: Scalar>(
    network: &mut Network<T>,
    adam: &mut Adam<T>,
    samples: &[Sample],
    idx: &[usize],
    loss: &LossParams,
    dropout: &mut dyn RngCore,
) -> Result<(f64, f64)> {
    let data = gather::<T>(samples, idx, network.def().is_dual());
    let batch = Batch { size: idx.len(), primary: &data.primary, semantic: data.semantic.as_deref(), commands: &data.commands };
    let cache = network.forward_train(&batch, dropout)?;
    let (pred, d_out) = prediction_loss(cache.output(), &data.targets, loss.lambda);
    let total = pred + loss.gamma * network.dense_weight_sq_sum();
    let mut grads = network.backward(&cache, &d_out)?;
    network.add_regularizer_grad(&mut grads.grad, loss.gamma);
    adam.update(network.params_mut(), &grads.grad);
    if !network.is_finite() {
        return Err(Error::InvalidValue("non-finite parameter after update".into()));
    }
    Ok((total, pred))
}

/// Runs the next epoch. Shuffling and dropout use per-epoch substreams, so
/// a resumed run repeats an uninterrupted one exactly.
pub fn train_epoch<T: Scalar>(state: &mut TrainState<T>, samples: &[Sample], cfg: &TrainConfig, rng: &RngStream) -> Result<EpochLog> {
    check_samples(state.network.def(), samples)?;
    let epoch = state.epochs_completed;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng.named("shuffle").substream(epoch as u64).rng());
    let mut dropout = rng.named("dropout").substream(epoch as u64).rng();
    let (mut loss_sum, mut pred_sum) = (0.0, 0.0);
    for idx in order.chunks(cfg.batch_size.max(1)) {
        let (l, p) = train_step(&mut state.network, &mut state.adam, samples, idx, &cfg.loss, &mut dropout)?;
        loss_sum += l * idx.len() as f64;
        pred_sum += p * idx.len() as f64;
    }
    state.epochs_completed += 1;
    let n = samples.len() as f64;
    Ok(EpochLog { epoch: epoch + 1, loss: loss_sum / n, prediction_loss: pred_sum / n, samples: samples.len() })
}

/// Trains until `cfg.epochs` epochs are complete, calling `on_epoch` after each.
pub fn resume<T: Scalar>(
    state: &mut TrainState<T>,
    samples: &[Sample],
    cfg: &TrainConfig,
    rng: &RngStream,
    mut on_epoch: impl FnMut(&EpochLog, &TrainState<T>) -> Result<()>,
) -> Result<Vec<EpochLog>> {
    cfg.loss.validate()?;
    let mut logs = Vec::new();
    while state.epochs_completed < cfg.epochs {
        let log = train_epoch(state, samples, cfg, rng)?;
        on_epoch(&log, state)?;
        logs.push(log);
    }
    Ok(logs)
}

pub fn train<T: Scalar>(
    samples: &[Sample],
    def: &NetworkDef,
    cfg: &TrainConfig,
    rng: &RngStream,
) -> Result<(TrainState<T>, Vec<EpochLog>)> {
    check_samples(def, samples)?;
    let mut state = TrainState::new(def, cfg.adam, rng)?;
    let logs = resume(&mut state, samples, cfg, rng, |_, _| Ok(()))?;
    Ok((state, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::def::NetworkDef;
    use rand::{Rng, SeedableRng};

    fn synthetic(def: &NetworkDef, n: usize) -> Vec<Sample> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        (0..n)
            .map(|_| Sample {
                primary: (0..def.primary_len()).map(|_| rng.random()).collect(),
                semantic: def.is_dual().then(|| (0..def.semantic_len()).map(|_| rng.random()).collect()),
                command: DirectionCommand::ALL[rng.random_range(0..4)],
                target: [rng.random(), rng.random_range(-1.0..1.0)],
            })
            .collect()
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let def = NetworkDef::miniature_dual();
        let data = synthetic(&def, 12);
        let cfg = TrainConfig { epochs: 3, batch_size: 5, ..TrainConfig::default() };
        let rng = RngStream::new(11);
        let (full, _) = train::<f32>(&data, &def, &cfg, &rng).unwrap();
        let (mut part, _) = train::<f32>(&data, &def, &TrainConfig { epochs: 1, ..cfg }, &rng).unwrap();
        resume(&mut part, &data, &cfg, &rng, |_, _| Ok(())).unwrap();
        assert_eq!(part, full);
    }

    #[test]
    fn empty_dataset_rejected() {
        let def = NetworkDef::miniature_dual();
        assert!(train::<f32>(&[], &def, &TrainConfig::default(), &RngStream::new(0)).is_err());
    }
}
