//! Supervised pre-training on random-stroke episodes.
//!
//! Epoch `e` replays oracle episode `e` of the training stream (length
//! uniform in `1..=pretrain_total_strokes`) and takes one Adam step on the
//! mean cross-entropy between the Q-network output and the oracle action.

use serde::Serialize;
use sketchnet::{cross_entropy_loss, AdamHyper, AdamState, Architecture, Checkpoint, CheckpointMeta, Input, Network};

use crate::config::Config;
use crate::env::stack_streams;
use crate::error::{Error, Result};
use crate::oracle::{StrokeOracle, SupervisedSample};
use crate::rng::derive_seed;

use super::policy::argmax;

const INIT_TAG: u64 = 0xa1;
const TRAIN_TAG: u64 = 0xa2;
const HELDOUT_TAG: u64 = 0xa3;
const EVAL_BATCH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: u64,
    pub loss: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct Pretrainer {
    cfg: Config,
    oracle: StrokeOracle,
    network: Network<f32>,
    adam: AdamState<f32>,
    epoch: u64,
}

/// Sample-weighted mean loss of consecutive `block`-epoch windows.
pub fn block_means(log: &[EpochLog], block: usize) -> Vec<f64> {
    log.chunks(block)
        .filter(|c| c.len() == block)
        .map(|c| {
            let n: usize = c.iter().map(|e| e.samples).sum();
            c.iter().map(|e| e.loss * e.samples as f64).sum::<f64>() / n as f64
        })
        .collect()
}

impl Pretrainer {
    pub fn new(cfg: &Config) -> Result<Self> {
        cfg.validate()?;
        let arch = Architecture::q_network(cfg.fc1_activation);
        let network = Network::init(arch, derive_seed(cfg.seed, INIT_TAG, 0));
        let adam = AdamState::new(&network, AdamHyper::default());
        Ok(Self {
            cfg: cfg.clone(),
            oracle: StrokeOracle::new(cfg.canvas_size, cfg.pretrain_total_strokes)?,
            network,
            adam,
            epoch: 0,
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.network
    }

    pub fn epochs_done(&self) -> u64 {
        self.epoch
    }

    fn train_seed(&self) -> u64 {
        derive_seed(self.cfg.seed, TRAIN_TAG, 0)
    }

    /// One epoch. On a fault the parameters and epoch counter are left as
    /// they were.
    pub fn epoch(&mut self) -> Result<EpochLog> {
        let episode = self.oracle.episode(self.train_seed(), self.epoch)?;
        let samples = StrokeOracle::samples(&episode);
        let (batch, global, local) = stack_streams(samples.iter().map(|s| &s.state));
        let cache = self.network.forward(&Input { batch, global: &global, local: &local })?;
        let scale = 1.0 / batch as f32;
        let mut loss = 0.0f64;
        let mut grad_out = Vec::with_capacity(batch * sketchnet::NUM_ACTIONS);
        for (s, row) in samples.iter().zip(cache.output().chunks(sketchnet::NUM_ACTIONS)) {
            let (l, g) = cross_entropy_loss(row, s.label)?;
            loss += f64::from(l);
            grad_out.extend(g.into_iter().map(|v| v * scale));
        }
        let loss = loss / batch as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingFault(format!(
                "non-finite pre-training loss at epoch {}",
                self.epoch
            )));
        }
        let grads = self.network.backward(&cache, &grad_out)?;
        self.adam.update(&mut self.network, &grads, self.cfg.pretrain_learning_rate)?;
        let log = EpochLog {
            epoch: self.epoch,
            loss,
            samples: batch,
        };
        self.epoch += 1;
        Ok(log)
    }

    pub fn run(&mut self, epochs: u64, mut on_epoch: impl FnMut(&EpochLog)) -> Result<Vec<EpochLog>> {
        let mut log = Vec::with_capacity(epochs as usize);
        for _ in 0..epochs {
            let e = self.epoch()?;
            on_epoch(&e);
            log.push(e);
        }
        Ok(log)
    }

    /// Oracle samples from episodes never used for training.
    pub fn heldout_samples(&self) -> Result<Vec<SupervisedSample>> {
        let seed = derive_seed(self.cfg.seed, HELDOUT_TAG, 0);
        let mut out = Vec::new();
        for i in 0..self.cfg.pretrain_heldout_episodes {
            out.extend(StrokeOracle::samples(&self.oracle.episode(seed, i)?));
        }
        Ok(out)
    }

    /// Fraction of held-out samples where the network's argmax is the
    /// oracle action.
    pub fn heldout_accuracy(&self) -> Result<f64> {
        let samples = self.heldout_samples()?;
        action_accuracy(&self.network, &samples)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.network.clone(),
            self.adam.clone(),
            CheckpointMeta {
                step: self.epoch,
                rng: serde_json::json!({ "seed": self.cfg.seed, "next_epoch": self.epoch }),
                categories: Vec::new(),
            },
        )
    }
}

pub fn action_accuracy(network: &Network<f32>, samples: &[SupervisedSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in samples.chunks(EVAL_BATCH) {
        let (batch, global, local) = stack_streams(chunk.iter().map(|s| &s.state));
        let q = network.predict(&Input { batch, global: &global, local: &local })?;
        for (s, row) in chunk.iter().zip(q.chunks(sketchnet::NUM_ACTIONS)) {
            correct += usize::from(argmax(row) == s.label);
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
