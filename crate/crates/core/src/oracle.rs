//! Random stroke generator used for supervised pre-training.
//!
//! Each step picks the pen flag (down with probability
//! `pen_down_per_mille / 1000`) and a displacement uniformly over the 121
//! patch cells. The episode's own final canvas becomes the reference, so a
//! sample pairs a state with the action the generator took from it.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::canvas::Canvas;
use crate::env::{EnvState, Observation, SketchEnv, PATCH_CELLS};
use crate::error::{Error, Result};
use crate::rng::rng_for;

const EPISODE_TAG: u64 = 0x0e1;
const LENGTH_TAG: u64 = 0x0e2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrokeOracle {
    pub env: SketchEnv,
    pub pen_down_per_mille: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEpisode {
    pub actions: Vec<usize>,
    /// `actions.len() + 1` states, from reset to the final state. Every
    /// snapshot's reference is `final_canvas`.
    pub snapshots: Vec<EnvState>,
    pub final_canvas: Arc<Canvas>,
}

/// One supervised pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSample {
    pub state: EnvState,
    pub observation: Observation,
    pub label: usize,
}

impl StrokeOracle {
    /// 84×84 canvas, up to 100 strokes, pen down 80% of the time.
    pub fn new(size: usize, total_strokes: usize) -> Result<Self> {
        Ok(Self {
            env: SketchEnv::new(size, total_strokes)?,
            pen_down_per_mille: 800,
        })
    }

    pub fn sample_action(&self, rng: &mut ChaCha8Rng) -> usize {
        let down = rng.gen_range(0u32..1000) < self.pen_down_per_mille;
        let cell = rng.gen_range(0u32..PATCH_CELLS as u32) as usize;
        usize::from(down) * PATCH_CELLS + cell
    }

    pub fn generate_episode(&self, seed: u64, n_strokes: usize) -> Result<OracleEpisode> {
        if n_strokes == 0 || n_strokes > self.env.total_strokes {
            return Err(Error::Config(format!(
                "episode length {n_strokes} outside [1, {}]",
                self.env.total_strokes
            )));
        }
        let mut rng = rng_for(seed, EPISODE_TAG, 0);
        let mut state = self.env.reset(Arc::new(Canvas::new(self.env.size)))?;
        let mut actions = Vec::with_capacity(n_strokes);
        let mut snapshots = Vec::with_capacity(n_strokes + 1);
        snapshots.push(state.clone());
        for _ in 0..n_strokes {
            let a = self.sample_action(&mut rng);
            self.env.step(&mut state, a)?;
            actions.push(a);
            snapshots.push(state.clone());
        }
        let final_canvas = Arc::new(state.generated);
        for s in &mut snapshots {
            s.reference = final_canvas.clone();
        }
        Ok(OracleEpisode {
            actions,
            snapshots,
            final_canvas,
        })
    }

    /// Episode length for `(seed, index)`, uniform in `[1, total_strokes]`.
    pub fn episode_length(&self, seed: u64, index: u64) -> usize {
        1 + rng_for(seed, LENGTH_TAG, index).gen_range(0..self.env.total_strokes as u32) as usize
    }

    /// Episode `index` of the stream seeded by `seed`, with random length.
    pub fn episode(&self, seed: u64, index: u64) -> Result<OracleEpisode> {
        let n = self.episode_length(seed, index);
        self.generate_episode(crate::rng::derive_seed(seed, EPISODE_TAG, index), n)
    }

    /// `(state, action)` pairs of one episode, in step order.
    pub fn samples(episode: &OracleEpisode) -> Vec<SupervisedSample> {
        episode
            .actions
            .iter()
            .zip(&episode.snapshots)
            .map(|(&label, state)| SupervisedSample {
                state: state.clone(),
                observation: Observation::of(state),
                label,
            })
            .collect()
    }

    /// Walks consecutive episodes of the `seed` stream until `batch_size`
    /// samples are collected.
    pub fn emit_supervised_batch(&self, seed: u64, batch_size: usize) -> Result<Vec<SupervisedSample>> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(batch_size);
        let mut index = 0;
        while out.len() < batch_size {
            let ep = self.episode(seed, index)?;
            out.extend(Self::samples(&ep).into_iter().take(batch_size - out.len()));
            index += 1;
        }
        Ok(out)
    }
}
