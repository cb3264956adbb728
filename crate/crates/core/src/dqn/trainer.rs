//! Q-learning loop with experience replay and a second value network.
//!
//! By default the second network is a target copy refreshed every
//! `target_update_frequency` environment steps and bootstraps are
//! `r + γ·max_a Q_target(s', a)`. With `double_q_coin_flip` both networks
//! learn: each update a coin picks which one is trained, bootstrapping from
//! the other, and behaviour is ε-greedy on their sum.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sketchnet::{q_mse_loss, AdamHyper, AdamState, Checkpoint, CheckpointMeta, Input, ModelKind, Network, NetError};

use crate::canvas::Canvas;
use crate::classifier::Classifier;
use crate::config::Config;
use crate::env::{stack_streams, EnvState, SketchEnv, StepInfo};
use crate::error::{Error, Result};
use crate::rng::{rng_for, RngState};

use super::policy::{epsilon_greedy_with, td_target};
use super::replay::{ReplayBuffer, StateDescriptor, Transition};
use super::reward::{is_slow, regime, similarity_s, step_reward, Regime};

const TRAIN_TAG: u64 = 0xb1;

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub category: String,
    pub canvas: Arc<Canvas>,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub category: String,
    pub steps: usize,
    pub sum_reward: f64,
    pub s_final: f64,
    pub similarity_pct: f64,
    pub epsilon: f64,
    pub lr: f64,
}

/// Per-step accounting returned by [`DqnTrainer::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Index into the trainer's reference list.
    pub reference: usize,
    pub info: StepInfo,
    pub k: usize,
    pub regime: Regime,
    pub s_k: f64,
    pub s_k1: f64,
    pub reward: f64,
    pub updated: bool,
    pub episode: Option<EpisodeLog>,
}

#[derive(Debug, Clone)]
struct Episode {
    state: EnvState,
    reference: u32,
    s_k: f64,
    sum_reward: f64,
}

/// Behaviour Q-values; with a second estimator, the sum of both.
fn q_values(online: &Network<f32>, second: Option<&Network<f32>>, state: &EnvState) -> Result<Vec<f32>> {
    let (batch, global, local) = stack_streams([state]);
    let input = Input { batch, global: &global, local: &local };
    let mut q = online.predict(&input)?;
    if let Some(second) = second {
        for (a, b) in q.iter_mut().zip(second.predict(&input)?) {
            *a += b;
        }
    }
    Ok(q)
}

/// θ for `canvas`: the classifier probability of `category` when the
/// classifier knows it, `fallback` otherwise.
pub fn theta_reward(classifier: Option<&Classifier>, category: &str, canvas: &Canvas, fallback: f64) -> Result<f64> {
    match classifier.and_then(|c| c.category_index(category).map(|i| (c, i))) {
        Some((c, i)) => c.theta(canvas, i),
        None => Ok(fallback),
    }
}

#[derive(Debug, Clone)]
pub struct DqnTrainer {
    cfg: Config,
    env: SketchEnv,
    references: Vec<Reference>,
    canvases: Vec<Arc<Canvas>>,
    online: Network<f32>,
    second: Network<f32>,
    adam_online: AdamState<f32>,
    adam_second: AdamState<f32>,
    classifier: Option<Classifier>,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
    episodes: u64,
    current: Option<Episode>,
}

impl DqnTrainer {
    pub fn new(
        cfg: &Config,
        references: Vec<Reference>,
        pretrained: Network<f32>,
        classifier: Option<Classifier>,
    ) -> Result<Self> {
        cfg.validate()?;
        if references.is_empty() {
            return Err(Error::Config("training needs at least one reference sketch".into()));
        }
        if pretrained.architecture().kind != ModelKind::QNetwork {
            return Err(Error::Net(NetError::Shape("pretrained network is not a Q-network".into())));
        }
        let env = SketchEnv::new(cfg.canvas_size, cfg.total_strokes)?;
        let canvases: Vec<Arc<Canvas>> = references.iter().map(|r| r.canvas.clone()).collect();
        for c in &canvases {
            env.reset(c.clone())?;
        }
        let mut second = pretrained.clone();
        second.copy_from(&pretrained)?;
        Ok(Self {
            adam_online: AdamState::new(&pretrained, AdamHyper::default()),
            adam_second: AdamState::new(&pretrained, AdamHyper::default()),
            online: pretrained,
            second,
            cfg: cfg.clone(),
            env,
            references,
            canvases,
            classifier,
            replay: ReplayBuffer::new(cfg.experience_replay_size)?,
            rng: rng_for(cfg.seed, TRAIN_TAG, 0),
            steps: 0,
            updates: 0,
            episodes: 0,
            current: None,
        })
    }

    pub fn online(&self) -> &Network<f32> {
        &self.online
    }

    /// Target network, or the second learner in coin-flip mode.
    pub fn second(&self) -> &Network<f32> {
        &self.second
    }

    pub fn references(&self) -> &[Reference] {
        &self.references
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    fn begin_episode(&mut self) -> Result<Episode> {
        let reference = self.rng.gen_range(0..self.references.len() as u32);
        let state = self.env.reset(self.canvases[reference as usize].clone())?;
        let s_k = similarity_s(&state.generated, &state.reference, self.cfg.similarity_scale)?;
        Ok(Episode {
            state,
            reference,
            s_k,
            sum_reward: 0.0,
        })
    }

    /// One environment step, followed by one update once the replay holds
    /// a full batch.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let mut ep = match self.current.take() {
            Some(ep) => ep,
            None => self.begin_episode()?,
        };
        let second = self.cfg.double_q_coin_flip.then_some(&self.second);
        let action = epsilon_greedy_with(sketchnet::NUM_ACTIONS, self.cfg.epsilon, &mut self.rng, || {
            q_values(&self.online, second, &ep.state)
        })?;
        let reward_cfg = self.cfg.reward();
        let k = ep.state.k;
        let reg = regime(&reward_cfg, k)?;
        let before = StateDescriptor::capture(&ep.state, ep.reference);
        let info = self.env.step(&mut ep.state, action)?;
        let s_k1 = similarity_s(&ep.state.generated, &ep.state.reference, self.cfg.similarity_scale)?;
        let theta = match reg {
            Regime::Pixel => 0.0,
            Regime::Theta => theta_reward(
                self.classifier.as_ref(),
                &self.references[ep.reference as usize].category,
                &ep.state.generated,
                self.cfg.untrained_category_theta,
            )?,
        };
        let slow = is_slow(&info, self.cfg.slow_threshold);
        let reward = step_reward(&reward_cfg, k, slow, ep.s_k, s_k1, theta)?;
        self.replay.push(Transition {
            state: before,
            action,
            reward,
            next: StateDescriptor::capture(&ep.state, ep.reference),
            terminal: info.terminal,
        });
        let updated = if self.replay.len() >= self.cfg.batch_size {
            self.update()?;
            true
        } else {
            false
        };
        self.steps += 1;
        if !self.cfg.double_q_coin_flip && self.steps.is_multiple_of(self.cfg.target_update_frequency) {
            self.second.copy_from(&self.online)?;
        }
        let s_k = ep.s_k;
        let reference = ep.reference as usize;
        ep.s_k = s_k1;
        ep.sum_reward += reward;
        let episode = if info.terminal {
            Some(self.finish_episode(&ep)?)
        } else {
            self.current = Some(ep);
            None
        };
        Ok(StepOutcome {
            reference,
            info,
            k,
            regime: reg,
            s_k,
            s_k1,
            reward,
            updated,
            episode,
        })
    }

    fn finish_episode(&mut self, ep: &Episode) -> Result<EpisodeLog> {
        let log = EpisodeLog {
            episode: self.episodes,
            category: self.references[ep.reference as usize].category.clone(),
            steps: ep.state.k,
            sum_reward: ep.sum_reward,
            s_final: ep.s_k,
            similarity_pct: super::reward::eval_similarity_percent(&ep.state.generated, &ep.state.reference)?,
            epsilon: self.cfg.epsilon,
            lr: self.cfg.learning_rate,
        };
        self.episodes += 1;
        Ok(log)
    }

    fn update(&mut self) -> Result<()> {
        let train_second = self.cfg.double_q_coin_flip && self.rng.gen_range(0..2u32) == 1;
        let sample: Vec<Transition> = self
            .replay
            .sample(&mut self.rng, self.cfg.batch_size)?
            .into_iter()
            .cloned()
            .collect();
        let size = self.cfg.canvas_size;
        let states = sample
            .iter()
            .map(|t| t.state.restore(size, &self.canvases))
            .collect::<Result<Vec<_>>>()?;
        let next = sample
            .iter()
            .map(|t| t.next.restore(size, &self.canvases))
            .collect::<Result<Vec<_>>>()?;
        let (learner, bootstrap, adam) = if train_second {
            (&mut self.second, &self.online, &mut self.adam_second)
        } else {
            (&mut self.online, &self.second, &mut self.adam_online)
        };

        let (batch, g, l) = stack_streams(&next);
        let next_q = bootstrap.predict(&Input { batch, global: &g, local: &l })?;
        let (batch, g, l) = stack_streams(&states);
        let cache = learner.forward(&Input { batch, global: &g, local: &l })?;
        let n = sketchnet::NUM_ACTIONS;
        let scale = 1.0 / batch as f32;
        let mut loss = 0.0f64;
        let mut grad_out = Vec::with_capacity(batch * n);
        for (i, t) in sample.iter().enumerate() {
            let y = td_target(t.reward, t.terminal, &next_q[i * n..(i + 1) * n], self.cfg.discount);
            let (li, gi) = q_mse_loss(&cache.output()[i * n..(i + 1) * n], t.action, y as f32)?;
            loss += f64::from(li);
            grad_out.extend(gi.into_iter().map(|v| v * scale));
        }
        if !loss.is_finite() {
            return Err(Error::TrainingFault(format!(
                "non-finite Q loss at step {}",
                self.steps
            )));
        }
        let grads = learner.backward(&cache, &grad_out)?;
        adam.update(learner, &grads, self.cfg.learning_rate)?;
        self.updates += 1;
        Ok(())
    }

    /// Runs `steps` environment steps, reporting finished episodes.
    pub fn run(&mut self, steps: u64, mut on_episode: impl FnMut(&EpisodeLog)) -> Result<Vec<EpisodeLog>> {
        let mut episodes = Vec::new();
        for _ in 0..steps {
            if let Some(ep) = self.step()?.episode {
                on_episode(&ep);
                episodes.push(ep);
            }
        }
        Ok(episodes)
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            step: self.steps,
            rng: serde_json::json!({
                "train": RngState::capture(&self.rng),
                "episodes": self.episodes,
                "updates": self.updates,
            }),
            categories: Vec::new(),
        }
    }

    /// Online network with its optimizer state and the training RNG.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.online.clone(), self.adam_online.clone(), self.meta())
    }

    pub fn second_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.second.clone(), self.adam_second.clone(), self.meta())
    }
}
