//! Run configuration: a flat JSON object of hyperparameters.
//!
//! Keys follow the hyperparameter table names in snake_case. Where the
//! pre-training and Q-learning blocks share a name (`learning_rate`,
//! `total_strokes`) the plain key is the Q-learning value and the
//! pre-training one carries a `pretrain_` prefix. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sketchnet::Activation;

use crate::error::{Error, Result};
use crate::gridmap::GridmapConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,

    pub canvas_size: usize,
    pub local_patch_size: usize,
    pub number_of_actions: usize,
    pub discount: f64,
    pub experience_replay_size: usize,
    pub batch_size: usize,

    #[serde(alias = "pretrain_epochs")]
    pub epochs: u64,
    pub pretrain_learning_rate: f64,
    pub pretrain_total_strokes: usize,
    /// Held-out oracle episodes scored after pre-training.
    pub pretrain_heldout_episodes: u64,

    pub target_update_frequency: u64,
    pub epsilon: f64,
    pub pixel_strokes: usize,
    pub total_strokes: usize,
    pub max_total_strokes: u64,
    pub learning_rate: f64,
    /// Use the two-estimator coin-flip update instead of a periodically
    /// synced target network.
    pub double_q_coin_flip: bool,
    pub fc1_activation: Activation,

    pub similarity_scale: f64,
    pub p_step: f64,
    pub slow_threshold: i32,
    /// Reward used in the θ regime for categories the classifier was not
    /// trained on.
    pub untrained_category_theta: f64,

    pub classifier_learning_rate: f64,
    pub classifier_epochs: u64,
    pub classifier_batch_size: usize,
    /// Fraction of each category's train split held out for accuracy.
    pub classifier_heldout_fraction: f64,

    pub train_dataset_size: usize,
    pub train_dataset_per_category: bool,
    pub recognized_only: bool,

    pub gridmap_l1: f64,
    pub gridmap_l2: f64,
    pub gridmap_origin_x: f64,
    pub gridmap_origin_y: f64,
    pub gridmap_z_canvas: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            canvas_size: 84,
            local_patch_size: 11,
            number_of_actions: 242,
            discount: 0.9,
            experience_replay_size: 10_000,
            batch_size: 128,
            epochs: 60_000,
            pretrain_learning_rate: 1e-5,
            pretrain_total_strokes: 100,
            pretrain_heldout_episodes: 50,
            target_update_frequency: 10_000,
            epsilon: 0.1,
            pixel_strokes: 100,
            total_strokes: 150,
            max_total_strokes: 150_000,
            learning_rate: 1e-6,
            double_q_coin_flip: false,
            fc1_activation: Activation::Linear,
            similarity_scale: 1000.0,
            p_step: 0.02,
            slow_threshold: 5,
            untrained_category_theta: 0.0,
            classifier_learning_rate: 1e-4,
            classifier_epochs: 5,
            classifier_batch_size: 64,
            classifier_heldout_fraction: 0.1,
            train_dataset_size: 3000,
            train_dataset_per_category: true,
            recognized_only: false,
            gridmap_l1: 0.005,
            gridmap_l2: 0.020,
            gridmap_origin_x: 0.0,
            gridmap_origin_y: 0.0,
            gridmap_z_canvas: 0.0,
        }
    }
}

/// The reward terms, split out for the reward functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub similarity_scale: f64,
    pub p_step: f64,
    pub pixel_strokes: usize,
    pub total_strokes: usize,
    pub slow_threshold: i32,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Config::default().reward()
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            similarity_scale: self.similarity_scale,
            p_step: self.p_step,
            pixel_strokes: self.pixel_strokes,
            total_strokes: self.total_strokes,
            slow_threshold: self.slow_threshold,
        }
    }

    pub fn gridmap(&self) -> GridmapConfig {
        GridmapConfig {
            l1: self.gridmap_l1,
            l2: self.gridmap_l2,
            origin: [self.gridmap_origin_x, self.gridmap_origin_y],
            z_canvas: self.gridmap_z_canvas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.canvas_size != sketchnet::CANVAS_SIZE {
            return fail(format!("canvas_size must be {}", sketchnet::CANVAS_SIZE));
        }
        if self.local_patch_size != sketchnet::PATCH_SIZE {
            return fail(format!("local_patch_size must be {}", sketchnet::PATCH_SIZE));
        }
        if self.number_of_actions != sketchnet::NUM_ACTIONS {
            return fail(format!("number_of_actions must be {}", sketchnet::NUM_ACTIONS));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return fail(format!("discount {} outside [0, 1]", self.discount));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.experience_replay_size == 0 || self.batch_size == 0 || self.classifier_batch_size == 0 {
            return fail("replay size and batch sizes must be positive".into());
        }
        if self.total_strokes == 0 || self.pretrain_total_strokes == 0 {
            return fail("total_strokes must be positive".into());
        }
        if self.pixel_strokes > self.total_strokes {
            return fail(format!(
                "pixel_strokes {} exceeds total_strokes {}",
                self.pixel_strokes, self.total_strokes
            ));
        }
        if self.target_update_frequency == 0 {
            return fail("target_update_frequency must be positive".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("pretrain_learning_rate", self.pretrain_learning_rate),
            ("classifier_learning_rate", self.classifier_learning_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be a positive number"));
            }
        }
        if !(self.similarity_scale.is_finite() && self.similarity_scale > 0.0) || !self.p_step.is_finite() {
            return fail("similarity_scale must be positive and p_step finite".into());
        }
        if !(0.0..1.0).contains(&self.classifier_heldout_fraction) {
            return fail("classifier_heldout_fraction must be in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.untrained_category_theta) {
            return fail("untrained_category_theta must be in [0, 1]".into());
        }
        self.gridmap().validate()
    }
}
