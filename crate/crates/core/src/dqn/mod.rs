//! Reward, replay, behaviour policy and the two training loops.

pub mod policy;
pub mod pretrain;
pub mod replay;
pub mod reward;
pub mod trainer;

pub use policy::{argmax, epsilon_greedy, epsilon_greedy_with, td_target};
pub use pretrain::{EpochLog, Pretrainer};
pub use replay::{ReplayBuffer, StateDescriptor, Transition};
pub use reward::{eval_similarity_percent, is_slow, regime, similarity_s, step_reward, Regime};
pub use trainer::{DqnTrainer, EpisodeLog, Reference};
