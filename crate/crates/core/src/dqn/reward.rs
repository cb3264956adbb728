//! Similarity and per-step reward.

use crate::canvas::Canvas;
use crate::config::RewardConfig;
use crate::env::StepInfo;
use crate::error::{Error, Result};

fn squared_error(gen: &Canvas, reference: &Canvas) -> Result<f64> {
    if gen.size() != reference.size() {
        return Err(Error::Contract(format!(
            "canvas sizes differ: {} vs {}",
            gen.size(),
            reference.size()
        )));
    }
    Ok(gen
        .pixels()
        .iter()
        .zip(reference.pixels())
        .map(|(&g, &r)| (f64::from(r) - f64::from(g)).powi(2))
        .sum())
}

/// `α · Σ (P_ref − P_gen)² / M²`.
pub fn similarity_s(gen: &Canvas, reference: &Canvas, alpha_sim: f64) -> Result<f64> {
    let m2 = (gen.size() * gen.size()) as f64;
    Ok(alpha_sim * squared_error(gen, reference)? / m2)
}

/// `100 · (1 − Σ (P_ref − P_gen)² / M²)`.
pub fn eval_similarity_percent(gen: &Canvas, reference: &Canvas) -> Result<f64> {
    let m2 = (gen.size() * gen.size()) as f64;
    Ok(100.0 * (1.0 - squared_error(gen, reference)? / m2))
}

/// Whether a move counts as slow: under `threshold` cells on both axes.
pub fn is_slow(info: &StepInfo, threshold: i32) -> bool {
    info.dx.abs() < threshold && info.dy.abs() < threshold
}

/// Which branch produced a step's reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Pixel,
    Theta,
}

pub fn regime(cfg: &RewardConfig, k: usize) -> Result<Regime> {
    if k >= cfg.total_strokes {
        return Err(Error::Contract(format!(
            "step {k} outside [0, {})",
            cfg.total_strokes
        )));
    }
    Ok(if k < cfg.pixel_strokes { Regime::Pixel } else { Regime::Theta })
}

/// Reward for the step taken at counter `k`. Pixel regime:
/// `(s_k − s_k1) − p_step·[slow]`; afterwards: `theta`.
pub fn step_reward(cfg: &RewardConfig, k: usize, slow: bool, s_k: f64, s_k1: f64, theta: f64) -> Result<f64> {
    Ok(match regime(cfg, k)? {
        Regime::Pixel => (s_k - s_k1) - if slow { cfg.p_step } else { 0.0 },
        Regime::Theta => theta,
    })
}
