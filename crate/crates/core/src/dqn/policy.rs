//! Behaviour policy and bootstrap target.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(q: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Uniform random action with probability `epsilon`, else [`argmax`].
///
/// The uniform draw is skipped entirely when the explore coin says no, so
/// `epsilon = 0` consumes exactly one value per call.
pub fn epsilon_greedy(q: &[f32], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    epsilon_greedy_with(q.len(), epsilon, rng, || Ok::<_, ()>(q.to_vec())).unwrap()
}

/// [`epsilon_greedy`] over `n` actions with Q-values computed only when the
/// policy exploits. Consumes the same random values.
pub fn epsilon_greedy_with<E>(
    n: usize,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
    q: impl FnOnce() -> Result<Vec<f32>, E>,
) -> Result<usize, E> {
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..n as u32) as usize)
    } else {
        Ok(argmax(&q()?))
    }
}

/// `r` for terminal transitions, `r + γ · max next_q` otherwise.
pub fn td_target(reward: f64, terminal: bool, next_q: &[f32], gamma: f64) -> f64 {
    if terminal {
        return reward;
    }
    let max = next_q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    reward + gamma * f64::from(max)
}
