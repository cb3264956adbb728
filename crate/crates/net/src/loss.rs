use crate::error::{NetError, Result};
use crate::scalar::Real;

/// Max-subtracted softmax; finite for any finite logits.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &e| a + e);
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]` and its gradient `softmax − onehot(label)`.
pub fn cross_entropy_loss<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(NetError::Shape(format!(
            "label {label} outside {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = logits.iter().fold(T::zero(), |a, &z| a + (z - max).exp());
    let log_sum = sum.ln();
    let loss = -(logits[label] - max - log_sum);
    let mut grad: Vec<T> = logits.iter().map(|&z| (z - max - log_sum).exp()).collect();
    grad[label] = grad[label] - T::one();
    Ok((loss, grad))
}

/// `(q[action] − target)²`, gradient nonzero only at `action`.
pub fn q_mse_loss<T: Real>(q: &[T], action: usize, target: T) -> Result<(T, Vec<T>)> {
    if action >= q.len() {
        return Err(NetError::Shape(format!("action {action} outside {} outputs", q.len())));
    }
    let diff = q[action] - target;
    let mut grad = vec![T::zero(); q.len()];
    grad[action] = diff + diff;
    Ok((diff * diff, grad))
}
