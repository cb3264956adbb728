use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::network::{Gradients, Network};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub hyper: AdamHyper,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &Network<T>, hyper: AdamHyper) -> Self {
        let zeros: Vec<Vec<T>> = net.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            hyper,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam step. Parameters are left untouched when any
    /// gradient entry is non-finite.
    pub fn update(&mut self, net: &mut Network<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        if grads.tensors.len() != self.m.len()
            || grads.tensors.iter().zip(&self.m).any(|(g, m)| g.len() != m.len())
        {
            return Err(NetError::Shape("gradient shapes do not match optimizer state".into()));
        }
        if let Some((ti, i)) = grads
            .tensors
            .iter()
            .enumerate()
            .find_map(|(ti, g)| g.iter().position(|v| !v.is_finite()).map(|i| (ti, i)))
        {
            return Err(NetError::TrainingFault(format!(
                "non-finite gradient in tensor {ti} at index {i} (value {:?}) at adam step {}",
                grads.tensors[ti][i],
                self.t + 1
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let AdamHyper { beta1, beta2, epsilon } = self.hyper;
        let b1 = T::from_f64_lossy(beta1);
        let b2 = T::from_f64_lossy(beta2);
        let one = T::one();
        let corr1 = T::from_f64_lossy(1.0 - beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - beta2.powi(t));
        let lr = T::from_f64_lossy(lr);
        let eps = T::from_f64_lossy(epsilon);
        let params = net.tensors_mut();
        for (((p, g), m), v) in params.iter_mut().zip(&grads.tensors).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
