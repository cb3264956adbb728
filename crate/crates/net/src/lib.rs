//! Convolutional Q-network and sketch classifier for the drawing agent.
//!
//! The topologies are fixed (see [`arch`]); layers are evaluated with
//! im2col + GEMM and differentiated by hand. Parameters are generic over
//! [`Real`] so the same code runs in `f32` for training and `f64` for
//! gradient checks.

pub mod adam;
pub mod arch;
pub mod checkpoint;
pub mod error;
pub mod loss;
pub mod network;
pub mod scalar;

pub use adam::{AdamHyper, AdamState};
pub use arch::{
    Activation, Architecture, ModelKind, CANVAS_SIZE, GLOBAL_CHANNELS, NUM_ACTIONS, PATCH_SIZE,
    Q_NETWORK_PARAMS,
};
pub use checkpoint::{Checkpoint, CheckpointMeta, Manifest};
pub use error::{NetError, Result};
pub use loss::{cross_entropy_loss, q_mse_loss, softmax};
pub use network::{ActivationShape, ForwardCache, Gradients, Input, Network};
pub use scalar::Real;
