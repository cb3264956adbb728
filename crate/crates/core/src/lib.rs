pub mod canvas;
pub mod env;
pub mod error;
pub mod quickdraw;

pub use error::{Error, Result};
pub mod oracle;
pub mod rng;
pub mod config;
pub mod classifier;
pub mod dqn;
pub mod synthetic;
pub mod gridmap;
pub mod eval;
