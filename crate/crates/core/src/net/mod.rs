//! Conv + LSTM policy network with hand-written reverse-mode gradients.

pub mod backward;
pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod params;

use num_traits::Float;
use std::fmt::Debug;
use std::iter::Sum;

pub use backward::{backward, bc_loss, sequence_loss, window_grad, window_grad_weighted, Frame, LossWeights};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use config::{count_params, ConfigError, EncoderDims, NetworkConfig, PRESET_NAMES};
pub use forward::{forward, forward_step, Activations, ActionDistribution, HiddenState, InferenceNet, Mode, NetError};
pub use params::{init_params, DenseSlot, Layout, NetworkParams};

/// Scalar type the network runs in: `f64` for training, `f32` for inference.
pub trait Real: Float + Sum + Send + Sync + Debug + 'static {
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;

    fn sigmoid(z: Self) -> Self {
        let one = Self::one();
        if z >= Self::zero() {
            one / (one + (-z).exp())
        } else {
            let e = z.exp();
            e / (one + e)
        }
    }
}

impl Real for f32 {
    fn from_f32(v: f32) -> Self {
        v
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}
