//! Minimal differentiable-computation kit.
//!
//! Everything works on single examples (vectors) with explicit forward caches
//! and hand-written backward passes. Parameters live in a [`ParamStore`];
//! backward passes accumulate into a [`Gradients`] buffer so independent
//! examples can be differentiated in parallel and summed afterwards.

mod checkpoint;
mod init;
mod layers;
mod loss;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use init::{dropout, xavier_bound, xavier_init, DropoutMask, Mode};
pub use layers::{
    dense_backward, dense_forward, Activation, Dense, Embedding, LstmCache, LstmCell,
};
pub use loss::{bce_grad, bce_loss, log_prob_grad, masked_softmax, BCE_EPS};
pub use optim::{clip_gradients, Optimizer, OptimizerKind};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
