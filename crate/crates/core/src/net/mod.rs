//! The layered network: neural gates, blocks, pooled loss and exact
//! gradients.

mod block;
mod gate;
mod loss;

pub use block::{init_block, max_init_scale, pool, Block, LayeredNet};
pub use gate::{hard_tanh, pattern_vec, relu, NeuralGate, NotSaturated, SATURATION_TOLERANCE};
pub use loss::{
    block_gradient, hinge, pooled_loss, regularizer, sample_loss, sample_loss_slope, Batch, BlockGradient,
    GateCoefficients, LossParams,
};
