//! Forward-pass denoiser blocks: the spatial convolution block (SCB),
//! channel attention with the residual-squeeze branch (RSCA), their fusion
//! into a CNN-transformer block (CTB), the measurement encoder (MEB) and
//! measurement-aware cross-attention (MACA).
//!
//! Nothing here is trained. Weights are seeded Gaussians so the math can be
//! exercised, checked for invariants and plugged into the unfolded solver.

mod checks;
mod ctb;
mod layers;
mod maca;
mod stage;
mod tensor;
mod weights;

pub use checks::{run_checks, CheckDims, CheckOutcome, CheckReport};
pub use ctb::{
    channel_attention_forward, channel_attention_traced, ctb_forward, rsca_forward, scb_forward, ChannelAttentionTrace,
};
pub use layers::{gelu, leaky_relu, softmax_rows, Conv2d, DepthwiseConv2d, Linear, ParamMut, LEAKY_RELU_SLOPE};
pub use maca::{maca_forward, maca_traced, meb_forward, AttentionCost, MacaTrace, MebOutput};
pub use stage::toy_denoiser_stage;
pub use tensor::Tensor3;
pub use weights::{
    BlockConfig, BlockWeights, ChannelAttentionWeights, CtbWeights, MacaWeights, MebWeights, ParamEntry, RscaWeights,
    ScbWeights, WeightManifest,
};
