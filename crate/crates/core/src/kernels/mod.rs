//! Hand-written forward kernels.
//!
//! Every kernel is a pure function over borrowed tensors. Reductions
//! accumulate in `f64` and round once on store; output planes are computed
//! independently so results do not depend on the thread count.

mod activation;
mod attention;
mod conv;
mod norm;
mod patch;

pub use activation::{relu, relu_inplace, silu, silu_inplace, silu_scalar};
pub use attention::{linear, multihead_self_attention, multihead_self_attention_with_probs, AttentionWeights};
pub use conv::{conv2d, conv2d_grouped, conv_out_extent, depthwise_conv2d, pointwise_conv2d, transposed_conv2d};
pub use norm::{batchnorm_inference, layernorm};
pub use patch::{concat_channels, fold, unfold};
