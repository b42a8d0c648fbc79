//! Minimal reverse-mode autodiff over `f64` NCHW tensors: exactly the ops the
//! upsamplers, downsamplers, discriminators and losses need.

mod graph;
mod layers;
mod params;
mod tensor;

pub use graph::{sigmoid, softplus, Grads, Graph, Var, LOGIT_CLAMP, LUMA_WEIGHTS};
pub use layers::{Conv, ConvSpec, LEAKY_SLOPE};
pub use params::{Adam, ParamId, ParamStore};
pub use tensor::{conv_out_size, Tensor};

pub(crate) use params::hex_digest;
pub(crate) use tensor::gemm_rowmajor;

#[cfg(test)]
mod tests;
