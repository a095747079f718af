//! Neural network building blocks on top of the tensor tape: convolutions
//! (standard, fractional-strided, deformable), activations, p-norm pooling,
//! batch norm, parameterized layers, and the gradient-check harness.

pub mod act;
pub mod conv;
pub mod deform;
pub mod gradcheck;
pub mod layers;
pub mod norm;
pub mod pool;

pub use act::{leaky_relu, relu, selu, SELU_ALPHA, SELU_LAMBDA};
pub use conv::{conv2d, conv_out_len, conv_transpose2d, conv_transpose_out_len};
pub use deform::{bilinear_sample, deform_conv2d};
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d, DeformConv2d, Dense, Init};
pub use norm::{batch_norm, BnMode, RunningStats};
pub use pool::{pnorm_pool, Norm};
