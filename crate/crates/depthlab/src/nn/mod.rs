//! Minimal CPU neural-network toolkit with hand-written backprop.
//!
//! Feature maps are `ndarray::Array3<f64>` in `[channels, height, width]`
//! layout; convolutions run as im2col + matrix multiply. Everything computes
//! in f64 so analytic gradients can be validated against central finite
//! differences at tight tolerances, and checkpoint round trips are exact.
//!
//! The toolkit is deliberately small: 3x3/1x1 convolutions, group
//! normalization, SiLU, 2x average pooling / nearest upsampling, dense
//! layers, sinusoidal timestep embeddings, an encoder-decoder network built
//! from those pieces, and Adam.

pub mod adam;
pub mod layers;
pub mod unet;

pub use adam::Adam;
pub use layers::{AvgPool2, Conv2d, GroupNorm, Linear, Upsample2};
pub use unet::{sinusoidal_embedding, UNet, UNetConfig};

/// Feature map type: `[channels, height, width]`.
pub type Feat = ndarray::Array3<f64>;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// SiLU activation applied elementwise.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of SiLU.
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}
