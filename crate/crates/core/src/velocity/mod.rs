//! Time-conditional residual MLP velocity fields.
//!
//! Layout of one evaluation:
//!
//! ```text
//! [x_t ‖ proj(fourier(t)) (‖ embed(c))] → Linear → SiLU
//!     → blocks × { h + SiLU(Linear(SiLU(Linear(h)))) }
//!     → Linear → velocity
//! ```

mod embed;
mod net;

pub use embed::{clamp_time, fourier_features, TimeEmbedConfig};
pub use net::{
    tensor_names, ActivationCache, GradientBuffer, Linear, NetConfig, NetMode, ParamSet,
    VelocityNet,
};
