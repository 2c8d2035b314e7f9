//! Dense kernels, the reverse-mode pieces used by the velocity network, and
//! seed derivation.

mod matrix;
mod seeds;

pub use matrix::{
    column_sums, linear_forward, matmul, matmul_at_b, sigmoid, silu, silu_grad_scalar,
    silu_scalar, Matrix, Real,
};
pub use seeds::derive_seed;
