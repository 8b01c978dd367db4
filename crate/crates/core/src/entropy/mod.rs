//! Closed-form entropy changes of dense and convolutional layers.
//!
//! For an invertible linear map the output entropy is the input entropy
//! plus `log|det|`. Rectangular dense weights are embedded in a square
//! block-triangular matrix whose determinant is that of the leading square
//! block; a valid 2D convolution is an upper-triangular block-Toeplitz
//! matrix whose determinant is `c₁₁` raised to the number of outputs.

mod conv;
mod dense;
mod profile;

pub use conv::{build_conv_matrix, conv_entropy_delta, ConvMatrix, EntropyDelta};
pub use dense::{dense_entropy_delta, square_part, squarify_dense, SquarifiedDense};
pub use profile::{profile_network, LayerKind, LayerProfile, ProfileReport};
