//! Dense and sparse kernels, activations, dropout, the seeded generator,
//! Adam, and the finite-difference gradient checker.
//!
//! Every differentiable layer in this crate follows the same contract: a
//! forward function returns its output together with a cache, and a backward
//! function maps `(cache, upstream gradient)` to input and parameter gradients.

pub mod activation;
pub mod adam;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod linear;
pub mod rng;
pub mod sparse;

pub use activation::{leaky_relu, log_sigmoid, prelu, sigmoid, softmax, softplus};
pub use adam::{adam_step, AdamState};
pub use dense::DenseMatrix;
pub use dropout::{dropout, dropout_sparse};
pub use gradcheck::{GradCheck, GradCheckReport, Probe};
pub use linear::{InputGradient, RowOperand};
pub use rng::Rng;
pub use sparse::{CsrMatrix, SparseAdjacency};
