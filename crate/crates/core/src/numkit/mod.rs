//! Dense-vector numeric kernel: matrices, seeded RNG, activations, dense
//! layers with analytic gradients and a finite-difference checker.

mod dense;
mod gradcheck;
mod matrix;
mod rng;

pub use dense::{elu, elu_derivative, sigmoid, Activation, DenseCache, DenseGrads, DenseLayer};
pub use gradcheck::grad_check;
pub use matrix::{dot, l2_norm, Matrix};
pub use rng::Rng;
