//! Dense numerics shared by every learning component.

pub mod gradcheck;
mod matrix;
mod ops;
pub mod optim;

pub use gradcheck::finite_diff_grad;
pub use matrix::{argmax, cosine_similarity, dot, Matrix};
pub use ops::{activate, cross_entropy, cross_entropy_with_grad, relu, sigmoid, softmax_rows, Activation};
pub use optim::{AdamConfig, AdamState, GradTape, Parameterized};
