//! Dense linear algebra, proximal maps, seeded randomness and a gradient tape.

mod eig;
pub mod linalg;
mod matrix;
mod prox;
mod rng;
mod tape;

pub use eig::{sym_eig, SymEig};
pub use matrix::Matrix;
pub use prox::{logdet_prox, soft_threshold, soft_threshold_matrix, soft_threshold_offdiag};
pub use rng::SeededRng;
pub use tape::{grad_check, sigmoid, Gradients, Tape, Var};
