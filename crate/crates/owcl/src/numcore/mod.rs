//! Dense numerics: matrices, layers, losses, optimizers, seeded RNG and a
//! finite-difference gradient checker. Everything is f64 and deterministic
//! given explicit `Rng` state.

mod gradcheck;
mod layer;
pub mod loss;
mod matrix;
mod optim;
mod rng;

pub use gradcheck::grad_check;
pub use layer::{init_limit, Activation, DenseLayer, LayerGrads};
pub use loss::{cross_entropy, log_sum_exp, softmax, squared_error};
pub use matrix::Matrix;
pub use optim::{OptimizerKind, OptimizerState};
pub use rng::Rng;
