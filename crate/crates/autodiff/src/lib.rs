//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! ```
//! use pbnco_autodiff::{Matrix, Tape};
//!
//! let params = vec![Matrix::from_vec(2, 1, vec![0.5, -1.0])];
//! let mut tape = Tape::with_params(&params);
//! let x = tape.input(Matrix::row(&[2.0, 3.0]));
//! let w = tape.param(0).unwrap();
//! let y = tape.matmul(x, w).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(tape.scalar(y), -2.0);
//! assert_eq!(grads.param(0).unwrap().data(), &[2.0, 3.0]);
//! ```

mod matrix;
pub mod optim;
mod tape;

pub use matrix::Matrix;
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, GradBuffer};
pub use tape::{log_sigmoid, sigmoid, AutodiffError, Gradients, Mask, Result, Tape, Var, LAYER_NORM_EPS};
