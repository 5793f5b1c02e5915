//! Minimal dense tensor engine with define-by-run reverse-mode differentiation.
//!
//! Values live in [`Tensor`], a row-major `f64` buffer with a shape. Computations
//! that need gradients are recorded on a [`Tape`]: every operation applied to a
//! [`Var`] appends a node holding its output value and a closure that maps the
//! output gradient back onto its inputs. [`Tape::backward`] walks the nodes in
//! reverse recording order and returns the accumulated [`Gradients`].
//!
//! ```
//! use dvlnav_tensor::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let w = tape.leaf(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
//! let x = tape.constant(Tensor::new(&[2, 1], vec![1.0, -1.0]).unwrap());
//! let y = w.matmul(x).unwrap().tanh().sum();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(w).unwrap().shape(), &[2, 2]);
//! assert!(grads.get(x).is_none());
//! ```
//!
//! Shapes are never broadcast implicitly. The exceptions are documented on the
//! operation: batch dimensions of [`Var::matmul`], the bias vector of
//! [`Var::add_bias`], and [`Var::expand_batch`].

mod error;
mod ops;
mod tape;
mod tensor;

pub use error::TensorError;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
