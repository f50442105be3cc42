//! Minimal reverse-mode automatic differentiation for small models.
//!
//! Parameters live in [`Tensor`]s owned by the caller. A forward pass binds
//! them onto a fresh [`Tape`] (as trainable leaves or as constants), records
//! every operation, and [`Tape::backward`] walks the record in reverse to
//! produce [`Gradients`]. The tape is single-use: backward consumes it.
//!
//! [`AdamW`] applies decoupled weight decay with global gradient-norm
//! clipping, and [`checkpoint`] reads and writes the shared binary tensor
//! format.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod kernels;
mod optim;
mod tape;
mod tensor;

pub use error::TensorError;
pub use kernels::{axpy, dot};
pub use optim::{AdamW, AdamWConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{checksum, Tensor};

pub type Result<T> = std::result::Result<T, TensorError>;
