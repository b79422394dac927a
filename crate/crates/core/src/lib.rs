pub mod atomic;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod lattice;
pub mod operators;
pub mod quadrature;
pub mod specialfn;

pub use error::{Error, Result};
