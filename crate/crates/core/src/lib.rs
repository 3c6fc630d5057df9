//! Numerical homogenization for first-order Hamilton-Jacobi equations.

pub mod error;
pub mod grid;
pub mod hamiltonians;
pub mod scheme;
pub mod ergodic;
pub mod effective;
pub mod multiscale;
pub mod corpus;
pub mod cli;

pub use error::{Error, Result};
pub use grid::{Field, TorusGrid};
