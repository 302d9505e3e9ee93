//! Homogeneous central-force problems `U_n(q) = Z |q|^(-2(1-1/n))`:
//! regularisation of collisions through an `n`-fold branched cover and a
//! global symplectic chart `(T, H, B, A)` near the singularity.

pub mod error;
pub mod integrate;
pub mod covering;
pub mod model;
pub mod chart;
pub mod verify;
pub mod cli;

pub use error::{Error, Result};
