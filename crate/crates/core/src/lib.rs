pub mod error;
pub mod ansatz;
pub mod baryorbit;
pub mod config;
pub mod coulomb;
pub mod field;
pub mod groundstate;
pub mod magnetic;
pub mod solver;
pub mod symmetry;
pub mod verify;
mod fft;
mod par;

pub use error::{Error, Result};
