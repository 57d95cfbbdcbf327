//! Free holomorphic function theory on the noncommutative unit ball,
//! realized at finite Fock truncation.

pub mod error;
pub mod fock;
pub mod freeseries;
pub mod linalg;
pub mod mobius;
pub mod charfun;
pub mod cli;
pub mod opmodel;
pub mod poisson;

pub use error::{Error, Result};
