//! Zeros of polynomial combinations of Euler products in the half-plane of absolute convergence.

pub mod arith;
pub mod character;
pub mod density;
pub mod error;
pub mod euler;
pub mod hurwitz;
pub mod lfunc;
pub mod phase;
pub mod poly;
pub mod primes;
pub mod special;
pub mod twist;

pub use error::{Error, Result};
