//! Byzantine-robust distributed optimization under generalized smoothness.
//!
//! The crate simulates normalized momentum SGD with robust aggregation
//! (and two unnormalized baselines) against Byzantine workers, and ships
//! numerical checks for the smoothness and robustness properties the method
//! relies on.

pub mod aggregators;
pub mod attacks;
pub mod engine;
mod error;
pub mod harness;
pub mod objectives;
pub mod rng;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use vector::Vector;
