//! Minimal dense linear algebra and reproducible counter-based random streams.

mod matrix;
mod rng;

pub use matrix::{matmul, Matrix};
pub use rng::RandomStream;
