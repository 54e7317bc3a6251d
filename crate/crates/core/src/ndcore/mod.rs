//! Minimal dense numeric kernel: row-major `f64` matrices, elementwise maps,
//! and a seeded deterministic RNG. Everything else in the crate builds on
//! these. Matrix operations are pure functions on immutable inputs;
//! `SeededRng` is single-owner mutable state — derive substreams instead of
//! sharing one generator across tasks.

mod matrix;
mod rng;

pub use matrix::{dsigmoid, dtanh, map_elementwise, sigmoid, Matrix};
pub use rng::SeededRng;
