//! Genetic-algorithm search over CNN topologies built from skip blocks and
//! pooling layers, with wall-time regularised fitness and partial training.

pub mod cli;
pub mod data;
pub mod engine;
pub mod evaluator;
pub mod genome;
pub mod nn;
pub mod operators;
