//! Quantum-circuit instantiation engine.
//!
//! Solves for the gate unitaries of a circuit template so that the circuit
//! implements a given target unitary. Two optimizer backends are provided: a
//! full-unitary backend working on dense `2^n x 2^n` matrices, and a sampled
//! backend that trains on a small set of input states and grows the training
//! set on the fly when it detects overfitting. On top of the optimizers sits
//! a partition-based gate-deletion re-synthesis pass.

pub mod circuit;
pub mod error;
pub mod numerics;
pub mod optimizer;
pub mod resynth;
pub mod sim;

pub use error::{Error, Result};

// Downstream crates build matrices from raw complex values.
pub use num_complex;
