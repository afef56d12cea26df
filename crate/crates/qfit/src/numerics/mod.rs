//! Dense complex linear algebra and random sampling primitives.

mod kernel;
mod matrix;
mod random;
mod states;
mod svd;

pub use kernel::QubitAxes;
pub use matrix::ComplexMatrix;
pub use random::{basis_states, derive_seed, haar_random_states, haar_random_unitary, stream_rng};
pub use states::{dot_flat, inner, StateSet};
pub use svd::{svd, MAX_SVD_DIM};
