//! Group-invariant variational tomography of symmetric multi-qubit states.
//!
//! The crate builds symmetry-adapted operator bases numerically, simulates
//! noisy preparations of symmetric states, samples Pauli-projector
//! statistics, and reconstructs density matrices with a convex estimator that
//! trades relative data misfit, unmeasured probability mass and a log-det
//! mixedness term.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod measurement;
pub mod metrics;
pub mod operators;
pub mod statesim;
pub mod symmetry;

pub use error::{Result, TomoError};
pub use operators::{ComplexMatrix, DensityMatrix, HermitianOperator, PureState};
