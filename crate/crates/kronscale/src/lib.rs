//! Arithmetic circuits built from Kronecker-scaling decompositions of
//! balanced tripartitioning tensors, and their use in exact counting and
//! algebraic detection algorithms.

pub mod algebra;
pub mod circuit;
pub mod cli;
pub mod coeffx;
pub mod counting;
pub mod error;
pub mod matchcon;
pub mod scaling;
pub mod sieving;
pub mod steinitz;
pub mod tensor;

pub use algebra::{FieldElement, FieldSpec, Matrix, Rng};
pub use circuit::{Builder, Circuit, Gate, GateId, Name};
pub use error::{Error, Result};
