//! Hybrid quantum-classical master equations.
//!
//! States are hybrid densities `ρ̂(x)` over a classical index. The crate
//! provides measurement channels that produce them, the classical (Pauli),
//! quantum (Lindblad) and hybrid generators that evolve them, an exact
//! enlarged-space Lindblad embedding used as a consistency oracle, and the
//! position-monitoring equation with a repeated-measurement Monte Carlo
//! sampler to check it against.

pub mod error;
pub mod generators;
pub mod hybrid_me;
pub mod hybrid_state;
pub mod json;
pub mod linalg;
pub mod measurement;
pub mod monitoring;
pub mod random;
pub mod runtime;
pub mod space;

pub use error::{Error, Result};
