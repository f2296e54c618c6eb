//! Inf-sup stable Petrov-Galerkin discretization of a kinetic Fokker-Planck
//! equation on (0,T) x (0,1)^2 x S^1, with a problem-dependent trial space
//! built from low-dimensional velocity elliptic solves, a discrete inf-sup
//! analyzer, and convergence/sparsity study harnesses.

pub mod assembly;
pub mod error;
pub mod infsup;
pub mod mesh;
pub mod problems;
pub mod spaces;
pub mod spacetime;
pub mod sparse;
pub mod velocity;

pub use error::{Error, Result};
