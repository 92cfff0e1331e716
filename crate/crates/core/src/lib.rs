//! Numerical laboratory for the bipartite spin glass: Hamilton-Jacobi
//! approximations of the limit free energy, small-N simulation, and checks of
//! the finite identities that relate the two.

pub mod cascade;
pub mod cone;
pub mod error;
pub mod free_energy;
pub mod harness;
pub mod hj;
pub mod linalg;
pub mod measures;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
