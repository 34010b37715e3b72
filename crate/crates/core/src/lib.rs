//! Vlasov-Poisson-Boltzmann simulation for soft potentials in bounded convex
//! domains with in-flow boundary data.

pub mod checks;
pub mod collision;
pub mod config;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod field;
pub mod kinematics;
pub mod lattice;
pub mod quadrature;
pub mod scenario;
pub mod solver;
pub mod sphere;
pub mod vec3;
pub mod weights;

pub use error::{Error, Result};
