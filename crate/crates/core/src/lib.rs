//! Numerical core for Hamiltonian dynamics with conical potentials
//! `V = w |g| + V0`: the potential model, the broken classical flow through
//! the singular set, phase-space symbols and particle measures.
//!
//! `no_std` with `alloc`; file formats, FFTs and the CLI live elsewhere.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cheb;
pub mod cutoff;
pub mod error;
pub mod field;
pub mod flow;
pub mod linalg;
pub mod measure;
pub mod ode;
pub mod potential;
pub mod symbol;

pub use error::{Error, Result};
pub use field::{ConstraintSpec, Polynomial, ScalarField};
pub use flow::{flow_map, variational_jacobian, BrokenTrajectory, CrossingEvent, FlowOptions, PhasePoint};
pub use potential::{ConicalPotential, PotentialSpec, Tolerances};
pub use measure::{InitialStateSpec, ParticleMeasure};
pub use symbol::{PhaseWindow, Symbol, SymbolSpec};
