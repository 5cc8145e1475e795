//! Wave-side numerics for conical potentials: the split-step Schrödinger
//! solver, phase-space transforms, two-scale diagnostics near the singular
//! set, and the quantum/classical transport comparison.

pub mod egorov;
pub mod error;
pub mod fft;
pub mod grid;
pub mod microlocal;
pub mod phase;
pub mod solver;

pub use error::{Result, WaveError};
pub use grid::{Axis, Grid, WavefunctionGrid};
pub use phase::{apply_weyl, husimi, pair_symbol, pair_symbol_state, wigner_transform, PhaseSpaceField};
pub use solver::{evolve, make_initial_state, strang_step, Evolution, Propagator};
