//! Quantum corrections to diffusion in corrugated channels.
//!
//! First-order Fick-Jacobs formulas live in [`fick_jacobs`]. The lattice
//! side diagonalizes a tight-binding Hamiltonian, either in thermal
//! equilibrium ([`thermal`]) or driven between two particle leads
//! ([`redfield`]). A 2D quantum Smoluchowski solver ([`smoluchowski`])
//! cross-checks the analytic density.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fick_jacobs;
pub mod grid;
pub mod lyapunov;
pub mod model;
pub mod potential;
pub mod quadrature;
pub mod redfield;
pub mod smoluchowski;
pub mod spectrum;
pub mod sweep;
pub mod thermal;

pub use error::{Error, Result};
pub use model::{ChannelParams, DerivedScales};
