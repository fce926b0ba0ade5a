//! Resonance geometry of nearly integrable Hamiltonians
//! `H(θ, p, t) = H_0(p) + ε H_1(θ, p, t)` near multiple resonances.
//!
//! The pipeline runs from integer lattices to dynamics:
//!
//! * [`lattice`] builds adapted bases of resonance lattices, split into a
//!   strong part and a chain of increasingly long weak vectors.
//! * [`averaging`] projects a Fourier Hamiltonian onto a lattice and checks
//!   the decay conditions that make the split dominant.
//! * [`slowsys`] forms the slow mechanical system `K(I) - U(φ)` and its
//!   block decomposition.
//! * [`dynamics`] integrates the slow flow in several charts and measures
//!   how close the rescaled field is to the strong system.
//! * [`weakkam`] solves the discrete Lax-Oleinik problem on a grid and
//!   extracts alpha functions, barriers and calibrated curves.
//! * [`nhic`] checks isolating block conditions for time one maps and
//!   builds witnesses of the persisting cylinder.
//!
//! A guide with worked examples lives in [`guide`].

pub mod averaging;
pub mod dynamics;
pub mod error;
pub mod family;
pub mod fit;
pub mod guide;
pub mod lattice;
pub mod nhic;
pub mod sampling;
pub mod slowsys;
pub mod weakkam;

pub use error::{Error, Result};
