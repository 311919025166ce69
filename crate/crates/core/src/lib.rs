//! Exact tensor-network simulator for the two-dimensional transverse-field
//! Ising model.
//!
//! The crate builds projected entangled pair states (PEPS) over an `L_h x L_w`
//! lattice, contracts the closed double-layer networks that arise from norms
//! and expectation values without any environment approximation, and drives
//! imaginary-time evolution with truncated bond updates. Contraction runs
//! either sequentially or on a four-worker message-passing engine that
//! reproduces the same bits while accounting for every transferred byte.
//!
//! Module map:
//! - [`tensor`]: labeled dense tensors, pairwise contraction, truncated SVD
//! - [`network`]: closed grid networks and deterministic generators
//! - [`plan`]: row / quadrant / banded contraction schedules and cost replay
//! - [`engine`]: four-worker channel executor with message statistics
//! - [`lattice`]: PEPS state, amplitudes, double-layer construction
//! - [`checkpoint`]: binary snapshot format for lattices
//! - [`observables`]: magnetizations, correlators, energy reports
//! - [`ite`]: imaginary-time evolution with Trotter gates
//! - [`ed`]: matrix-free exact diagonalization oracle

pub mod checkpoint;
pub mod ed;
pub mod engine;
pub mod ite;
pub mod lattice;
pub mod network;
pub mod observables;
pub mod plan;
pub mod rng;
pub mod tensor;

pub(crate) mod par;
