//! Spectral-Galerkin construction of time-periodic solutions of forced
//! nonlinear beam equations `w^2 u_tt + Delta^2 u + m u = eps dF(u) + eps f`
//! on `T x T^d`.
//!
//! The pipeline follows the resonant-band reduction: cluster the spatial
//! lattice, eliminate the non-resonant band by a contraction, block
//! diagonalize the resonant potential, screen small divisors in `omega`, and
//! run the damped block-inversion iteration. A brute-force Newton solver
//! serves as an independent check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod config;
pub mod diagonalization;
pub mod driver;
pub mod equation;
pub mod field;
pub mod iteration;
pub mod lattice;
pub mod layout;
pub mod lyapunov;
pub mod nonlinearity;
pub mod oracle;
pub mod par;
pub mod small_divisors;
pub mod transform;

#[doc(hidden)]
pub mod testutil;

pub use field::{FourierField, ModeIndex, Truncation};
pub use lattice::{ClusterPartition, LatticePoint};
