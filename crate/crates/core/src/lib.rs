//! Rotation numbers for one-dimensional Schrödinger operators whose potential
//! combines a piecewise-continuous almost periodic background, jump
//! discontinuities along a point lattice, and delta interactions of prescribed
//! strengths at the lattice points.
//!
//! The crate is organised around the Prüfer angle of the solution vector
//! `(psi', psi)`: between lattice points the angle obeys a smooth scalar ODE,
//! and at a lattice point carrying a delta of strength `v` it jumps by a
//! homotopy-defined amount `J(v, theta)`. Averaging the angle over long
//! trajectories yields the rotation number `rho(E)`.
//!
//! Modules:
//!
//! - [`apmodels`] — lazily evaluated point sets, bounded bi-sequences and
//!   generalized potentials, with shift actions, the point-set metric,
//!   entourage membership, almost-periodicity diagnostics, densities and
//!   mean values;
//! - [`prufer`] — the angle dynamics: the jump function, per-gap Runge-Kutta
//!   integration, lattice stepping and the skew-product observable;
//! - [`transfer`] — the SL(2, R) layer: gap propagators, delta jump matrices,
//!   polar decomposition and exact constant-coefficient propagators;
//! - [`rotnum`] — rotation-number estimation, energy scans and plateau
//!   detection;
//! - [`oracle`] — independent references: closed-form rotation numbers,
//!   the Kronig-Penney discriminant, circle-map rotation numbers for periodic
//!   configurations and exact piecewise evolution;
//! - [`cli`] — JSON configuration and the command-line subcommands.

pub mod apmodels;
pub mod cli;
pub mod error;
pub mod oracle;
pub mod prufer;
pub mod rotnum;
pub mod transfer;

pub use error::{Error, Result};
