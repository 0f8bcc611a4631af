//! Limiting two-time dynamics of spherical mixed p-spin glasses started in a
//! spherical band around a conditioned critical point.
//!
//! The crate is organised around the computations one actually runs:
//!
//! - [`model`]: mixing function `ν`, model parameters, the conditional drift
//!   polynomial `v⋆` and the confinement potential.
//! - [`volterra`]: the deterministic integro-differential solver for the
//!   correlation `C`, response `R`, overlap `q`, norm `K` and energy `H`,
//!   both with soft confinement and on the hard sphere.
//! - [`fdt`]: the one-time FDT equation and its constants.
//! - [`sk`]: the exactly solvable spherical SK case, used as an oracle.
//! - [`simulate`]: finite-N Langevin dynamics with disorder conditioned on the
//!   critical-point event.
//! - [`cli`]: config files, orchestration and CSV artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fdt;
pub mod model;
pub mod quad;
pub mod sk;
pub mod simulate;
pub mod volterra;

pub use error::{Error, Result};
pub use model::{Confinement, DriftPolynomial, MixingFunction, ModelParams};
pub use volterra::{Constraint, TwoTimeBundle, TwoTimeGrid};
