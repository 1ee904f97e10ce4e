//! Stochastic replicator dynamics on the probability simplex.
//!
//! The crate covers single replicators, N-particle mean-field ensembles and
//! their McKean-Vlasov limit:
//!
//! - [`simplex`]: simplex geometry, the tangent projection, payoff conditions
//!   and invasion rates.
//! - [`sde`]: Euler-Maruyama and log-abundance integrators.
//! - [`mean_field`]: interacting ensembles, empirical snapshots and the
//!   propagation-of-chaos experiment.
//! - [`mckean_vlasov`]: Beta/Dirichlet invariant laws and their fixed points.
//! - [`stats`]: samplers, special functions and goodness-of-fit tests.
//! - [`persistence`]: boundary equilibria, persistence certificates and
//!   occupation diagnostics.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. The `std` feature only adds rayon-backed parallel loops; results
//! are bit-identical either way.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod math;
mod par;

pub mod lp;
pub mod mckean_vlasov;
pub mod mean_field;
pub mod persistence;
pub mod rng;
pub mod sde;
pub mod simplex;
pub mod stats;

pub use error::{Error, Result};
pub use math::solve_linear;
