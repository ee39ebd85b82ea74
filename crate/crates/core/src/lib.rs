//! Localized ground states of nonlinear Dirac equations on metric graphs.
//!
//! The pipeline runs from a [`graph::MetricGraph`] through the staggered-grid
//! operator and its spectral splitting ([`discretization`]) to the energy
//! functionals ([`energy`]) and the generalized Nehari solver ([`nehari`]).
//! [`concentration`] localizes solutions near potential wells and
//! [`verification`] collects independent oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod concentration;
pub mod discretization;
pub mod energy;
pub mod graph;
pub mod model;
pub mod nehari;
pub mod verification;

#[cfg(feature = "cli")]
pub mod cli;
#[cfg(feature = "cli")]
pub mod config;
#[cfg(feature = "cli")]
pub mod output;
