//! Sparse graphical models for multivariate extremes.
//!
//! The crate covers the full modelling loop for multivariate Pareto
//! distributions that factorize on block graphs:
//!
//! * [`numerics`]: normal CDFs (univariate, bivariate, quasi-Monte Carlo
//!   multivariate), Cholesky factorization, a simplex optimizer and a
//!   seedable counter-based RNG.
//! * [`graphs`]: undirected graphs, chordality via maximum cardinality
//!   search, clique decompositions in running-intersection order and block
//!   graph checks.
//! * [`hr`]: Hüsler–Reiss parameter algebra, conditional independence
//!   queries, variogram completion on block graphs and densities.
//! * [`models`]: clique families and assembly of graph-structured densities.
//! * [`simulate`]: extremal-function samplers and exact rejection sampling.
//! * [`inference`]: rank standardization, censored clique likelihoods,
//!   clique-wise and joint maximum likelihood, tail correlation estimates.
//! * [`learn`]: minimum spanning trees, greedy forward selection and AIC.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod exec;
pub mod graphs;
pub mod hr;
pub mod inference;
pub mod learn;
pub mod models;
pub mod numerics;
pub mod simulate;

pub use error::{Error, Result};
