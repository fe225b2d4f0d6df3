//! Exact refinement certificates and measure-preserving homeomorphism tables
//! for Bernoulli product measures on the Cantor space.
//!
//! The crate is organized bottom-up:
//!
//! * [`numberfield`] exact arithmetic in `Q(r)`, root isolation and signs;
//! * [`cylinder`] cylinder sizes, addresses, tree partitions and witnesses;
//! * [`binomial`] binomial representations and the bounded search engine;
//! * [`rewrite`] the move calculus with identity-tracked traces;
//! * [`refiner`] refinement strategies behind a registry, certificates and
//!   the rational obstruction checker;
//! * [`homeo`] the back-and-forth construction of clopen bijection tables.

pub mod binomial;
pub mod cylinder;
pub mod error;
pub mod homeo;
pub mod numberfield;
pub mod refiner;
pub mod rewrite;

pub use error::{Error, Fuel, Result};
