//! Exact discrete Malliavin-Dirichlet calculus for conditionally independent
//! random variables on finite product probability spaces.
//!
//! The library enumerates small models exactly, so every operator identity
//! (integration by parts, chaos orthogonality, semigroup spectral form,
//! covariance representations, fourth-moment bounds) can be checked to
//! floating-point accuracy rather than statistically. Monte Carlo enters only
//! where it is the object of study: Glauber dynamics and motif counting in
//! random hypergraphs.

// `!(x >= 0.0)` is the deliberate idiom for rejecting NaN along with the
// out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod error;
pub mod fixtures;
pub mod glauber;
pub mod hypergraph;
pub mod model;
pub mod normal;
pub mod ops;
pub mod rngutil;
pub mod ustat;

pub use error::{Error, Result};
