//! Numerical tools around the surface (s, t, s^2, t^2, st) in R^5: quadratic
//! Vinogradov counts, Weyl sums and extension integrals, transversality
//! certificates for ten tangent planes, transverse square selection, plate
//! integrals and the decoupling exponent iteration.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoupling;
pub mod error;
pub mod expsum;
pub mod geom;
pub mod kakeya;
pub mod mvt;
pub mod numerics;
pub mod select;
mod stiefel;
pub mod transversality;

pub use error::{Error, Result};
