//! Numerical checks for planar maps that satisfy `|Df|^2 <= K J_f + Sigma`.

// Negated comparisons are used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cusp;
pub mod family;
pub mod fields;
pub mod geometry;
pub mod lemmas;
pub mod quadrature;
pub mod sampling;
pub mod special_fn;
pub mod spiral;
