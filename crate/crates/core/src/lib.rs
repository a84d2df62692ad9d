#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Numerical toolkit for Abelian vortices on compact Riemann surfaces and
//! their coupling to the background Kähler metric.

pub mod energy;
pub mod error;
pub mod geodesics;
pub mod gravity;
pub mod higgs;
pub mod linalg;
pub mod special;
pub mod surface;
pub mod vortex;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
