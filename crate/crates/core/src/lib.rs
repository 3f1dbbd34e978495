//! Lancaster bivariate distributions whose coordinates have strictly linear
//! regression on each other while their maximal correlation exceeds the
//! absolute Pearson correlation.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrature`]: Gauss-Legendre rules on intervals and rectangles.
//! * [`orthopoly`]: marginal densities and their orthonormal polynomial
//!   systems (Stieltjes procedure), with sup-norm constants.
//! * [`lancaster`]: coefficient sequences, the joint density, conditional
//!   densities and a rejection sampler.
//! * [`correlation`]: Pearson correlation and three routes to the maximal
//!   correlation (closed form, kernel singular values, ACE).
//! * [`regression`]: conditional-expectation identities and the
//!   counterexample report.
//! * [`cli`]: the `lancaster-lab` command-line front end.

// `!(x > t)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod correlation;
pub mod error;
pub mod fixtures;
pub mod ks;
pub mod lancaster;
pub mod orthopoly;
pub mod quadrature;
pub mod regression;

pub use error::{Error, Result};
