//! Laplacian coflow of coclosed G2-structures on seven-dimensional
//! almost-abelian Lie algebras, reduced to an ODE on a six-dimensional
//! SU(3)-structure, together with the soliton test.

pub mod almost_abelian;
pub mod coflow;
pub mod error;
pub mod io;
pub mod multilinear;
pub mod normal_form;
pub mod ode;
pub mod quadrature;
pub mod soliton;
pub mod stable_forms;

pub use error::{Error, Result};
pub use multilinear::{Endomorphism, KForm, Metric, MultiIndex};
