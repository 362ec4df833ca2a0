//! Numerical laboratory for the normalized Kahler-Ricci flow on S1-invariant
//! metrics on CP1, reduced to momentum profiles psi on [0,2].

pub mod cli;
pub mod config;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod runio;

pub use error::{Error, Result};
