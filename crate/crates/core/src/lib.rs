//! Space-time isogeometric analysis of the heat equation with guaranteed
//! functional error majorants.

pub mod adapt;
pub mod assembly;
pub mod config;
pub mod error;
pub mod estimates;
pub mod geometry;
pub mod quadrature;
pub mod scalar;
pub mod sparse;
pub mod splines;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Real;
