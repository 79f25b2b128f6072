//! Adaptive P1 finite elements for phase-field eigenvalue topology optimization.

pub mod adapt;
pub mod config;
pub mod domain;
pub mod eigen;
pub mod error;
pub mod estimator;
pub mod export;
pub mod fem;
pub mod mesh;
pub mod optimizer;
pub mod quadrature;
pub mod reference;
pub mod sparse;

pub use error::{Error, Result};
