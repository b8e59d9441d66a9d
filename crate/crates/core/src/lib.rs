//! Adaptive P1 finite elements for the integral fractional Laplacian on
//! polygonal domains in 2D.

pub mod afem;
pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod quadrature;
pub mod solver;

pub use error::{AfemError, Result};
