//! Quadrature for regular, singular and exterior integrals.

pub mod exterior;
pub mod pairs;
pub mod rules;
pub mod weighted;

pub use exterior::{exterior_tail, FluxTable};
pub use pairs::{classify_pair, local_pair_matrix, PairConfig, PairMatrix, TouchingRules};
pub use rules::{gauss_jacobi, gauss_legendre, triangle_collapsed, QuadRule};
pub use weighted::{weighted_element_integral, weighted_subtriangle_integral};
