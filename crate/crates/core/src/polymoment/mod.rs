//! Sparse polynomial algebra and exact Gaussian expectations.

mod gaussian;
mod polynomial;
mod table;
pub mod text;

pub use gaussian::{gaussian_covariance, gaussian_expectation, GaussianMoments, ISSERLIS_DEGREE_CAP};
pub(crate) use gaussian::symmetrize;
pub use polynomial::{poly_mul, poly_partial, Monomial, Polynomial};
pub use table::{enumerate_monomials, MomentTable};
