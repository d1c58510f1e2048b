//! Quadrature polynomials and the linear symplectic maps acting on them.

mod poly;
mod symplectic;

pub use poly::{gradient_polys, shift_polynomial, Exponents, QuadraturePolynomial};
pub use symplectic::{conjugate, GaussianParams, SymplecticTransform, SYMPLECTIC_TOL};
