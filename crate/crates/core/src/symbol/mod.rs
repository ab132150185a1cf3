//! Matrix-valued trigonometric polynomials on the torus, their ω-polynomial
//! families, and the small-matrix linear algebra the engine needs.

mod linalg;
mod matrix;
mod trig;

pub use linalg::{
    det, general_eigenvalues, hermitian_eigenvalues, inverse, singular_values,
    smallest_singular_value, solve,
};
pub use matrix::ComplexMatrix;
pub use trig::{Offset, OmegaSymbol, TrigMatrixPolynomial, MAX_OMEGA_POWER};

use crate::error::Result;
use num_complex::Complex64;

/// Evaluate a trigonometric matrix polynomial at `k`.
pub fn eval_k(p: &TrigMatrixPolynomial, k: &[f64]) -> Result<ComplexMatrix> {
    p.eval(k)
}

/// Evaluate an ω-family at `(omega, k)`.
pub fn eval_omega_k(s: &OmegaSymbol, omega: Complex64, k: &[f64]) -> Result<ComplexMatrix> {
    s.eval(omega, k)
}
