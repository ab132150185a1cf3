mod common;

use std::f64::consts::TAU;

use common::{matrix, polynomial, wavevector};
use defect_bands::symbol::{
    det, eval_k, eval_omega_k, inverse, smallest_singular_value, ComplexMatrix,
};
use defect_bands::{OmegaSymbol, TrigMatrixPolynomial};
use num_complex::Complex64;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, 1usize..=3)
}

proptest! {
    #[test]
    fn evaluation_is_linear(
        (p, q, k) in dims().prop_flat_map(|(n, m)| (polynomial(n, m, 9), polynomial(n, m, 9), wavevector(n)))
    ) {
        let sum = eval_k(&p.sum(&q).unwrap(), &k).unwrap();
        let parts = &eval_k(&p, &k).unwrap() + &eval_k(&q, &k).unwrap();
        let scale = parts.frobenius_norm().max(1.0);
        prop_assert!(sum.distance(&parts) <= 1e-13 * scale);
    }

    #[test]
    fn mirrored_adjoint_coefficients_give_hermitian_values(
        (st, k) in dims().prop_flat_map(|(n, m)| (common::self_adjoint_stencil(n, m, 6), wavevector(n)))
    ) {
        let p = defect_bands::model::stencil_to_symbol(&st);
        prop_assert!(p.is_hermitian_family());
        prop_assert!(eval_k(&p, &k).unwrap().hermitian_deviation() <= 1e-12);
    }

    #[test]
    fn evaluation_is_two_pi_periodic(
        (p, k) in dims().prop_flat_map(|(n, m)| (polynomial(n, m, 9), wavevector(n)))
    ) {
        let base = eval_k(&p, &k).unwrap();
        for axis in 0..k.len() {
            let mut shifted = k.clone();
            shifted[axis] += TAU;
            prop_assert!(eval_k(&p, &shifted).unwrap().distance(&base) <= 1e-12 * base.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn determinant_of_inverse_is_reciprocal(a in (1usize..=8).prop_flat_map(matrix)) {
        // Keep away from singular draws: shift by a multiple of the identity.
        let m = a.dim();
        let shifted = &a + &ComplexMatrix::scalar_identity(m, Complex64::new(2.0 * m as f64, 0.0));
        prop_assume!(smallest_singular_value(&shifted) > 1e-3);
        let inv = inverse(&shifted).unwrap();
        let product = det(&shifted) * det(&inv);
        prop_assert!((product - Complex64::new(1.0, 0.0)).norm() <= 1e-8);
    }
}

#[test]
fn shifted_family_subtracts_omega() {
    let p = TrigMatrixPolynomial::from_terms(
        1,
        1,
        [
            (vec![1], ComplexMatrix::scalar(Complex64::new(1.0, 0.0))),
            (vec![-1], ComplexMatrix::scalar(Complex64::new(1.0, 0.0))),
        ],
    )
    .unwrap();
    let s = OmegaSymbol::shifted(p);
    let v = eval_omega_k(&s, Complex64::new(0.5, 0.0), &[0.3]).unwrap();
    assert!((v.as_slice()[0].re - (2.0 * 0.3f64.cos() - 0.5)).abs() < 1e-15);
    assert!(s.is_standard_shift());
    assert_eq!(s.max_power(), 1);
}

#[test]
fn wrong_wavevector_length_is_rejected() {
    let p = TrigMatrixPolynomial::zero(2, 1);
    assert!(eval_k(&p, &[0.0]).is_err());
}
