#![allow(dead_code)]

use defect_bands::symbol::{ComplexMatrix, TrigMatrixPolynomial};
use defect_bands::Stencil;
use num_complex::Complex64;
use proptest::prelude::*;

pub fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

pub fn matrix(m: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec(complex(), m * m)
        .prop_map(move |d| ComplexMatrix::from_row_major(m, d).unwrap())
}

pub fn offset(n: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-2i64..=2, n)
}

/// Random polynomial with up to `max_terms` offsets on an `n`-torus.
pub fn polynomial(
    n: usize,
    m: usize,
    max_terms: usize,
) -> impl Strategy<Value = TrigMatrixPolynomial> {
    prop::collection::vec((offset(n), matrix(m)), 1..=max_terms)
        .prop_map(move |terms| TrigMatrixPolynomial::from_terms(n, m, terms).unwrap())
}

/// Random self-adjoint stencil: each drawn hopping comes with its adjoint at
/// the mirrored offset.
pub fn self_adjoint_stencil(
    n: usize,
    m: usize,
    max_offsets: usize,
) -> impl Strategy<Value = Stencil> {
    prop::collection::vec((offset(n), matrix(m)), 1..=max_offsets).prop_map(move |terms| {
        let mut st = Stencil::new(n, m);
        for (off, h) in terms {
            let mirrored: Vec<i64> = off.iter().map(|x| -x).collect();
            st.add_hopping(off, h.scale_real(0.5)).unwrap();
            st.add_hopping(mirrored, h.adjoint().scale_real(0.5))
                .unwrap();
        }
        st
    })
}

pub fn wavevector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}
