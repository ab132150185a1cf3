//! Small dense complex linear algebra: LU determinant and inverse, one-sided
//! Jacobi singular values, cyclic Jacobi Hermitian eigenvalues, and general
//! eigenvalues for companion linearizations.

#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

const MAX_JACOBI_SWEEPS: usize = 80;

/// Pivots below this fraction of the largest entry mark the matrix singular.
const PIVOT_RTOL: f64 = 1e-14;

struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
    sign: f64,
    /// Index of the first pivot that fell below tolerance, if any.
    degenerate: Option<usize>,
}

fn lu_decompose(a: &ComplexMatrix) -> Lu {
    let n = a.dim();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut degenerate = None;
    let scale = a.max_abs();
    for col in 0..n {
        let (mut piv, mut best) = (col, lu[(col, col)].norm());
        for row in col + 1..n {
            let v = lu[(row, col)].norm();
            if v > best {
                piv = row;
                best = v;
            }
        }
        if piv != col {
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
            perm.swap(col, piv);
            sign = -sign;
        }
        if best <= PIVOT_RTOL * scale || best == 0.0 {
            degenerate.get_or_insert(col);
            if best == 0.0 {
                continue;
            }
        }
        let p = lu[(col, col)];
        for row in col + 1..n {
            let factor = lu[(row, col)] / p;
            lu[(row, col)] = factor;
            if factor.re == 0.0 && factor.im == 0.0 {
                continue;
            }
            for j in col + 1..n {
                let u = lu[(col, j)];
                lu[(row, j)] -= factor * u;
            }
        }
    }
    Lu {
        lu,
        perm,
        sign,
        degenerate,
    }
}

/// Determinant by partially pivoted elimination. Exact for 1x1.
pub fn det(a: &ComplexMatrix) -> Complex64 {
    let n = a.dim();
    if n == 1 {
        return a[(0, 0)];
    }
    let f = lu_decompose(a);
    let mut d = Complex64::new(f.sign, 0.0);
    for i in 0..n {
        d *= f.lu[(i, i)];
    }
    d
}

/// Matrix inverse. Fails with [`Error::SingularMatrix`] when a pivot drops
/// below `1e-14` of the largest entry; the error carries the smallest
/// singular value.
pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.dim();
    if n == 1 {
        let z = a[(0, 0)];
        if z.norm() == 0.0 || !z.is_finite() {
            return Err(Error::SingularMatrix {
                sigma_min: z.norm(),
            });
        }
        return Ok(ComplexMatrix::scalar(z.inv()));
    }
    let f = lu_decompose(a);
    if f.degenerate.is_some() {
        return Err(Error::SingularMatrix {
            sigma_min: smallest_singular_value(a),
        });
    }
    let mut inv = ComplexMatrix::zeros(n);
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        // Solve L U x = P e_j.
        for i in 0..n {
            col[i] = if f.perm[i] == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= f.lu[(i, k)] * col[k];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= f.lu[(i, k)] * col[k];
            }
            col[i] = s / f.lu[(i, i)];
        }
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    if !inv.is_finite() {
        return Err(Error::SingularMatrix {
            sigma_min: smallest_singular_value(a),
        });
    }
    Ok(inv)
}

/// Solve `A x = b`.
pub fn solve(a: &ComplexMatrix, b: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(inverse(a)?.mul_vec(b))
}

/// All singular values, descending, by one-sided Jacobi (Hestenes). Gives
/// small singular values to high relative accuracy.
pub fn singular_values(a: &ComplexMatrix) -> Vec<f64> {
    let n = a.dim();
    if n == 1 {
        return vec![a[(0, 0)].norm()];
    }
    // Work on columns.
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)]).collect())
        .collect();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = cols[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex64 = cols[p]
                    .iter()
                    .zip(&cols[q])
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate the phase out of column q so the coupling is real.
                let phase = (gamma / g).conj();
                for z in cols[q].iter_mut() {
                    *z *= phase;
                }
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let up = cols[p][i];
                    let uq = cols[q][i];
                    cols[p][i] = up * c - uq * s;
                    cols[q][i] = up * s + uq * c;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn smallest_singular_value(a: &ComplexMatrix) -> f64 {
    *singular_values(a).last().expect("non-empty matrix")
}

/// Ascending eigenvalues of a Hermitian matrix (cyclic complex Jacobi).
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let dev = a.hermitian_deviation();
    if dev > 1e-12 * a.frobenius_norm().max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let n = a.dim();
    if n == 1 {
        return Ok(vec![a[(0, 0)].re]);
    }
    let mut m = a.clone();
    let scale = a.frobenius_norm();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g == 0.0 {
                    continue;
                }
                // Similarity by diag(.., e^{-i phi} at q, ..) makes a_pq real.
                let phase = apq / g;
                for k in 0..n {
                    m[(k, q)] *= phase.conj();
                }
                for k in 0..n {
                    m[(q, k)] *= phase;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c - mkq * s;
                    m[(k, q)] = mkp * s + mkq * c;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c - mqk * s;
                    m[(q, k)] = mpk * s + mqk * c;
                }
                m[(p, q)] = Complex64::new(0.0, 0.0);
                m[(q, p)] = Complex64::new(0.0, 0.0);
                m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues of a general complex matrix via a complex Schur form.
pub fn general_eigenvalues(a: &ComplexMatrix) -> Vec<Complex64> {
    let n = a.dim();
    if n == 1 {
        return vec![a[(0, 0)]];
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
    let (_, t) = nalgebra::Schur::new(m).unpack();
    (0..n).map(|i| t[(i, i)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, vals: &[f64]) -> ComplexMatrix {
        let data = (0..n * n)
            .map(|i| c(vals[2 * i], vals[2 * i + 1]))
            .collect();
        ComplexMatrix::from_row_major(n, data).unwrap()
    }

    #[test]
    fn det_examples() {
        assert_eq!(det(&ComplexMatrix::identity(3)), c(1.0, 0.0));
        assert_abs_diff_eq!(det(&ComplexMatrix::from_real_diagonal(&[2.0, 3.0])).re, 6.0);
        let swap = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_abs_diff_eq!(det(&swap).re, -1.0);
        assert_eq!(det(&ComplexMatrix::scalar(c(2.5, -1.0))), c(2.5, -1.0));
    }

    #[test]
    fn inverse_examples() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(inverse(&i2).unwrap(), i2);
        let d = inverse(&ComplexMatrix::from_real_diagonal(&[2.0, 4.0])).unwrap();
        assert!(d.distance(&ComplexMatrix::from_real_diagonal(&[0.5, 0.25])) < 1e-15);
        let u = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let expected = ComplexMatrix::from_real_rows(&[&[1.0, -1.0], &[0.0, 1.0]]);
        assert!(inverse(&u).unwrap().distance(&expected) < 1e-15);
    }

    #[test]
    fn inverse_of_singular_reports_sigma() {
        let s = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        match inverse(&s) {
            Err(Error::SingularMatrix { sigma_min }) => assert!(sigma_min < 1e-14),
            other => panic!("expected singular error, got {other:?}"),
        }
        assert!(matches!(
            inverse(&ComplexMatrix::zeros(1)),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn sigma_min_examples() {
        assert_abs_diff_eq!(
            smallest_singular_value(&ComplexMatrix::identity(2)),
            1.0,
            epsilon = 1e-15
        );
        let d = ComplexMatrix::from_real_diagonal(&[3.0, 1e-15]);
        assert!((smallest_singular_value(&d) - 1e-15).abs() < 1e-25);
        let nil = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(smallest_singular_value(&nil), 0.0);
    }

    #[test]
    fn sigma_min_relative_accuracy_on_graded_matrix() {
        // Unitary * diag * unitary keeps the singular values.
        let q = ComplexMatrix::from_row_major(
            2,
            vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.8), c(0.6, 0.0)],
        )
        .unwrap();
        let d = ComplexMatrix::from_real_diagonal(&[5.0, 3e-9]);
        let a = &(&q * &d) * &q.adjoint();
        let s = smallest_singular_value(&a);
        assert!(((s - 3e-9) / 3e-9).abs() < 1e-6, "{s}");
    }

    #[test]
    fn hermitian_eigenvalue_examples() {
        assert_eq!(
            hermitian_eigenvalues(&ComplexMatrix::from_real_diagonal(&[2.0, 1.0])).unwrap(),
            vec![1.0, 2.0]
        );
        let x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let ev = hermitian_eigenvalues(&x).unwrap();
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev[1], 1.0, epsilon = 1e-15);
        let ev = hermitian_eigenvalues(&ComplexMatrix::identity(4)).unwrap();
        assert!(ev.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn hermitian_eigenvalues_complex_offdiagonal() {
        // [[1, i], [-i, 1]] has eigenvalues 0 and 2.
        let a = ComplexMatrix::from_row_major(
            2,
            vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)],
        )
        .unwrap();
        let ev = hermitian_eigenvalues(&a).unwrap();
        assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn non_hermitian_rejected() {
        let a = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            hermitian_eigenvalues(&a),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn general_eigenvalues_of_rotation() {
        let r = ComplexMatrix::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let mut ev = general_eigenvalues(&r);
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert_abs_diff_eq!(ev[0].im, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1].im, 1.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn det_times_det_of_inverse_is_one(
            n in 1usize..=8,
            vals in proptest::collection::vec(-1.0f64..1.0, 128),
        ) {
            // Diagonally dominant shift keeps it well conditioned.
            let mut a = random_matrix(n, &vals);
            for i in 0..n {
                a[(i, i)] += c(2.0 * n as f64, 0.0);
            }
            let inv = inverse(&a).unwrap();
            let prod = det(&a) * det(&inv);
            prop_assert!((prod - c(1.0, 0.0)).norm() < 1e-8);
            let resid = (&(&a * &inv) - &ComplexMatrix::identity(n)).frobenius_norm();
            prop_assert!(resid < 1e-12);
        }

        #[test]
        fn jacobi_eigenvalues_match_nalgebra(
            n in 1usize..=6,
            vals in proptest::collection::vec(-1.0f64..1.0, 72),
        ) {
            let b = random_matrix(n, &vals);
            let h = &b + &b.adjoint();
            let ev = hermitian_eigenvalues(&h).unwrap();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| h[(i, j)]);
            let mut reference: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            for (x, y) in ev.iter().zip(&reference) {
                prop_assert!((x - y).abs() < 1e-12 * h.frobenius_norm().max(1.0));
            }
        }

        #[test]
        fn singular_values_square_to_gram_eigenvalues(
            n in 1usize..=6,
            vals in proptest::collection::vec(-1.0f64..1.0, 72),
        ) {
            let a = random_matrix(n, &vals);
            let gram = &a.adjoint() * &a;
            let mut ev = hermitian_eigenvalues(&gram).unwrap();
            ev.reverse();
            let sv = singular_values(&a);
            for (s, e) in sv.iter().zip(&ev) {
                prop_assert!((s * s - e).abs() < 1e-12 * gram.frobenius_norm().max(1.0));
            }
        }
    }
}
