use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

/// Highest power of ω the engine handles natively.
pub const MAX_OMEGA_POWER: u32 = 2;

/// Integer offset vector in the lattice.
pub type Offset = Vec<i64>;

/// Finite Fourier series `Σ_n e^{i n·k} A^(n)` of `M×M` matrices over a
/// `d`-dimensional torus.
///
/// Coefficients are kept in a `BTreeMap`, so evaluation always sums in
/// lexicographic offset order and is bitwise reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigMatrixPolynomial {
    torus_dim: usize,
    dim: usize,
    coeffs: BTreeMap<Offset, ComplexMatrix>,
}

impl TrigMatrixPolynomial {
    /// The zero polynomial.
    pub fn zero(torus_dim: usize, dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            torus_dim,
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(torus_dim: usize, value: ComplexMatrix) -> Self {
        let mut p = Self::zero(torus_dim, value.dim());
        p.add_term(vec![0; torus_dim], value)
            .expect("consistent shapes");
        p
    }

    pub fn from_terms<I>(torus_dim: usize, dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Offset, ComplexMatrix)>,
    {
        let mut p = Self::zero(torus_dim, dim);
        for (n, a) in terms {
            p.add_term(n, a)?;
        }
        Ok(p)
    }

    /// Accumulate `a` into the coefficient at `offset`.
    pub fn add_term(&mut self, offset: Offset, a: ComplexMatrix) -> Result<()> {
        if offset.len() != self.torus_dim {
            return Err(Error::DimensionMismatch {
                expected: self.torus_dim,
                got: offset.len(),
            });
        }
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.dim(),
            });
        }
        match self.coeffs.get_mut(&offset) {
            Some(existing) => *existing += &a,
            None => {
                self.coeffs.insert(offset, a);
            }
        }
        Ok(())
    }

    #[inline]
    pub fn torus_dim(&self) -> usize {
        self.torus_dim
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficient(&self, offset: &[i64]) -> Option<&ComplexMatrix> {
        self.coeffs.get(offset)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Offset, &ComplexMatrix)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Drop exactly-zero coefficients; evaluation is unchanged.
    pub fn pruned(&self) -> Self {
        Self {
            torus_dim: self.torus_dim,
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(_, a)| !a.is_zero())
                .map(|(n, a)| (n.clone(), a.clone()))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(ComplexMatrix::is_zero)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            torus_dim: self.torus_dim,
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .map(|(n, a)| (n.clone(), a.scale(s)))
                .collect(),
        }
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (n, a) in other.terms() {
            out.add_term(n.clone(), a.clone())?;
        }
        Ok(out)
    }

    /// True when some nonzero coefficient has a nonzero component on `axis`.
    pub fn depends_on_axis(&self, axis: usize) -> bool {
        self.coeffs
            .iter()
            .any(|(n, a)| n[axis] != 0 && !a.is_zero())
    }

    /// `A^(-n) = (A^(n))^H` for every offset, so `eval(k)` is Hermitian for
    /// all real `k`.
    pub fn is_hermitian_family(&self) -> bool {
        let scale = self
            .coeffs
            .values()
            .map(ComplexMatrix::frobenius_norm)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let zero = ComplexMatrix::zeros(self.dim);
        self.coeffs.iter().all(|(n, a)| {
            let neg: Offset = n.iter().map(|x| -x).collect();
            let partner = self.coeffs.get(&neg).unwrap_or(&zero);
            (&a.adjoint() - partner).max_abs() <= 1e-12 * scale
        })
    }

    /// `Σ_n e^{i n·k} A^(n)`.
    pub fn eval(&self, k: &[f64]) -> Result<ComplexMatrix> {
        if k.len() != self.torus_dim {
            return Err(Error::DimensionMismatch {
                expected: self.torus_dim,
                got: k.len(),
            });
        }
        Ok(self.eval_unchecked(k))
    }

    pub(crate) fn eval_unchecked(&self, k: &[f64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim);
        for (n, a) in &self.coeffs {
            let phase: f64 = n.iter().zip(k).map(|(&ni, &ki)| ni as f64 * ki).sum();
            let w = Complex64::from_polar(1.0, phase);
            out += &a.scale(w);
        }
        out
    }
}

/// Polynomial family `Σ_p ω^p P_p(k)` of trigonometric matrix polynomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaSymbol {
    torus_dim: usize,
    dim: usize,
    terms: BTreeMap<u32, TrigMatrixPolynomial>,
}

impl OmegaSymbol {
    pub fn zero(torus_dim: usize, dim: usize) -> Self {
        Self {
            torus_dim,
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// Symbol that does not depend on ω.
    pub fn static_symbol(p: TrigMatrixPolynomial) -> Self {
        let mut s = Self::zero(p.torus_dim(), p.dim());
        s.terms.insert(0, p);
        s
    }

    /// `A(k) - ω I`, the usual eigenvalue-problem shift.
    pub fn shifted(a: TrigMatrixPolynomial) -> Self {
        let (d, m) = (a.torus_dim(), a.dim());
        let mut s = Self::static_symbol(a);
        s.set_term(
            1,
            TrigMatrixPolynomial::constant(
                d,
                ComplexMatrix::scalar_identity(m, Complex64::new(-1.0, 0.0)),
            ),
        )
        .expect("consistent shapes");
        s
    }

    pub fn set_term(&mut self, power: u32, p: TrigMatrixPolynomial) -> Result<()> {
        if p.torus_dim() != self.torus_dim {
            return Err(Error::DimensionMismatch {
                expected: self.torus_dim,
                got: p.torus_dim(),
            });
        }
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.dim(),
            });
        }
        self.terms.insert(power, p);
        Ok(())
    }

    #[inline]
    pub fn torus_dim(&self) -> usize {
        self.torus_dim
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn term(&self, power: u32) -> Option<&TrigMatrixPolynomial> {
        self.terms.get(&power)
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &TrigMatrixPolynomial)> {
        self.terms.iter().map(|(&p, t)| (p, t))
    }

    /// Highest power with a nonzero coefficient (0 for the zero symbol).
    pub fn max_power(&self) -> u32 {
        self.terms
            .iter()
            .filter(|(_, t)| !t.is_zero())
            .map(|(&p, _)| p)
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(TrigMatrixPolynomial::is_zero)
    }

    pub fn is_hermitian_family(&self) -> bool {
        self.terms
            .values()
            .all(TrigMatrixPolynomial::is_hermitian_family)
    }

    pub fn depends_on_axis(&self, axis: usize) -> bool {
        self.terms.values().any(|t| t.depends_on_axis(axis))
    }

    /// True when the family is `P_0(k) - ω I` exactly.
    pub fn is_standard_shift(&self) -> bool {
        if self.max_power() != 1 {
            return false;
        }
        let Some(t1) = self.term(1) else { return false };
        let minus_id = ComplexMatrix::scalar_identity(self.dim, Complex64::new(-1.0, 0.0));
        let p = t1.pruned();
        p.len() == 1 && p.coefficient(&vec![0; self.torus_dim]) == Some(&minus_id)
    }

    /// `Σ_p ω^p P_p(k)`.
    pub fn eval(&self, omega: Complex64, k: &[f64]) -> Result<ComplexMatrix> {
        if k.len() != self.torus_dim {
            return Err(Error::DimensionMismatch {
                expected: self.torus_dim,
                got: k.len(),
            });
        }
        Ok(self.eval_unchecked(omega, k))
    }

    pub(crate) fn eval_unchecked(&self, omega: Complex64, k: &[f64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim);
        for (&p, t) in &self.terms {
            let w = omega.powu(p);
            if w.re == 0.0 && w.im == 0.0 {
                continue;
            }
            out += &t.eval_unchecked(k).scale(w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn s(x: f64) -> ComplexMatrix {
        ComplexMatrix::scalar(Complex64::new(x, 0.0))
    }

    fn chain() -> TrigMatrixPolynomial {
        TrigMatrixPolynomial::from_terms(1, 1, [(vec![1], s(1.0)), (vec![-1], s(1.0))]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let id = TrigMatrixPolynomial::constant(2, ComplexMatrix::identity(2));
        assert_eq!(id.eval(&[0.3, -1.2]).unwrap(), ComplexMatrix::identity(2));
        let p = chain();
        assert_eq!(p.eval(&[0.0]).unwrap(), s(2.0));
        assert!((p.eval(&[PI / 3.0]).unwrap()[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn eval_dimension_mismatch() {
        assert!(matches!(
            chain().eval(&[0.0, 0.0]),
            Err(Error::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn omega_eval_examples() {
        let sym = OmegaSymbol::shifted(chain());
        let b = sym.eval(Complex64::new(1.0, 0.0), &[0.0]).unwrap();
        assert_eq!(b, s(1.0));
        let b = sym.eval(Complex64::new(2.0, 0.0), &[0.0]).unwrap();
        assert_eq!(b, s(0.0));
        assert!(sym.is_standard_shift());

        let mut wave = OmegaSymbol::static_symbol(chain());
        wave.set_term(2, TrigMatrixPolynomial::constant(1, s(-1.0)))
            .unwrap();
        let at0 = wave.eval(Complex64::new(0.0, 0.0), &[0.7]).unwrap();
        assert_eq!(at0, chain().eval(&[0.7]).unwrap());
        assert_eq!(wave.max_power(), 2);
        assert!(!wave.is_standard_shift());
    }

    #[test]
    fn hermitian_family_detection() {
        assert!(chain().is_hermitian_family());
        let i = Complex64::new(0.0, 1.0);
        let skew = TrigMatrixPolynomial::from_terms(
            1,
            1,
            [
                (vec![1], ComplexMatrix::scalar(i)),
                (vec![-1], ComplexMatrix::scalar(i)),
            ],
        )
        .unwrap();
        assert!(!skew.is_hermitian_family());
        let herm = TrigMatrixPolynomial::from_terms(
            1,
            1,
            [
                (vec![1], ComplexMatrix::scalar(i)),
                (vec![-1], ComplexMatrix::scalar(-i)),
            ],
        )
        .unwrap();
        assert!(herm.is_hermitian_family());
    }

    #[test]
    fn pruning_keeps_evaluation() {
        let mut p = chain();
        p.add_term(vec![3], s(0.0)).unwrap();
        assert_eq!(p.len(), 3);
        let q = p.pruned();
        assert_eq!(q.len(), 2);
        assert_eq!(p.eval(&[0.4]).unwrap(), q.eval(&[0.4]).unwrap());
    }
}
