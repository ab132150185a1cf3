//! Bulk dispersion relations `ω = ω(k)` and the band-induced part of the
//! exclusion sets.

use num_complex::Complex64;

use super::chain::golden_min;
use super::interval::Interval;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::ProblemSpec;
use crate::quadrature::grid_coords;
use crate::symbol::{general_eigenvalues, hermitian_eigenvalues, inverse, ComplexMatrix};

/// Relative imaginary part below which a pencil eigenvalue counts as real.
pub const REAL_ROOT_GUARD: f64 = 1e-6;

/// Sorted real ω with `det A(ω, k) = 0`.
///
/// For `A = P(k) - ω I` these are the eigenvalues of `P(k)`. Otherwise the
/// polynomial pencil is linearized to companion form.
pub fn bands(spec: &ProblemSpec, k: &[f64]) -> Result<Vec<f64>> {
    let solver = BandSolver::new(spec)?;
    if k.len() != spec.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            got: k.len(),
        });
    }
    solver.at(k)
}

/// Band evaluation with the structural checks done once.
#[derive(Clone, Copy)]
pub(crate) struct BandSolver<'a> {
    spec: &'a ProblemSpec,
    standard: bool,
}

impl<'a> BandSolver<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Result<Self> {
        if !spec.bulk.is_hermitian_family() {
            return Err(Error::Unsupported(
                "band computation requires a Hermitian bulk family".into(),
            ));
        }
        if spec.bulk.max_power() == 0 {
            return Err(Error::Unsupported(
                "bulk symbol does not depend on omega".into(),
            ));
        }
        Ok(Self {
            spec,
            standard: spec.bulk.is_standard_shift(),
        })
    }

    fn term(&self, p: u32, k: &[f64]) -> ComplexMatrix {
        match self.spec.bulk.term(p) {
            Some(t) => t.eval_unchecked(k),
            None => ComplexMatrix::zeros(self.spec.cell_size),
        }
    }

    pub fn at(&self, k: &[f64]) -> Result<Vec<f64>> {
        let m = self.spec.cell_size;
        if self.standard {
            return hermitian_eigenvalues(&self.term(0, k).hermitian_part());
        }
        let power = self.spec.bulk.max_power() as usize;
        let lead_inv = inverse(&self.term(power as u32, k)).map_err(|_| {
            Error::Unsupported(
                "leading omega coefficient is singular; pencil has infinite roots".into(),
            )
        })?;
        // Companion matrix of ω^p I + Σ_{q<p} ω^q L^{-1} T_q.
        let size = power * m;
        let mut c = ComplexMatrix::zeros(size);
        for blk in 0..power - 1 {
            for i in 0..m {
                c[(blk * m + i, (blk + 1) * m + i)] = Complex64::new(1.0, 0.0);
            }
        }
        for q in 0..power {
            let t = &lead_inv * &self.term(q as u32, k);
            for i in 0..m {
                for j in 0..m {
                    c[((power - 1) * m + i, q * m + j)] = -t[(i, j)];
                }
            }
        }
        let mut out: Vec<f64> = general_eigenvalues(&c)
            .into_iter()
            .filter(|z| z.im.abs() <= REAL_ROOT_GUARD * z.re.abs().max(1.0))
            .map(|z| z.re)
            .collect();
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

/// Range of each band index over the first `integrated` axes with the
/// remaining coordinates fixed to `tail`.
///
/// The grid extremes are polished by coordinate-wise golden section so band
/// edges between nodes are not lost.
pub(crate) fn band_ranges(
    spec: &ProblemSpec,
    integrated: usize,
    tail: &[f64],
    n: usize,
) -> Result<Vec<Interval>> {
    let solver = BandSolver::new(spec)?;
    let full = |head: &[f64]| {
        let mut k = head.to_vec();
        k.extend_from_slice(tail);
        k
    };
    let total = n.pow(integrated as u32);
    let values =
        exec::try_map_indexed(total, |i| solver.at(&full(&grid_coords(i, integrated, n))))?;
    let count = values.iter().map(Vec::len).max().unwrap_or(0);
    let h = std::f64::consts::TAU / n as f64;
    let mut out = Vec::with_capacity(count);
    for b in 0..count {
        let mut lo = (f64::INFINITY, 0);
        let mut hi = (f64::NEG_INFINITY, 0);
        for (i, v) in values.iter().enumerate() {
            if let Some(&w) = v.get(b) {
                if w < lo.0 {
                    lo = (w, i);
                }
                if w > hi.0 {
                    hi = (w, i);
                }
            }
        }
        if integrated > 0 {
            for (sign, ext) in [(1.0, &mut lo), (-1.0, &mut hi)] {
                let same_count = values[ext.1].len();
                let fallback = sign * ext.0;
                let band_at = |head: &[f64]| -> Result<f64> {
                    let v = solver.at(&full(head))?;
                    // Band count may change off-grid; keep the objective neutral then.
                    Ok(if v.len() == same_count {
                        sign * v[b]
                    } else {
                        fallback
                    })
                };
                let mut head = grid_coords(ext.1, integrated, n);
                for _sweep in 0..2 {
                    for axis in 0..integrated {
                        let c = head[axis];
                        let (x, fx) = golden_min(
                            |x| {
                                let mut hh = head.clone();
                                hh[axis] = x;
                                band_at(&hh)
                            },
                            c - h,
                            c + h,
                            60,
                        )?;
                        if fx < sign * ext.0 {
                            ext.0 = sign * fx;
                            head[axis] = x;
                        }
                    }
                }
            }
        }
        out.push(Interval::new(lo.0, hi.0));
    }
    Ok(out)
}
