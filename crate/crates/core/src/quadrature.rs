//! The bracket `<F>_{axes} = (2π)^{-j/2} ∫ F dk_axes` over coordinate
//! sub-tori, discretized by the periodic trapezoid rule.
//!
//! Nodes are `k_l = -π + 2π l / n`, `l = 0..n`. Sums are reduced with a fixed
//! pairwise tree over the lexicographic node order, so results do not depend
//! on how node evaluations were scheduled.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec;
use crate::symbol::ComplexMatrix;

/// Matrix-valued function of the full wavevector.
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Result<ComplexMatrix> + Send + Sync>;

/// `l`-th node of the `n`-point periodic grid on `[-π, π)`.
///
/// Doubling `n` reproduces the old nodes bit for bit at even indices.
#[inline]
pub fn node(l: usize, n: usize) -> f64 {
    -PI + TAU * (l as f64) / (n as f64)
}

/// Uniform periodic grid over a set of torus axes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KGrid {
    axes: Vec<usize>,
    points_per_axis: usize,
}

impl KGrid {
    pub fn new(axes: Vec<usize>, points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 4 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid needs a power of two >= 4 points per axis, got {points_per_axis}"
            )));
        }
        Ok(Self {
            axes,
            points_per_axis,
        })
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.axes.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of node `index`; the first axis varies slowest.
    pub fn coords(&self, index: usize) -> Vec<f64> {
        grid_coords(index, self.axes.len(), self.points_per_axis)
    }

    pub fn refined(&self) -> Self {
        Self {
            axes: self.axes.clone(),
            points_per_axis: self.points_per_axis * 2,
        }
    }
}

/// Row-major coordinates of node `index` on an `n^dims` grid.
pub fn grid_coords(index: usize, dims: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; dims];
    let mut rest = index;
    for d in (0..dims).rev() {
        out[d] = node(rest % n, n);
        rest /= n;
    }
    out
}

/// Sum in a fixed binary tree over the slice order.
pub fn pairwise_sum(values: &[ComplexMatrix]) -> ComplexMatrix {
    match values.len() {
        0 => panic!("pairwise_sum of an empty slice"),
        1 => values[0].clone(),
        2 => &values[0] + &values[1],
        len => {
            let mid = len / 2;
            &pairwise_sum(&values[..mid]) + &pairwise_sum(&values[mid..])
        }
    }
}

/// Trapezoid weight of one node: `(2π)^{-j/2} (2π/n)^j`.
pub fn bracket_weight(j: usize, n: usize) -> f64 {
    TAU.powf(-(j as f64) / 2.0) * (TAU / n as f64).powi(j as i32)
}

/// `<F>` over some axes, as a function of the remaining ones.
#[derive(Clone)]
pub struct AveragedFunction {
    integrand: MatrixFn,
    torus_dim: usize,
    axes: Vec<usize>,
    remaining: Vec<usize>,
    points_per_axis: usize,
    provenance: String,
}

impl fmt::Debug for AveragedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AveragedFunction")
            .field("axes", &self.axes)
            .field("remaining", &self.remaining)
            .field("points_per_axis", &self.points_per_axis)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl AveragedFunction {
    pub fn remaining_axes(&self) -> &[usize] {
        &self.remaining
    }

    pub fn integrated_axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// Evaluate at the remaining coordinates (in `remaining_axes` order).
    pub fn eval(&self, remaining: &[f64]) -> Result<ComplexMatrix> {
        if remaining.len() != self.remaining.len() {
            return Err(Error::DimensionMismatch {
                expected: self.remaining.len(),
                got: remaining.len(),
            });
        }
        trapezoid(
            &self.integrand,
            self.torus_dim,
            &self.axes,
            &self.remaining,
            remaining,
            self.points_per_axis,
        )
        .map(|(value, _)| value)
    }
}

fn check_axes(torus_dim: usize, axes: &[usize]) -> Result<Vec<usize>> {
    if axes.is_empty() {
        return Err(Error::InvalidInput(
            "bracket needs at least one axis".into(),
        ));
    }
    let mut sorted = axes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != axes.len() || sorted.iter().any(|&a| a >= torus_dim) {
        return Err(Error::InvalidInput(format!(
            "bracket axes {axes:?} must be distinct and below {torus_dim}"
        )));
    }
    Ok((0..torus_dim).filter(|a| !sorted.contains(a)).collect())
}

/// Returns the bracket value and the mean Frobenius norm of the integrand.
fn trapezoid(
    f: &MatrixFn,
    torus_dim: usize,
    axes: &[usize],
    remaining: &[usize],
    at: &[f64],
    n: usize,
) -> Result<(ComplexMatrix, f64)> {
    let j = axes.len();
    let total = n.pow(j as u32);
    let values = exec::try_map_indexed(total, |idx| {
        let mut k = vec![0.0; torus_dim];
        for (&axis, &x) in remaining.iter().zip(at) {
            k[axis] = x;
        }
        for (&axis, x) in axes.iter().zip(grid_coords(idx, j, n)) {
            k[axis] = x;
        }
        let v = f(&k)?;
        if !v.is_finite() {
            return Err(Error::NonConvergence {
                points: n,
                change: f64::INFINITY,
                min_sigma: None,
            });
        }
        Ok(v)
    })?;
    let mean_norm = values
        .iter()
        .map(ComplexMatrix::frobenius_norm)
        .sum::<f64>()
        / total as f64;
    Ok((
        pairwise_sum(&values).scale_real(bracket_weight(j, n)),
        mean_norm,
    ))
}

/// Bracket of `f` over `axes` with the periodic trapezoid rule on `grid`.
pub fn bracket(
    f: MatrixFn,
    torus_dim: usize,
    axes: &[usize],
    grid: &KGrid,
) -> Result<AveragedFunction> {
    let remaining = check_axes(torus_dim, axes)?;
    Ok(AveragedFunction {
        integrand: f,
        torus_dim,
        axes: axes.to_vec(),
        remaining,
        points_per_axis: grid.points_per_axis(),
        provenance: format!("bracket over axes {axes:?}"),
    })
}

/// Relative floor, in units of the integrand scale, below which a change
/// between refinements is rounding noise.
const ABS_FLOOR: f64 = 64.0 * f64::EPSILON;

fn converged(change: f64, value_norm: f64, scale: f64, tol_rel: f64) -> bool {
    change <= tol_rel * value_norm + ABS_FLOOR * scale
}

fn as_nonconvergence(e: Error, points: usize) -> Error {
    match e {
        Error::SingularMatrix { sigma_min } => Error::NonConvergence {
            points,
            change: f64::INFINITY,
            min_sigma: Some(sigma_min),
        },
        Error::NonConvergence {
            change, min_sigma, ..
        } => Error::NonConvergence {
            points,
            change,
            min_sigma,
        },
        other => other,
    }
}

/// Grid-doubling bracket: refine until the relative Frobenius change at every
/// probe point of the remaining axes drops below `tol_rel`.
///
/// Probe points are the `n_start` grid of the remaining axes plus midpoints.
/// Returns the accepted refinement and the last relative change.
pub fn adaptive_bracket(
    f: MatrixFn,
    torus_dim: usize,
    axes: &[usize],
    tol_rel: f64,
    n_start: usize,
    n_max: usize,
) -> Result<(AveragedFunction, f64)> {
    let remaining = check_axes(torus_dim, axes)?;
    if n_start < 4 || !n_start.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "n_start must be a power of two >= 4, got {n_start}"
        )));
    }
    let r = remaining.len();
    let probe_n = 2 * n_start;
    let probes: Vec<Vec<f64>> = (0..probe_n.pow(r as u32))
        .map(|i| grid_coords(i, r, probe_n))
        .collect();

    let eval_all = |n: usize| -> Result<Vec<(ComplexMatrix, f64)>> {
        probes
            .iter()
            .map(|p| trapezoid(&f, torus_dim, axes, &remaining, p, n))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| as_nonconvergence(e, n))
    };

    let mut n = n_start;
    let mut prev = eval_all(n)?;
    let mut last_change = f64::INFINITY;
    while n < n_max {
        let next_n = n * 2;
        let next = eval_all(next_n)?;
        let mut ok = true;
        let mut worst = 0.0_f64;
        for ((a, _), (b, scale)) in prev.iter().zip(&next) {
            let change = a.distance(b);
            let norm = b.frobenius_norm();
            ok &= converged(change, norm, *scale, tol_rel);
            worst = worst.max(if norm > 0.0 { change / norm } else { change });
        }
        n = next_n;
        prev = next;
        last_change = worst;
        if ok {
            let avg = AveragedFunction {
                integrand: f.clone(),
                torus_dim,
                axes: axes.to_vec(),
                remaining,
                points_per_axis: n,
                provenance: format!("adaptive bracket over axes {axes:?}"),
            };
            return Ok((avg, last_change));
        }
    }
    Err(Error::NonConvergence {
        points: n,
        change: last_change,
        min_sigma: None,
    })
}

/// Result of [`integrate_line`].
#[derive(Clone, Debug)]
pub struct LineIntegral {
    pub value: ComplexMatrix,
    pub points: usize,
    pub change: f64,
}

/// Adaptive one-axis bracket `(2π)^{-1/2} ∫ f(x) dx` with node reuse.
///
/// This is the workhorse of the nested chain computations: each doubling only
/// evaluates the new midpoints.
pub fn integrate_line<F>(f: F, tol_rel: f64, n_start: usize, n_max: usize) -> Result<LineIntegral>
where
    F: Fn(f64) -> Result<ComplexMatrix> + Sync + Send,
{
    let checked = |x: f64, n: usize| -> Result<ComplexMatrix> {
        let v = f(x).map_err(|e| as_nonconvergence(e, n))?;
        if !v.is_finite() {
            return Err(Error::NonConvergence {
                points: n,
                change: f64::INFINITY,
                min_sigma: None,
            });
        }
        Ok(v)
    };
    let mut n = n_start;
    let mut values = exec::try_map_indexed(n, |l| checked(node(l, n), n))?;
    let mut sum = pairwise_sum(&values).scale_real(bracket_weight(1, n));
    let mut change = f64::INFINITY;
    while n < n_max {
        let next_n = 2 * n;
        let fresh = exec::try_map_indexed(n, |l| checked(node(2 * l + 1, next_n), next_n))?;
        let mut merged = Vec::with_capacity(next_n);
        for (old, new) in values.into_iter().zip(fresh) {
            merged.push(old);
            merged.push(new);
        }
        values = merged;
        n = next_n;
        let next_sum = pairwise_sum(&values).scale_real(bracket_weight(1, n));
        change = next_sum.distance(&sum);
        let scale = values
            .iter()
            .map(ComplexMatrix::frobenius_norm)
            .sum::<f64>()
            / n as f64
            * TAU.sqrt();
        let norm = next_sum.frobenius_norm();
        sum = next_sum;
        if converged(change, norm, scale, tol_rel) {
            return Ok(LineIntegral {
                value: sum,
                points: n,
                change: if norm > 0.0 { change / norm } else { change },
            });
        }
    }
    Err(Error::NonConvergence {
        points: n,
        change,
        min_sigma: None,
    })
}
