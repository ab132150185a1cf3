//! Constructive solution of `Ĉ_0 f = g` for ω outside the spectrum.
//!
//! With `w_i = <f>_{1..i}` the system reduces level by level:
//!
//! ```text
//! h_0 = g,      h_{i+1} = <B_i^{-1} h_i>_{i+1}
//! w_N = B_N^{-1} h_N
//! w_i = B_i^{-1} (h_i - G_i Σ_{j>i} A_j w_j)
//! ```
//!
//! and `f = w_0`. Every quantity is evaluated pointwise, so `f` is available
//! at any `k`.

use std::collections::HashMap;
use std::sync::Mutex;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::chain::{ChainEvaluator, MAX_LINE_POINTS};
use super::membership::{membership, MembershipCertificate, Verdict};
use super::SweepGrids;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::ProblemSpec;
use crate::quadrature::{bracket_weight, grid_coords, integrate_line};
use crate::symbol::{solve, ComplexMatrix};

/// Vector-valued function of the full wavevector.
pub type VectorFn<'a> = dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync + 'a;

/// `f` sampled on the `k_points^N` grid, first axis slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventSolution {
    pub omega: f64,
    pub k_points: usize,
    pub values: Vec<Vec<Complex64>>,
    /// `||Ĉ_0 f - g|| / ||g||` in the grid `L^2` norm.
    pub residual: f64,
    pub certificate: MembershipCertificate,
}

fn column(v: &[Complex64]) -> ComplexMatrix {
    let m = v.len();
    let mut out = ComplexMatrix::zeros(m);
    for (i, &x) in v.iter().enumerate() {
        out[(i, 0)] = x;
    }
    out
}

fn first_column(a: &ComplexMatrix) -> Vec<Complex64> {
    (0..a.dim()).map(|i| a[(i, 0)]).collect()
}

type Key = (usize, Vec<u64>);

fn key(level: usize, tail: &[f64]) -> Key {
    (level, tail.iter().map(|x| x.to_bits()).collect())
}

struct Reducer<'a> {
    chain: ChainEvaluator<'a>,
    g: &'a VectorFn<'a>,
    h_cache: Mutex<HashMap<Key, Vec<Complex64>>>,
    w_cache: Mutex<HashMap<Key, Vec<Complex64>>>,
}

impl<'a> Reducer<'a> {
    fn spec(&self) -> &ProblemSpec {
        self.chain.spec()
    }

    fn h(&self, level: usize, tail: &[f64]) -> Result<Vec<Complex64>> {
        if level == 0 {
            let v = (self.g)(tail);
            let m = self.spec().cell_size;
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                });
            }
            return Ok(v);
        }
        let k = key(level, tail);
        if let Some(v) = self.h_cache.lock().expect("cache lock").get(&k) {
            return Ok(v.clone());
        }
        let lower = level - 1;
        let tol = &self.spec().tolerances;
        let line = integrate_line(
            |x| {
                let mut kk = vec![x];
                kk.extend_from_slice(tail);
                let h = self.h(lower, &kk)?;
                let v = if self.chain.is_pass_through(lower) {
                    h
                } else {
                    solve(&self.chain.level(lower, &kk)?, &h)?
                };
                Ok(column(&v))
            },
            tol.quad_rel_tol,
            tol.k_grid_base,
            MAX_LINE_POINTS,
        )?;
        let v = first_column(&line.value);
        self.h_cache
            .lock()
            .expect("cache lock")
            .insert(k, v.clone());
        Ok(v)
    }

    /// `w_i(k_{i+1..N}) = <f>_{1..i}`.
    fn w(&self, level: usize, tail: &[f64]) -> Result<Vec<Complex64>> {
        let k = key(level, tail);
        if let Some(v) = self.w_cache.lock().expect("cache lock").get(&k) {
            return Ok(v.clone());
        }
        let n_dim = self.spec().dimension;
        let mut rhs = self.h(level, tail)?;
        let mut coupling = vec![Complex64::new(0.0, 0.0); rhs.len()];
        let mut coupled = false;
        for j in level + 1..=n_dim {
            let sub = &tail[j - level..];
            if let Some(a) = self.chain.defect_matrix(j, sub) {
                let wj = self.w(j, sub)?;
                for (c, x) in coupling.iter_mut().zip(a.mul_vec(&wj)) {
                    *c += x;
                }
                coupled = true;
            }
        }
        if coupled {
            let gc = self.chain.green(level, tail)?.mul_vec(&coupling);
            for (r, x) in rhs.iter_mut().zip(gc) {
                *r -= x;
            }
        }
        let v = if self.chain.is_pass_through(level) {
            rhs
        } else {
            solve(&self.chain.level(level, tail)?, &rhs)?
        };
        self.w_cache
            .lock()
            .expect("cache lock")
            .insert(k, v.clone());
        Ok(v)
    }
}

/// Grid brackets `<f>_{1..j}` for every node of the remaining axes.
fn grid_brackets(
    values: &[Vec<Complex64>],
    n_dim: usize,
    n: usize,
    j: usize,
) -> Vec<Vec<Complex64>> {
    let tail_count = n.pow((n_dim - j) as u32);
    let head_count = n.pow(j as u32);
    let m = values.first().map_or(0, Vec::len);
    let w = bracket_weight(j, n);
    (0..tail_count)
        .map(|t| {
            let mut acc = vec![Complex64::new(0.0, 0.0); m];
            for s in 0..head_count {
                for (a, x) in acc.iter_mut().zip(&values[s * tail_count + t]) {
                    *a += x;
                }
            }
            acc.into_iter().map(|x| x * w).collect()
        })
        .collect()
}

/// `Ĉ_0 f` on the grid, with the brackets taken by the grid trapezoid rule
/// (exact for trigonometric polynomials of degree below `k_points`).
pub fn apply_operator(
    spec: &ProblemSpec,
    omega: f64,
    values: &[Vec<Complex64>],
    k_points: usize,
) -> Result<Vec<Vec<Complex64>>> {
    let n_dim = spec.dimension;
    let n = k_points;
    let total = n.pow(n_dim as u32);
    if values.len() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            got: values.len(),
        });
    }
    let chain = ChainEvaluator::real(spec, omega);
    let brackets: Vec<Option<Vec<Vec<Complex64>>>> = (0..=n_dim)
        .map(|j| (j > 0 && spec.defect(j).is_some()).then(|| grid_brackets(values, n_dim, n, j)))
        .collect();
    Ok(exec::map_indexed(total, |i| {
        let k = grid_coords(i, n_dim, n);
        let mut out = chain.b0(&k).mul_vec(&values[i]);
        for j in 1..=n_dim {
            let Some(b) = &brackets[j] else { continue };
            let tail = &k[j..];
            if let Some(a) = chain.defect_matrix(j, tail) {
                let t = i % n.pow((n_dim - j) as u32);
                for (o, x) in out.iter_mut().zip(a.mul_vec(&b[t])) {
                    *o += x;
                }
            }
        }
        out
    }))
}

fn grid_norm(v: &[Vec<Complex64>]) -> f64 {
    v.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Solve `Ĉ_0 f = g` at a real ω outside the spectrum and report the
/// residual of the forward operator on the grid.
pub fn resolvent_apply(
    spec: &ProblemSpec,
    omega: f64,
    g: &VectorFn<'_>,
    grids: &SweepGrids,
) -> Result<ResolventSolution> {
    let certificate = membership(spec, omega, grids)?;
    match certificate.verdict {
        Verdict::Out => {}
        Verdict::In => {
            return Err(Error::InvalidInput(format!(
                "omega = {omega} is in the spectrum (step {:?})",
                certificate.detected_at_step
            )))
        }
        Verdict::Inconclusive => {
            return Err(Error::InvalidInput(format!(
                "omega = {omega}: chain not certified ({})",
                certificate.note.clone().unwrap_or_default()
            )))
        }
    }
    let n_dim = spec.dimension;
    let n = grids.k_points;
    let reducer = Reducer {
        chain: ChainEvaluator::real(spec, omega),
        g,
        h_cache: Mutex::new(HashMap::new()),
        w_cache: Mutex::new(HashMap::new()),
    };
    let total = n.pow(n_dim as u32);
    let values = exec::try_map_indexed(total, |i| reducer.w(0, &grid_coords(i, n_dim, n)))?;
    let forward = apply_operator(spec, omega, &values, n)?;
    let g_grid: Vec<Vec<Complex64>> = (0..total).map(|i| g(&grid_coords(i, n_dim, n))).collect();
    let diff: Vec<Vec<Complex64>> = forward
        .iter()
        .zip(&g_grid)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let scale = grid_norm(&g_grid);
    let residual = if scale > 0.0 {
        grid_norm(&diff) / scale
    } else {
        grid_norm(&diff)
    };
    Ok(ResolventSolution {
        omega,
        k_points: n,
        values,
        residual,
        certificate,
    })
}
