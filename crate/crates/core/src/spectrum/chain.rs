//! Evaluation of the level matrices `B_j(ω, k_{j+1..N})`.
//!
//! Because `A_j` does not depend on `k_1..k_j`, it factors out of the
//! bracket:
//!
//! ```text
//! B_j = I + G_j A_j,    G_j = <B_{j-1}^{-1} … B_0^{-1}>_{1..j}
//! G_j(k_{j+1..N}) = <B_{j-1}^{-1}(k_j, ·) G_{j-1}(k_j, ·)>_j,   G_0 = I
//! ```
//!
//! so every level is a nested one-axis bracket. `G_j` values are cached per
//! remaining-coordinate tuple at a fixed ω.

use std::collections::HashMap;
use std::sync::Mutex;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::ProblemSpec;
use crate::quadrature::{grid_coords, integrate_line, node};
use crate::symbol::{det, hermitian_eigenvalues, inverse, smallest_singular_value, ComplexMatrix};

/// Point cap per axis for the chain brackets.
pub const MAX_LINE_POINTS: usize = 4096;

/// Relative size of `Im det` below which the determinant is treated as real.
pub const IMAG_GUARD: f64 = 1e-6;

type CacheKey = (usize, Vec<u64>);

/// Lazily evaluates the chain at a fixed ω.
pub struct ChainEvaluator<'a> {
    spec: &'a ProblemSpec,
    omega: Complex64,
    tol: f64,
    n_start: usize,
    n_max: usize,
    green_cache: Mutex<HashMap<CacheKey, ComplexMatrix>>,
}

fn key(level: usize, tail: &[f64]) -> CacheKey {
    (level, tail.iter().map(|x| x.to_bits()).collect())
}

impl<'a> ChainEvaluator<'a> {
    pub fn new(spec: &'a ProblemSpec, omega: Complex64) -> Self {
        Self {
            spec,
            omega,
            tol: spec.tolerances.quad_rel_tol,
            n_start: spec.tolerances.k_grid_base,
            n_max: MAX_LINE_POINTS,
            green_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn real(spec: &'a ProblemSpec, omega: f64) -> Self {
        Self::new(spec, Complex64::new(omega, 0.0))
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn omega(&self) -> Complex64 {
        self.omega
    }

    /// `B_0(ω, k)` at the full wavevector.
    pub fn b0(&self, k: &[f64]) -> ComplexMatrix {
        self.spec.bulk.eval_unchecked(self.omega, k)
    }

    /// `A_j(ω, k)` given `k_{j+1..N}`; `None` when level `j` has no defect.
    pub fn defect_matrix(&self, level: usize, tail: &[f64]) -> Option<ComplexMatrix> {
        let d = self.spec.defect(level)?;
        if d.symbol.is_zero() {
            return None;
        }
        let mut k = vec![0.0; level];
        k.extend_from_slice(tail);
        Some(d.symbol.eval_unchecked(self.omega, &k))
    }

    pub fn is_pass_through(&self, level: usize) -> bool {
        level > 0 && self.spec.defect(level).is_none_or(|d| d.symbol.is_zero())
    }

    /// `G_j(k_{j+1..N})`; `G_0 = I`.
    pub fn green(&self, level: usize, tail: &[f64]) -> Result<ComplexMatrix> {
        let m = self.spec.cell_size;
        if level == 0 {
            return Ok(ComplexMatrix::identity(m));
        }
        let k = key(level, tail);
        if let Some(v) = self.green_cache.lock().expect("cache lock").get(&k) {
            return Ok(v.clone());
        }
        let lower = level - 1;
        let lower_pass = self.is_pass_through(lower);
        let integrand = |x: f64| -> Result<ComplexMatrix> {
            let mut kk = Vec::with_capacity(tail.len() + 1);
            kk.push(x);
            kk.extend_from_slice(tail);
            let g = self.green(lower, &kk)?;
            if lower_pass {
                return Ok(g);
            }
            let b_inv = inverse(&self.level(lower, &kk)?)?;
            Ok(if lower == 0 { b_inv } else { &b_inv * &g })
        };
        let value = match integrate_line(integrand, self.tol, self.n_start, self.n_max) {
            Ok(line) => line.value,
            Err(Error::NonConvergence {
                points,
                change,
                min_sigma: None,
            }) => {
                return Err(Error::NonConvergence {
                    points,
                    change,
                    min_sigma: self.sigma_witness(lower, tail),
                })
            }
            Err(e) => return Err(e),
        };
        self.green_cache
            .lock()
            .expect("cache lock")
            .entry(k)
            .or_insert_with(|| value.clone());
        Ok(value)
    }

    /// Smallest singular value of `B_level` seen along the integrated axis.
    fn sigma_witness(&self, level: usize, tail: &[f64]) -> Option<f64> {
        let n = 64;
        (0..n)
            .filter_map(|l| {
                let mut kk = vec![node(l, n)];
                kk.extend_from_slice(tail);
                self.level(level, &kk)
                    .ok()
                    .map(|b| smallest_singular_value(&b))
            })
            .reduce(f64::min)
    }

    /// `B_j` at `k_{j+1..N}` (the full `k` for `j = 0`).
    pub fn level(&self, level: usize, tail: &[f64]) -> Result<ComplexMatrix> {
        let n = self.spec.dimension;
        if tail.len() + level != n {
            return Err(Error::DimensionMismatch {
                expected: n - level.min(n),
                got: tail.len(),
            });
        }
        if level == 0 {
            return Ok(self.b0(tail));
        }
        let id = ComplexMatrix::identity(self.spec.cell_size);
        match self.defect_matrix(level, tail) {
            None => Ok(id),
            Some(a) => Ok(&id + &(&self.green(level, tail)? * &a)),
        }
    }
}

/// How a level was found singular somewhere on its torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detection {
    /// The inertia of the Hermitian level matrix is degenerate at a node or
    /// changes between adjacent nodes: an eigenvalue crosses or touches zero.
    InertiaChange,
    /// The real determinant changes sign between adjacent nodes.
    DeterminantSignChange,
    /// A grid node has smallest singular value below `det_zero_tol`.
    SingularNode,
    /// Local refinement around the grid minimum reached `det_zero_tol`.
    RefinedMinimum,
}

/// How to decide "det B = 0 for some k" on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckMode {
    /// Hermitian matrices: track inertia.
    HermitianInertia,
    /// Real determinant: track its sign.
    RealDeterminant,
    /// Smallest singular value only.
    SingularValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub detection: Option<Detection>,
    pub min_sigma: f64,
    pub witness_k: Vec<f64>,
    /// Level matrix at the witness point.
    #[serde(skip)]
    pub witness_matrix: Option<ComplexMatrix>,
}

impl StepCheck {
    pub fn detected(&self) -> bool {
        self.detection.is_some()
    }
}

#[derive(Clone, Copy, Debug)]
struct NodeSample {
    sigma: f64,
    negative: usize,
    zero: usize,
    det: Complex64,
}

fn sample(b: &ComplexMatrix, mode: CheckMode, tol: f64) -> Result<NodeSample> {
    match mode {
        CheckMode::HermitianInertia => {
            // The family is Hermitian; drop rounding-level skew before the solver.
            let ev = hermitian_eigenvalues(&b.hermitian_part())?;
            Ok(NodeSample {
                sigma: ev.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min),
                negative: ev.iter().filter(|&&e| e < -tol).count(),
                zero: ev.iter().filter(|&&e| e.abs() <= tol).count(),
                det: Complex64::new(0.0, 0.0),
            })
        }
        CheckMode::RealDeterminant | CheckMode::SingularValue => {
            let d = det(b);
            let sigma = if b.dim() == 1 {
                d.norm()
            } else {
                smallest_singular_value(b)
            };
            Ok(NodeSample {
                sigma,
                negative: 0,
                zero: 0,
                det: d,
            })
        }
    }
}

fn real_sign(d: Complex64) -> Option<bool> {
    (d.im.abs() <= IMAG_GUARD * d.norm() && d.re != 0.0).then_some(d.re > 0.0)
}

fn differs(a: &NodeSample, b: &NodeSample, mode: CheckMode) -> Option<Detection> {
    match mode {
        CheckMode::HermitianInertia => {
            (a.negative != b.negative || a.zero != b.zero).then_some(Detection::InertiaChange)
        }
        CheckMode::RealDeterminant => match (real_sign(a.det), real_sign(b.det)) {
            (Some(x), Some(y)) if x != y => Some(Detection::DeterminantSignChange),
            _ => None,
        },
        CheckMode::SingularValue => None,
    }
}

/// Golden-section minimum of `f` on `[a, b]`.
pub(crate) fn golden_min<F>(f: F, mut a: f64, mut b: f64, iters: usize) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Decide whether `eval` (a matrix function of `dims` coordinates) is
/// singular somewhere on the torus, sampling an `n`-point grid per axis.
///
/// Sign or inertia changes between adjacent nodes certify a zero in between;
/// failing that, the grid minimum is refined once by coordinate-wise golden
/// section so tangential zeros between nodes are not missed.
pub fn step_check<F>(eval: F, dims: usize, n: usize, mode: CheckMode, tol: f64) -> Result<StepCheck>
where
    F: Fn(&[f64]) -> Result<ComplexMatrix> + Sync + Send,
{
    if dims == 0 {
        let b = eval(&[])?;
        let s = sample(&b, mode, tol)?;
        let d = det(&b);
        let singular = s.sigma <= tol || d.norm() <= tol;
        return Ok(StepCheck {
            detection: singular.then_some(Detection::SingularNode),
            min_sigma: s.sigma,
            witness_k: vec![],
            witness_matrix: Some(b),
        });
    }
    let total = n.pow(dims as u32);
    let samples = exec::try_map_indexed(total, |i| {
        let k = grid_coords(i, dims, n);
        sample(&eval(&k)?, mode, tol)
    })?;
    let argmin = (0..total)
        .min_by(|&a, &b| samples[a].sigma.total_cmp(&samples[b].sigma))
        .expect("non-empty grid");
    let finish = |detection: Option<Detection>, at: usize, min_sigma: f64| -> Result<StepCheck> {
        let k = grid_coords(at, dims, n);
        Ok(StepCheck {
            detection,
            min_sigma,
            witness_matrix: Some(eval(&k)?),
            witness_k: k,
        })
    };
    let min_sigma = samples[argmin].sigma;

    if mode == CheckMode::HermitianInertia {
        if let Some(i) = (0..total).find(|&i| samples[i].zero > 0) {
            return finish(Some(Detection::InertiaChange), i, min_sigma);
        }
    }
    if min_sigma <= tol {
        return finish(Some(Detection::SingularNode), argmin, min_sigma);
    }
    // Adjacent pairs along each axis, with periodic wrap.
    let stride = |axis: usize| n.pow((dims - 1 - axis) as u32);
    for i in 0..total {
        for axis in 0..dims {
            let s = stride(axis);
            let l = (i / s) % n;
            let j = i - l * s + ((l + 1) % n) * s;
            if let Some(det) = differs(&samples[i], &samples[j], mode) {
                let at = if samples[i].sigma <= samples[j].sigma {
                    i
                } else {
                    j
                };
                return finish(Some(det), at, min_sigma);
            }
        }
    }

    // Refine around the grid minimum.
    let h = std::f64::consts::TAU / n as f64;
    let mut k = grid_coords(argmin, dims, n);
    let sigma_at = |k: &[f64]| -> Result<f64> { Ok(sample(&eval(k)?, mode, tol)?.sigma) };
    let mut best = min_sigma;
    for _sweep in 0..2 {
        for axis in 0..dims {
            let centre = k[axis];
            let (x, fx) = golden_min(
                |x| {
                    let mut kk = k.clone();
                    kk[axis] = x;
                    sigma_at(&kk)
                },
                centre - h,
                centre + h,
                60,
            )?;
            if fx < best {
                best = fx;
                k[axis] = x;
            }
        }
    }
    let refined = sample(&eval(&k)?, mode, tol)?;
    let detection = if refined.sigma <= tol {
        Some(Detection::RefinedMinimum)
    } else {
        differs(&samples[argmin], &refined, mode)
    };
    let witness_matrix = Some(eval(&k)?);
    Ok(StepCheck {
        detection,
        min_sigma: best.min(refined.sigma),
        witness_k: k,
        witness_matrix,
    })
}

/// Certificate for one level of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCertificate {
    pub level: usize,
    /// No defect at this level: `B_j = I`.
    pub pass_through: bool,
    pub check: StepCheck,
}

impl LevelCertificate {
    pub fn certified_invertible(&self, tol: f64) -> bool {
        !self.check.detected() && self.check.min_sigma > tol
    }
}

/// The chain `B_0, …, B_N` at a fixed real ω, built level by level.
pub struct BChain<'a> {
    evaluator: ChainEvaluator<'a>,
    k_points: usize,
    levels: Vec<LevelCertificate>,
}

impl<'a> BChain<'a> {
    /// Evaluate and check `B_0`.
    pub fn start(spec: &'a ProblemSpec, omega: f64, k_points: usize) -> Result<Self> {
        let mut chain = Self {
            evaluator: ChainEvaluator::real(spec, omega),
            k_points,
            levels: Vec::new(),
        };
        chain.check_level(0)?;
        Ok(chain)
    }

    pub fn omega(&self) -> f64 {
        self.evaluator.omega().re
    }

    pub fn evaluator(&self) -> &ChainEvaluator<'a> {
        &self.evaluator
    }

    pub fn levels(&self) -> &[LevelCertificate] {
        &self.levels
    }

    pub fn last(&self) -> &LevelCertificate {
        self.levels.last().expect("level 0 is always present")
    }

    pub fn is_complete(&self) -> bool {
        self.levels.len() == self.evaluator.spec.dimension + 1
    }

    fn mode(&self, level: usize) -> CheckMode {
        let spec = self.evaluator.spec;
        if level == 0 && spec.bulk.is_hermitian_family() {
            CheckMode::HermitianInertia
        } else if level > 0 && spec.is_hermitian() {
            CheckMode::RealDeterminant
        } else {
            CheckMode::SingularValue
        }
    }

    fn check_level(&mut self, level: usize) -> Result<&LevelCertificate> {
        let spec = self.evaluator.spec;
        let tol = spec.tolerances.det_zero_tol;
        let cert = if self.evaluator.is_pass_through(level) {
            LevelCertificate {
                level,
                pass_through: true,
                check: StepCheck {
                    detection: None,
                    min_sigma: 1.0,
                    witness_k: vec![],
                    witness_matrix: Some(ComplexMatrix::identity(spec.cell_size)),
                },
            }
        } else {
            let dims = spec.dimension - level;
            let mode = self.mode(level);
            let ev = &self.evaluator;
            let check = step_check(|tail| ev.level(level, tail), dims, self.k_points, mode, tol)?;
            LevelCertificate {
                level,
                pass_through: false,
                check,
            }
        };
        self.levels.push(cert);
        Ok(self.last())
    }

    /// Build and check the next level.
    ///
    /// # Panics
    /// If the current top level is not certified invertible, or the chain is
    /// already complete.
    pub fn extend(&mut self) -> Result<&LevelCertificate> {
        let tol = self.evaluator.spec.tolerances.det_zero_tol;
        assert!(!self.is_complete(), "chain already has all levels");
        assert!(
            self.last().certified_invertible(tol),
            "level {} is not certified invertible",
            self.last().level
        );
        let next = self.levels.len();
        self.check_level(next)
    }

    /// `B_j` at given remaining coordinates.
    pub fn level_matrix(&self, level: usize, tail: &[f64]) -> Result<ComplexMatrix> {
        assert!(level < self.levels.len(), "level {level} not built yet");
        self.evaluator.level(level, tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::symbol::TrigMatrixPolynomial;
    use crate::{OmegaSymbol, ToleranceSet};
    use std::f64::consts::PI;

    fn scalar_b0(shift: f64, phase: f64) -> impl Fn(&[f64]) -> Result<ComplexMatrix> + Sync {
        move |k: &[f64]| {
            Ok(ComplexMatrix::scalar(Complex64::new(
                2.0 * (k[0] - phase).cos() - shift,
                0.0,
            )))
        }
    }

    #[test]
    fn build_b0_examples() {
        let spec = models::chain_adjacency();
        let ev = ChainEvaluator::real(&spec, 0.0);
        assert!((ev.b0(&[0.4])[(0, 0)].re - 2.0 * 0.4f64.cos()).abs() < 1e-15);
        let ev = ChainEvaluator::real(&spec, 3.0);
        assert!((ev.b0(&[0.4])[(0, 0)].re - (2.0 * 0.4f64.cos() - 3.0)).abs() < 1e-15);
        let sq = models::square_lattice();
        assert_eq!(
            ChainEvaluator::real(&sq, 0.0).b0(&[0.0, 0.0])[(0, 0)].re,
            4.0
        );
    }

    #[test]
    fn step_check_inside_band() {
        let c = step_check(
            scalar_b0(1.0, 0.0),
            1,
            64,
            CheckMode::HermitianInertia,
            1e-9,
        )
        .unwrap();
        assert!(c.detected());
    }

    #[test]
    fn step_check_outside_band() {
        let c = step_check(
            scalar_b0(3.0, 0.0),
            1,
            64,
            CheckMode::HermitianInertia,
            1e-9,
        )
        .unwrap();
        assert!(!c.detected());
        assert!((c.min_sigma - 1.0).abs() < 1e-14);
        assert_eq!(c.witness_k, vec![0.0]);
    }

    #[test]
    fn step_check_band_edge_on_node() {
        let c = step_check(
            scalar_b0(2.0, 0.0),
            1,
            64,
            CheckMode::HermitianInertia,
            1e-9,
        )
        .unwrap();
        assert_eq!(c.detection, Some(Detection::InertiaChange));
        assert_eq!(c.witness_k, vec![0.0]);
    }

    #[test]
    fn step_check_tangential_zero_between_nodes() {
        // Band maximum at an off-grid k; only refinement can see it.
        let phase = 0.123_456_789;
        let c = step_check(
            scalar_b0(2.0, phase),
            1,
            64,
            CheckMode::HermitianInertia,
            1e-9,
        )
        .unwrap();
        assert_eq!(c.detection, Some(Detection::RefinedMinimum));
        assert!((c.witness_k[0] - phase).abs() < 1e-4);
        // Slightly above the band maximum stays clear.
        let c = step_check(
            scalar_b0(2.0 + 1e-6, phase),
            1,
            64,
            CheckMode::HermitianInertia,
            1e-9,
        )
        .unwrap();
        assert!(!c.detected());
        assert!((c.min_sigma - 1e-6).abs() < 1e-9);
    }

    #[test]
    fn step_check_determinant_modes() {
        let c = step_check(scalar_b0(1.0, 0.3), 1, 16, CheckMode::RealDeterminant, 1e-9).unwrap();
        assert_eq!(c.detection, Some(Detection::DeterminantSignChange));
        let c = step_check(scalar_b0(1.0, 0.3), 1, 16, CheckMode::SingularValue, 1e-9).unwrap();
        assert_eq!(c.detection, Some(Detection::RefinedMinimum));
    }

    #[test]
    fn point_defect_level_one_value() {
        let spec = models::chain_with_point_defect(1.0);
        let ev = ChainEvaluator::real(&spec, 3.0);
        let b1 = ev.level(1, &[]).unwrap()[(0, 0)];
        assert!((b1.re - (1.0 - 1.0 / 5f64.sqrt())).abs() < 1e-12, "{b1}");
        assert!(b1.im.abs() < 1e-14);
    }

    #[test]
    fn zero_defect_is_identity() {
        let spec = models::chain_with_point_defect(0.0);
        let ev = ChainEvaluator::real(&spec, 2.7);
        assert_eq!(ev.level(1, &[]).unwrap(), ComplexMatrix::identity(1));
    }

    #[test]
    fn line_defect_level_vanishes_on_branch() {
        let spec = models::square_with_line_defect(1.0);
        for k2 in [0.0, 0.7, -2.1] {
            let lambda = 2.0 * f64::cos(k2) + 5f64.sqrt();
            let ev = ChainEvaluator::real(&spec, lambda);
            let b1 = ev.level(1, &[k2]).unwrap()[(0, 0)];
            assert!(b1.norm() < 1e-8, "k2={k2}: {b1}");
        }
    }

    #[test]
    fn nested_green_matches_closed_form() {
        // Square lattice with a line defect only: G_2 = <G_1 / (1 + G_1 A_1)>_2
        // must equal the direct 2D integral when A_1 = 0.
        let mut spec = models::square_lattice();
        spec.defects.push(crate::DefectLayer::from_symbol(
            2,
            OmegaSymbol::static_symbol(TrigMatrixPolynomial::constant(
                2,
                ComplexMatrix::scalar(Complex64::new(0.5, 0.0)),
            )),
        ));
        let ev = ChainEvaluator::real(&spec, 5.0);
        let g2 = ev.green(2, &[]).unwrap()[(0, 0)].re;
        // (2π)^{-1} ∫∫ dk / (2cos k1 + 2cos k2 - 5) as 1D integral of the 1D closed form.
        let mut reference = 0.0;
        let n = 4096;
        for l in 0..n {
            let k2 = -PI + 2.0 * PI * l as f64 / n as f64;
            let lam = 5.0 - 2.0 * k2.cos();
            reference += -1.0 / (lam * lam - 4.0).sqrt();
        }
        reference /= n as f64;
        assert!(
            (g2 - reference * 2.0 * PI).abs() < 1e-11,
            "{g2} vs {}",
            reference * 2.0 * PI
        );
    }

    #[test]
    #[should_panic(expected = "not certified invertible")]
    fn extend_requires_certificate() {
        let spec = models::chain_with_point_defect(1.0);
        let mut chain = BChain::start(&spec, 1.0, 64).unwrap();
        assert!(chain.last().check.detected());
        let _ = chain.extend();
    }

    #[test]
    fn chain_extends_through_levels() {
        let spec = models::chain_with_point_defect(1.0).with_tolerances(ToleranceSet::default());
        let mut chain = BChain::start(&spec, 3.0, 64).unwrap();
        assert!(!chain.last().check.detected());
        let top = chain.extend().unwrap();
        assert!(!top.check.detected());
        assert!((top.check.min_sigma - 0.552_786_404_5).abs() < 1e-9);
        assert!(chain.is_complete());
    }
}
