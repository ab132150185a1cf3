//! Brute-force cross-checks: finite real-space boxes diagonalized densely.
//!
//! Open boundaries isolate defect modes with exponentially small error;
//! periodic boundaries make the defect-free spectrum an exact union of band
//! values at the discrete momenta `2πm/L`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{defect_normalization, ProblemSpec};
use crate::spectrum::{bands, SpectralResult};
use crate::symbol::ComplexMatrix;

/// Largest operator dimension the dense solver accepts.
pub const MAX_DIMENSION: usize = 20_000;

/// Eigenvectors with more than this weight near an open face are edge modes.
pub const EDGE_MASS_THRESHOLD: f64 = 0.5;

/// Cells from an open face that count as "near the boundary".
pub const EDGE_CELLS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Open,
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Self::Periodic),
            "open" => Ok(Self::Open),
            other => Err(Error::InvalidInput(format!(
                "unknown boundary condition '{other}' (expected periodic or open)"
            ))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Periodic => "periodic",
            Self::Open => "open",
        })
    }
}

/// How one lattice axis is truncated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisBox {
    /// Cells `-L..=L`, couplings leaving the box dropped.
    Open(usize),
    /// `L` cells with wrap-around.
    Periodic(usize),
    /// Reduced by the Bloch phase `e^{i k}`: one cell, couplings picked up
    /// with phase `e^{i n k}`.
    Bloch(f64),
}

impl AxisBox {
    fn extent(&self) -> usize {
        match *self {
            Self::Open(l) => 2 * l + 1,
            Self::Periodic(l) => l,
            Self::Bloch(_) => 1,
        }
    }

    /// Index of lattice coordinate 0.
    fn origin(&self) -> usize {
        match *self {
            Self::Open(l) => l,
            _ => 0,
        }
    }

    /// Move `index` by `step`, returning the new index and a phase.
    fn shift(&self, index: usize, step: i64) -> Option<(usize, Complex64)> {
        match *self {
            Self::Open(l) => {
                let t = index as i64 + step;
                (0..=2 * l as i64)
                    .contains(&t)
                    .then_some((t as usize, Complex64::new(1.0, 0.0)))
            }
            Self::Periodic(l) => Some((
                (index as i64 + step).rem_euclid(l as i64) as usize,
                Complex64::new(1.0, 0.0),
            )),
            Self::Bloch(k) => Some((0, Complex64::from_polar(1.0, step as f64 * k))),
        }
    }

    fn near_open_face(&self, index: usize) -> bool {
        match *self {
            Self::Open(l) => index <= EDGE_CELLS || 2 * l - index <= EDGE_CELLS,
            _ => false,
        }
    }
}

/// Finite real-space matrix of bulk plus defects.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub axes: Vec<AxisBox>,
    pub cell_size: usize,
    pub matrix: DMatrix<Complex64>,
    /// `max |T - T^H|`.
    pub asymmetry: f64,
}

impl TruncatedOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn extents(&self) -> Vec<usize> {
        self.axes.iter().map(AxisBox::extent).collect()
    }
}

fn site_index(cell: &[usize], extents: &[usize]) -> usize {
    cell.iter()
        .zip(extents)
        .fold(0, |acc, (&c, &e)| acc * e + c)
}

fn cell_of(mut index: usize, extents: &[usize]) -> Vec<usize> {
    let mut out = vec![0; extents.len()];
    for d in (0..extents.len()).rev() {
        out[d] = index % extents[d];
        index /= extents[d];
    }
    out
}

/// Real-space hoppings of the defect at `codim`: offsets on `Z^{N-j}`.
fn defect_hoppings(spec: &ProblemSpec, codim: usize) -> Result<Vec<(Vec<i64>, ComplexMatrix)>> {
    let layer = spec.defect(codim).expect("caller checked presence");
    if layer
        .symbol
        .terms()
        .any(|(p, t)| p > 0 && !t.pruned().is_zero())
    {
        return Err(Error::Unsupported(format!(
            "defect at codim {codim} depends on omega; the truncated oracle needs an eigenvalue problem"
        )));
    }
    if let Some(stencils) = &layer.stencils {
        return Ok(stencils
            .get(&0)
            .map(|st| st.hoppings().map(|(m, h)| (m.clone(), h.clone())).collect())
            .unwrap_or_default());
    }
    let inv = Complex64::new(1.0 / defect_normalization(codim), 0.0);
    Ok(layer
        .symbol
        .term(0)
        .map(|t| {
            t.terms()
                .map(|(n, h)| (n[codim..].to_vec(), h.scale(inv)))
                .collect()
        })
        .unwrap_or_default())
}

/// Assemble on a box described axis by axis.
pub fn assemble_box(spec: &ProblemSpec, axes: &[AxisBox]) -> Result<TruncatedOperator> {
    let n_dim = spec.dimension;
    if axes.len() != n_dim {
        return Err(Error::DimensionMismatch {
            expected: n_dim,
            got: axes.len(),
        });
    }
    if !spec.bulk.is_standard_shift() {
        return Err(Error::Unsupported(
            "the truncated oracle needs A(k) - omega I; linearize a polynomial family to companion form first".into(),
        ));
    }
    for ax in axes {
        if matches!(ax, AxisBox::Open(_) | AxisBox::Periodic(_)) && ax.extent() == 0 {
            return Err(Error::InvalidInput(
                "box needs at least one cell per axis".into(),
            ));
        }
    }
    let m = spec.cell_size;
    let extents: Vec<usize> = axes.iter().map(AxisBox::extent).collect();
    let cells: usize = extents.iter().product();
    let dim = cells * m;
    if dim > MAX_DIMENSION {
        return Err(Error::TooLarge {
            dim,
            cap: MAX_DIMENSION,
        });
    }
    let mut matrix = DMatrix::<Complex64>::zeros(dim, dim);
    let mut couple = |from: &[usize], offset: &[i64], h: &ComplexMatrix| {
        let mut to = from.to_vec();
        let mut phase = Complex64::new(1.0, 0.0);
        for (d, ax) in axes.iter().enumerate() {
            match ax.shift(from[d], offset[d]) {
                Some((t, p)) => {
                    to[d] = t;
                    phase *= p;
                }
                None => return,
            }
        }
        let (r, c) = (
            site_index(from, &extents) * m,
            site_index(&to, &extents) * m,
        );
        for i in 0..m {
            for j in 0..m {
                matrix[(r + i, c + j)] += phase * h[(i, j)];
            }
        }
    };

    let bulk: Vec<(Vec<i64>, ComplexMatrix)> = spec
        .bulk
        .term(0)
        .map(|t| t.terms().map(|(n, h)| (n.clone(), h.clone())).collect())
        .unwrap_or_default();
    for s in 0..cells {
        let cell = cell_of(s, &extents);
        for (n, h) in &bulk {
            couple(&cell, n, h);
        }
    }
    for layer in &spec.defects {
        let j = layer.codim;
        if let Some(d) = axes[..j]
            .iter()
            .position(|a| matches!(a, AxisBox::Bloch(_)))
        {
            return Err(Error::Unsupported(format!(
                "axis {} carries the codim {j} defect and cannot be Bloch-reduced",
                d + 1
            )));
        }
        let hops = defect_hoppings(spec, j)?;
        let tail_extents = &extents[j..];
        let tail_cells: usize = tail_extents.iter().product();
        for t in 0..tail_cells {
            let mut cell: Vec<usize> = axes[..j].iter().map(AxisBox::origin).collect();
            cell.extend(cell_of(t, tail_extents));
            for (mm, h) in &hops {
                let mut offset = vec![0; j];
                offset.extend_from_slice(mm);
                couple(&cell, &offset, h);
            }
        }
    }
    let asymmetry = (0..dim)
        .flat_map(|i| (0..dim).map(move |j| (i, j)))
        .map(|(i, j)| (matrix[(i, j)] - matrix[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    if spec.is_hermitian()
        && asymmetry > 1e-14 * matrix.iter().map(|z| z.norm()).fold(1.0, f64::max)
    {
        return Err(Error::NotHermitian {
            deviation: asymmetry,
        });
    }
    Ok(TruncatedOperator {
        axes: axes.to_vec(),
        cell_size: m,
        matrix,
        asymmetry,
    })
}

/// Box of half-width `l` with the same boundary on every axis. Periodic
/// boxes have `l` cells per axis, open ones `2l + 1`.
pub fn assemble_truncated(spec: &ProblemSpec, l: usize, bc: Boundary) -> Result<TruncatedOperator> {
    let ax = match bc {
        Boundary::Open => AxisBox::Open(l),
        Boundary::Periodic => AxisBox::Periodic(l),
    };
    assemble_box(spec, &vec![ax; spec.dimension])
}

/// Eigenvalues and boundary weight of each eigenvector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpectrum {
    pub values: Vec<f64>,
    pub edge_mass: Vec<f64>,
}

impl OracleSpectrum {
    pub fn is_edge_mode(&self, i: usize) -> bool {
        self.edge_mass[i] > EDGE_MASS_THRESHOLD
    }

    /// Oracle eigenvalue closest to `x`.
    pub fn nearest(&self, x: f64) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
    }
}

fn check_hermitian(t: &TruncatedOperator) -> Result<()> {
    let scale = t.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if t.asymmetry > 1e-14 * scale {
        return Err(Error::NotHermitian {
            deviation: t.asymmetry,
        });
    }
    Ok(())
}

/// All eigenvalues, ascending.
pub fn oracle_eigenvalues(t: &TruncatedOperator) -> Result<Vec<f64>> {
    check_hermitian(t)?;
    let mut v: Vec<f64> = t
        .matrix
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Eigenvalues with the weight of each eigenvector near open faces.
pub fn oracle_spectrum(t: &TruncatedOperator) -> Result<OracleSpectrum> {
    check_hermitian(t)?;
    let eig = t.matrix.clone().symmetric_eigen();
    let extents = t.extents();
    let m = t.cell_size;
    let near: Vec<bool> = (0..t.dim())
        .map(|row| {
            let cell = cell_of(row / m, &extents);
            t.axes
                .iter()
                .zip(&cell)
                .any(|(ax, &c)| ax.near_open_face(c))
        })
        .collect();
    let mut pairs: Vec<(f64, f64)> = (0..t.dim())
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            let mass: f64 = col
                .iter()
                .zip(&near)
                .filter(|(_, &n)| n)
                .map(|(z, _)| z.norm_sqr())
                .sum();
            (eig.eigenvalues[i], mass / col.norm_squared())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(OracleSpectrum {
        values: pairs.iter().map(|p| p.0).collect(),
        edge_mass: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Momenta `2πm/L`, the Bloch phases a periodic box of `L` cells admits.
pub fn box_momenta(l: usize) -> Vec<f64> {
    (0..l)
        .map(|m| std::f64::consts::TAU * m as f64 / l as f64)
        .collect()
}

/// Max deviation between the sorted periodic-box spectrum and the sorted
/// band values at the box momenta. Requires a defect-free problem.
pub fn periodic_box_check(spec: &ProblemSpec, l: usize) -> Result<f64> {
    if !spec.defects.is_empty() {
        return Err(Error::InvalidInput(
            "the periodic-box identity needs a defect-free problem".into(),
        ));
    }
    let oracle = oracle_eigenvalues(&assemble_truncated(spec, l, Boundary::Periodic)?)?;
    let n_dim = spec.dimension;
    let ks = box_momenta(l);
    let mut predicted = Vec::with_capacity(oracle.len());
    for i in 0..l.pow(n_dim as u32) {
        let mut rest = i;
        let mut k = vec![0.0; n_dim];
        for d in (0..n_dim).rev() {
            k[d] = ks[rest % l];
            rest /= l;
        }
        predicted.extend(bands(spec, &k)?);
    }
    predicted.sort_by(f64::total_cmp);
    if predicted.len() != oracle.len() {
        return Err(Error::DimensionMismatch {
            expected: oracle.len(),
            got: predicted.len(),
        });
    }
    Ok(predicted
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Eigenvalues of each Bloch sector of a strip: axes listed as `Periodic(L)`
/// are reduced at their box momenta, the rest keep their truncation.
pub fn strip_sectors(spec: &ProblemSpec, axes: &[AxisBox]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let periodic: Vec<(usize, usize)> = axes
        .iter()
        .enumerate()
        .filter_map(|(d, a)| match a {
            AxisBox::Periodic(l) => Some((d, *l)),
            _ => None,
        })
        .collect();
    let count: usize = periodic.iter().map(|p| p.1).product();
    let sectors = crate::exec::try_map_indexed(count, |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rest = i;
        let mut reduced = axes.to_vec();
        let mut ks = vec![0.0; periodic.len()];
        for (slot, &(d, l)) in periodic.iter().enumerate().rev() {
            ks[slot] = box_momenta(l)[rest % l];
            rest /= l;
            reduced[d] = AxisBox::Bloch(ks[slot]);
        }
        Ok((ks, oracle_eigenvalues(&assemble_box(spec, &reduced)?)?))
    })?;
    Ok(sectors)
}

/// Outcome of matching an oracle spectrum against an assembled Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tol: f64,
    /// Largest distance to Ω among eigenvalues that are not edge modes.
    pub max_distance: f64,
    /// Non-edge eigenvalues farther than `tol` from Ω.
    pub outside: Vec<f64>,
    /// Eigenvalues skipped as boundary artifacts.
    pub edge_modes: usize,
    pub isolated: Vec<IsolatedMatch>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolatedMatch {
    pub predicted: f64,
    pub nearest: Option<f64>,
    pub difference: f64,
    pub matched: bool,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.outside.is_empty() && self.isolated.iter().all(|m| m.matched)
    }
}

/// Check every non-edge oracle eigenvalue lies within `tol` of Ω and every
/// isolated point of Ω has an oracle eigenvalue within `tol`.
pub fn compare_spectra(
    result: &SpectralResult,
    oracle: &OracleSpectrum,
    tol: f64,
) -> ComparisonReport {
    let omega = result.omega_set();
    let window = &result.omega_window;
    let mut max_distance: f64 = 0.0;
    let mut outside = Vec::new();
    let mut edge_modes = 0;
    for (i, &e) in oracle.values.iter().enumerate() {
        if !window.contains(e) {
            continue;
        }
        if oracle.is_edge_mode(i) {
            edge_modes += 1;
            continue;
        }
        let d = crate::spectrum::distance_to_union(e, &omega);
        max_distance = max_distance.max(d);
        if d > tol {
            outside.push(e);
        }
    }
    let isolated = result
        .isolated_points()
        .map(|p| {
            let nearest = oracle.nearest(p);
            let difference = nearest.map_or(f64::INFINITY, |x| (x - p).abs());
            IsolatedMatch {
                predicted: p,
                nearest,
                difference,
                matched: difference <= tol,
            }
        })
        .collect();
    ComparisonReport {
        tol,
        max_distance,
        outside,
        edge_modes,
        isolated,
    }
}

/// Gap between a predicted isolated point and the nearest open-box
/// eigenvalue at two box sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub predicted: f64,
    pub small_l: usize,
    pub large_l: usize,
    pub gap_small: f64,
    pub gap_large: f64,
}

impl DecayCheck {
    /// The larger box is at least as close (or both agree to rounding).
    pub fn shrinks(&self) -> bool {
        self.gap_large <= self.gap_small || self.gap_large <= 1e-12
    }
}

pub fn decay_check(
    spec: &ProblemSpec,
    points: &[f64],
    small_l: usize,
    large_l: usize,
) -> Result<Vec<DecayCheck>> {
    let small = oracle_eigenvalues(&assemble_truncated(spec, small_l, Boundary::Open)?)?;
    let large = oracle_eigenvalues(&assemble_truncated(spec, large_l, Boundary::Open)?)?;
    let gap = |v: &[f64], p: f64| {
        v.iter()
            .map(|x| (x - p).abs())
            .fold(f64::INFINITY, f64::min)
    };
    Ok(points
        .iter()
        .map(|&p| DecayCheck {
            predicted: p,
            small_l,
            large_l,
            gap_small: gap(&small, p),
            gap_large: gap(&large, p),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use std::f64::consts::PI;

    #[test]
    fn open_chain_is_tridiagonal() {
        let t = assemble_truncated(&models::chain_adjacency(), 5, Boundary::Open).unwrap();
        assert_eq!(t.dim(), 11);
        for i in 0..11usize {
            for j in 0..11usize {
                let expect = if i.abs_diff(j) == 1 { 1.0 } else { 0.0 };
                assert_eq!(t.matrix[(i, j)], Complex64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn point_defect_on_centre_diagonal() {
        let t =
            assemble_truncated(&models::chain_with_point_defect(0.7), 5, Boundary::Open).unwrap();
        assert_eq!(t.matrix[(5, 5)].re, 0.7);
        assert_eq!(t.matrix[(4, 4)].re, 0.0);
    }

    #[test]
    fn periodic_circulant() {
        let t = assemble_truncated(&models::chain_adjacency(), 4, Boundary::Periodic).unwrap();
        let e = oracle_eigenvalues(&t).unwrap();
        let expect = [-2.0, 0.0, 0.0, 2.0];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{e:?}");
        }
    }

    #[test]
    fn open_chain_closed_form() {
        let t = assemble_truncated(&models::chain_adjacency(), 5, Boundary::Open).unwrap();
        let e = oracle_eigenvalues(&t).unwrap();
        let mut expect: Vec<f64> = (1..=11)
            .map(|m| 2.0 * f64::cos(PI * m as f64 / 12.0))
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn single_site() {
        let t = assemble_box(&models::chain_with_point_defect(1.0), &[AxisBox::Open(0)]).unwrap();
        assert_eq!(oracle_eigenvalues(&t).unwrap(), vec![1.0]);
    }

    #[test]
    fn size_cap() {
        let err = assemble_truncated(&models::square_lattice(), 80, Boundary::Open).unwrap_err();
        assert!(matches!(err, Error::TooLarge { dim: 25921, .. }));
    }

    #[test]
    fn quadratic_family_rejected() {
        let err = assemble_truncated(&models::wave_chain_with_mass_defect(0.5), 4, Boundary::Open)
            .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn box_identity() {
        assert!(periodic_box_check(&models::chain_adjacency(), 8).unwrap() <= 1e-12);
        assert!(periodic_box_check(&models::square_lattice(), 6).unwrap() <= 1e-11);
        assert!(periodic_box_check(&models::bipartite_chain(), 8).unwrap() <= 1e-11);
        assert!(periodic_box_check(&models::chain_with_point_defect(1.0), 8).is_err());
    }

    #[test]
    fn sectors_match_full_strip() {
        let spec = models::square_with_line_defect(1.0);
        let axes = [AxisBox::Open(4), AxisBox::Periodic(6)];
        let full = oracle_eigenvalues(&assemble_box(&spec, &axes).unwrap()).unwrap();
        let mut joined: Vec<f64> = strip_sectors(&spec, &axes)
            .unwrap()
            .into_iter()
            .flat_map(|(_, v)| v)
            .collect();
        joined.sort_by(f64::total_cmp);
        assert_eq!(joined.len(), full.len());
        for (a, b) in joined.iter().zip(&full) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bloch_axis_cannot_carry_defect() {
        let spec = models::square_with_line_defect(1.0);
        let err = assemble_box(&spec, &[AxisBox::Bloch(0.3), AxisBox::Open(3)]).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn edge_mass_small_for_bound_state() {
        let t =
            assemble_truncated(&models::chain_with_point_defect(1.0), 30, Boundary::Open).unwrap();
        let s = oracle_spectrum(&t).unwrap();
        let top = s.values.len() - 1;
        assert!((s.values[top] - 5f64.sqrt()).abs() < 1e-10);
        assert!(s.edge_mass[top] < 1e-10);
    }
}
