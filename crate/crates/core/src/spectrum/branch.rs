//! Exclusion sets and dispersion branches `ω_j(k_{j+1..N})` of each level.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::bands::band_ranges;
use super::chain::{golden_min, ChainEvaluator, IMAG_GUARD};
use super::interval::{complement_in, distance_to_union, merge_intervals, Interval};
use super::SweepGrids;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::ProblemSpec;
use crate::quadrature::grid_coords;
use crate::symbol::det;

/// Exclusion intervals at one node of the remaining-coordinate grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionNode {
    pub k: Vec<f64>,
    pub intervals: Vec<Interval>,
}

/// Projections of all higher-dimensional branches onto the `(ω, k_{j+1..N})`
/// slice of level `j`. The level-`j` dispersion equation is not evaluated
/// inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionSet {
    pub codim: usize,
    pub k_points: usize,
    pub nodes: Vec<ExclusionNode>,
}

/// One refined root of `det B_j(ω, k) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRoot {
    pub omega: f64,
    /// Within two band guards of the exclusion set.
    pub near_band: bool,
    /// Allowed ω segment the root was found in.
    pub segment: Interval,
    /// Ordinal of that segment counted from the bottom of the window.
    pub segment_index: usize,
}

/// ω range where the determinant could not be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconclusiveGap {
    pub codim: usize,
    pub k: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchNode {
    pub k: Vec<f64>,
    pub roots: Vec<BranchRoot>,
    pub gaps: Vec<InconclusiveGap>,
}

/// Sampled dispersion branch of level `j`; for `j = N` a single node with
/// the isolated points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub codim: usize,
    pub k_points: usize,
    pub nodes: Vec<BranchNode>,
}

impl Branch {
    /// Remaining-coordinate dimension `N - j`.
    pub fn dims(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.k.len())
    }

    /// All `(k, ω)` samples in node order.
    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.nodes
            .iter()
            .flat_map(|n| n.roots.iter().map(move |r| (n.k.as_slice(), r.omega)))
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.iter().all(|n| n.roots.is_empty())
    }

    pub fn gaps(&self) -> impl Iterator<Item = &InconclusiveGap> {
        self.nodes.iter().flat_map(|n| n.gaps.iter())
    }
}

/// Connected piece of a sampled branch.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Component {
    /// `(node, root index)` members.
    pub members: Vec<(usize, usize)>,
    pub lo: f64,
    pub hi: f64,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn half_min_gap(roots: &[BranchRoot]) -> f64 {
    roots
        .windows(2)
        .map(|w| 0.5 * (w[1].omega - w[0].omega))
        .fold(f64::INFINITY, f64::min)
}

/// Group samples on an `n^dims` grid into connected components.
///
/// Neighbouring samples are linked when both nodes carry the same number of
/// roots, the roots share an index and a segment ordinal (so no exclusion
/// interval is crossed), and the step is below half the local root spacing.
pub(crate) fn link_components(nodes: &[&BranchNode], dims: usize, n: usize) -> Vec<Component> {
    let offsets: Vec<usize> = nodes
        .iter()
        .scan(0, |acc, node| {
            let o = *acc;
            *acc += node.roots.len();
            Some(o)
        })
        .collect();
    let total: usize = nodes.iter().map(|n| n.roots.len()).sum();
    let mut parent: Vec<usize> = (0..total).collect();
    if dims > 0 {
        for a in 0..nodes.len() {
            for axis in 0..dims {
                let s = n.pow((dims - 1 - axis) as u32);
                let l = (a / s) % n;
                let b = a - l * s + ((l + 1) % n) * s;
                if b == a {
                    continue;
                }
                let (ra, rb) = (&nodes[a].roots, &nodes[b].roots);
                if ra.len() != rb.len() {
                    continue;
                }
                let limit = half_min_gap(ra).min(half_min_gap(rb));
                for r in 0..ra.len() {
                    let (x, y) = (ra[r], rb[r]);
                    let linked =
                        x.segment_index == y.segment_index && (x.omega - y.omega).abs() <= limit;
                    if linked {
                        let (pa, pb) = (
                            find(&mut parent, offsets[a] + r),
                            find(&mut parent, offsets[b] + r),
                        );
                        if pa != pb {
                            parent[pa.max(pb)] = pa.min(pb);
                        }
                    }
                }
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Component> = Default::default();
    for (a, node) in nodes.iter().enumerate() {
        for (r, root) in node.roots.iter().enumerate() {
            let c = by_root
                .entry(find(&mut parent, offsets[a] + r))
                .or_insert(Component {
                    members: vec![],
                    lo: f64::INFINITY,
                    hi: f64::NEG_INFINITY,
                });
            c.members.push((a, r));
            c.lo = c.lo.min(root.omega);
            c.hi = c.hi.max(root.omega);
        }
    }
    by_root.into_values().collect()
}

/// Exclusion set of level `codim`: ranges of each bulk band over the first
/// `codim` axes, joined with the projections of lower-codimension branches.
pub fn exclusion_set(
    spec: &ProblemSpec,
    codim: usize,
    k_points: usize,
    lower: &[Branch],
) -> Result<ExclusionSet> {
    let n_dim = spec.dimension;
    if codim == 0 || codim > n_dim {
        return Err(Error::CodimOutOfRange { codim, dim: n_dim });
    }
    let dims = n_dim - codim;
    let count = k_points.pow(dims as u32);
    let nodes = exec::try_map_indexed(count, |t| -> Result<ExclusionNode> {
        let k = grid_coords(t, dims, k_points);
        let mut intervals = band_ranges(spec, codim, &k, k_points)?;
        for b in lower.iter().filter(|b| b.codim < codim) {
            if b.k_points != k_points {
                return Err(Error::InvalidInput(format!(
                    "branch of codim {} sampled on {} points, expected {k_points}",
                    b.codim, b.k_points
                )));
            }
            let sub_dims = codim - b.codim;
            let stride = k_points.pow(dims as u32);
            let sub: Vec<&BranchNode> = (0..k_points.pow(sub_dims as u32))
                .map(|s| &b.nodes[s * stride + t])
                .collect();
            intervals.extend(
                link_components(&sub, sub_dims, k_points)
                    .into_iter()
                    .map(|c| Interval::new(c.lo, c.hi)),
            );
        }
        Ok(ExclusionNode {
            k,
            intervals: merge_intervals(intervals),
        })
    })?;
    Ok(ExclusionSet {
        codim,
        k_points,
        nodes,
    })
}

pub(crate) fn level_det(
    spec: &ProblemSpec,
    level: usize,
    omega: f64,
    tail: &[f64],
) -> Result<Complex64> {
    Ok(det(&ChainEvaluator::real(spec, omega).level(level, tail)?))
}

fn real_sign(d: Complex64) -> Option<bool> {
    (d.im.abs() <= IMAG_GUARD * d.norm() && d.re != 0.0).then_some(d.re > 0.0)
}

/// Bisection on `Re det` between points of opposite sign.
pub(crate) fn bisect_root(
    spec: &ProblemSpec,
    level: usize,
    tail: &[f64],
    mut lo: f64,
    mut hi: f64,
    lo_positive: bool,
) -> Result<f64> {
    let tol = spec.tolerances.root_tol_omega;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = level_det(spec, level, mid, tail)?;
        if d.re == 0.0 {
            return Ok(mid);
        }
        if (d.re > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn scan_node(
    spec: &ProblemSpec,
    level: usize,
    tail: &[f64],
    excluded: &[Interval],
    grids: &SweepGrids,
) -> Result<BranchNode> {
    let tol = &spec.tolerances;
    let window = Interval::new(spec.omega_window.min, spec.omega_window.max);
    let holes: Vec<Interval> = excluded.iter().map(|i| i.dilate(tol.band_guard)).collect();
    let step = window.width() / (grids.omega_points.max(2) - 1) as f64;
    let mut roots: Vec<BranchRoot> = Vec::new();
    let mut gaps: Vec<InconclusiveGap> = Vec::new();

    for (seg_index, seg) in complement_in(window, &holes).into_iter().enumerate() {
        if seg.width() <= tol.root_tol_omega {
            continue;
        }
        let mut pts = vec![seg.lo];
        let first = ((seg.lo - window.lo) / step).floor() as usize + 1;
        let mut i = first;
        loop {
            let w = window.lo + i as f64 * step;
            if w >= seg.hi {
                break;
            }
            if w > seg.lo {
                pts.push(w);
            }
            i += 1;
        }
        pts.push(seg.hi);
        let vals = exec::map_indexed(pts.len(), |i| level_det(spec, level, pts[i], tail));
        let mut found: Vec<f64> = Vec::new();
        for (i, v) in vals.iter().enumerate() {
            match v {
                Ok(d) if d.norm() <= tol.det_zero_tol => found.push(pts[i]),
                Ok(_) => {}
                Err(e) => {
                    let lo = pts[i.saturating_sub(1)];
                    let hi = pts[(i + 1).min(pts.len() - 1)];
                    match gaps.last_mut() {
                        Some(g) if g.lo <= lo && lo <= g.hi => g.hi = hi,
                        _ => gaps.push(InconclusiveGap {
                            codim: level,
                            k: tail.to_vec(),
                            lo,
                            hi,
                            reason: e.to_string(),
                        }),
                    }
                }
            }
        }
        let sign_change = |i: usize| -> Option<bool> {
            match (&vals[i], &vals[i + 1]) {
                (Ok(a), Ok(b)) => match (real_sign(*a), real_sign(*b)) {
                    (Some(x), Some(y)) if x != y => Some(x),
                    _ => None,
                },
                _ => None,
            }
        };
        for i in 0..pts.len() - 1 {
            if let Some(lo_positive) = sign_change(i) {
                match bisect_root(spec, level, tail, pts[i], pts[i + 1], lo_positive) {
                    Ok(w) => found.push(w),
                    Err(e) => gaps.push(InconclusiveGap {
                        codim: level,
                        k: tail.to_vec(),
                        lo: pts[i],
                        hi: pts[i + 1],
                        reason: e.to_string(),
                    }),
                }
            }
        }
        // Touching zeros: local minima of |det| without a sign change.
        for i in 1..pts.len().saturating_sub(1) {
            let (Ok(a), Ok(b), Ok(c)) = (&vals[i - 1], &vals[i], &vals[i + 1]) else {
                continue;
            };
            let m = b.norm();
            if m > a.norm()
                || m > c.norm()
                || sign_change(i - 1).is_some()
                || sign_change(i).is_some()
            {
                continue;
            }
            if m <= tol.det_zero_tol {
                continue;
            }
            let probe = golden_min(
                |w| Ok(level_det(spec, level, w, tail)?.norm()),
                pts[i - 1],
                pts[i + 1],
                80,
            );
            if let Ok((w, v)) = probe {
                if v <= tol.det_zero_tol {
                    found.push(w);
                }
            }
        }
        found.sort_by(f64::total_cmp);
        let mut last = f64::NEG_INFINITY;
        for w in found {
            if w - last <= 10.0 * tol.root_tol_omega {
                continue;
            }
            last = w;
            debug_assert!(distance_to_union(w, excluded) >= tol.band_guard * (1.0 - 1e-12));
            roots.push(BranchRoot {
                omega: w,
                near_band: distance_to_union(w, excluded) < 2.0 * tol.band_guard,
                segment: seg,
                segment_index: seg_index,
            });
        }
    }
    Ok(BranchNode {
        k: tail.to_vec(),
        roots,
        gaps,
    })
}

/// Roots of `det B_j(ω, k_{j+1..N}) = 0` at every remaining-coordinate
/// node, scanning ω outside the band-guard dilation of the exclusion set.
pub fn dispersion_branch(
    spec: &ProblemSpec,
    codim: usize,
    grids: &SweepGrids,
    exclusion: &ExclusionSet,
) -> Result<Branch> {
    if exclusion.codim != codim {
        return Err(Error::InvalidInput(format!(
            "exclusion set is for codim {}, not {codim}",
            exclusion.codim
        )));
    }
    let nodes = exec::try_map_indexed(exclusion.nodes.len(), |t| {
        let node = &exclusion.nodes[t];
        scan_node(spec, codim, &node.k, &node.intervals, grids)
    })?;
    Ok(Branch {
        codim,
        k_points: exclusion.k_points,
        nodes,
    })
}
