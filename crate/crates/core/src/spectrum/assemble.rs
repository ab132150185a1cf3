//! Assembly of the full set of possible states from bands and branches.

use serde::{Deserialize, Serialize};

use super::bands::band_ranges;
use super::branch::{
    dispersion_branch, exclusion_set, level_det, link_components, Branch, BranchNode, Component,
    ExclusionSet, InconclusiveGap,
};
use super::chain::golden_min;
use super::interval::{merge_within, Interval};
use super::SweepGrids;
use crate::error::{Error, Result};
use crate::model::{validate, OmegaWindow, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    BandInterval,
    BranchInterval,
    IsolatedPoint,
}

impl ComponentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BandInterval => "band_interval",
            Self::BranchInterval => "branch_interval",
            Self::IsolatedPoint => "isolated_point",
        }
    }
}

/// One piece of Ω.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaComponent {
    pub kind: ComponentKind,
    pub codim: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Everything computed for a problem over an ω window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub omega_window: OmegaWindow,
    pub grids: SweepGrids,
    /// Full-torus range of every bulk band.
    pub bands: Vec<Interval>,
    pub exclusions: Vec<ExclusionSet>,
    pub branches: Vec<Branch>,
    /// Ω clipped to the window, bands first, then branches by codim.
    pub components: Vec<OmegaComponent>,
    pub gaps: Vec<InconclusiveGap>,
    /// Gaps narrower than this are closed when merging components.
    pub root_tol: f64,
}

impl SpectralResult {
    /// Ω as sorted disjoint closed intervals (points are degenerate ones).
    pub fn omega_set(&self) -> Vec<Interval> {
        let parts = self
            .components
            .iter()
            .map(|c| Interval::new(c.lo, c.hi))
            .collect();
        merge_within(parts, self.root_tol)
    }

    pub fn contains(&self, omega: f64, dilation: f64) -> bool {
        self.components
            .iter()
            .any(|c| c.lo - dilation <= omega && omega <= c.hi + dilation)
    }

    /// ω falls into a range where some branch could not be resolved.
    pub fn in_gap(&self, omega: f64) -> bool {
        self.gaps.iter().any(|g| g.lo <= omega && omega <= g.hi)
    }

    pub fn isolated_points(&self) -> impl Iterator<Item = f64> + '_ {
        self.components
            .iter()
            .filter(|c| c.kind == ComponentKind::IsolatedPoint)
            .map(|c| c.lo)
    }

    pub fn branch(&self, codim: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.codim == codim)
    }

    pub fn exclusion(&self, codim: usize) -> Option<&ExclusionSet> {
        self.exclusions.iter().find(|e| e.codim == codim)
    }
}

/// Root of level `codim` at `k` inside `[lo, hi]`, if the bracket changes sign.
fn root_in(spec: &ProblemSpec, codim: usize, k: f64, lo: f64, hi: f64) -> Option<f64> {
    let a = level_det(spec, codim, lo, &[k]).ok()?;
    let b = level_det(spec, codim, hi, &[k]).ok()?;
    if a.re == 0.0 {
        return Some(lo);
    }
    if (a.re > 0.0) == (b.re > 0.0) {
        return None;
    }
    super::branch::bisect_root(spec, codim, &[k], lo, hi, a.re > 0.0).ok()
}

/// Polish the extremes of a one-parameter branch component between nodes.
fn refine_extremes(spec: &ProblemSpec, branch: &Branch, comp: &Component) -> (f64, f64) {
    let n = branch.k_points;
    let h = std::f64::consts::TAU / n as f64;
    let members: std::collections::HashMap<usize, usize> = comp.members.iter().copied().collect();
    let omega_at = |node: usize| members.get(&node).map(|&r| branch.nodes[node].roots[r]);
    let (mut lo, mut hi) = (comp.lo, comp.hi);
    for sign in [1.0, -1.0] {
        let target = if sign > 0.0 { hi } else { lo };
        let Some(&(node, _)) = comp
            .members
            .iter()
            .find(|(a, r)| branch.nodes[*a].roots[*r].omega == target)
        else {
            continue;
        };
        let (Some(prev), Some(next), Some(here)) = (
            omega_at((node + n - 1) % n),
            omega_at((node + 1) % n),
            omega_at(node),
        ) else {
            continue;
        };
        let spread = (here.omega - prev.omega)
            .abs()
            .max((here.omega - next.omega).abs());
        if spread == 0.0 {
            continue;
        }
        // Only roots beyond the node value matter; starting the bracket there
        // keeps it clear of the exclusion set on the near side.
        let (w_lo, w_hi) = if sign > 0.0 {
            (here.omega, (here.omega + 2.0 * spread).min(here.segment.hi))
        } else {
            ((here.omega - 2.0 * spread).max(here.segment.lo), here.omega)
        };
        let k0 = branch.nodes[node].k[0];
        let objective = |k: f64| -> Result<f64> {
            Ok(match root_in(spec, branch.codim, k, w_lo, w_hi) {
                Some(w) => -sign * w,
                None => -sign * here.omega,
            })
        };
        if let Ok((_, v)) = golden_min(objective, k0 - h, k0 + h, 40) {
            let w = -sign * v;
            if sign > 0.0 {
                hi = hi.max(w);
            } else {
                lo = lo.min(w);
            }
        }
    }
    (lo, hi)
}

/// Bands, exclusion sets and branches of every defect level, assembled into
/// Ω within the window.
pub fn full_spectrum(spec: &ProblemSpec, grids: &SweepGrids) -> Result<SpectralResult> {
    let report = validate(spec);
    if !report.is_ok() {
        return Err(Error::InvalidInput(report.violations[0].message.clone()));
    }
    let n_dim = spec.dimension;
    let n = grids.k_points;
    let window = Interval::new(spec.omega_window.min, spec.omega_window.max);
    let bands = band_ranges(spec, n_dim, &[], n)?;
    let mut components: Vec<OmegaComponent> = bands
        .iter()
        .filter_map(|b| b.intersect(&window))
        .map(|b| OmegaComponent {
            kind: ComponentKind::BandInterval,
            codim: 0,
            lo: b.lo,
            hi: b.hi,
        })
        .collect();

    let mut exclusions = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    for codim in 1..=n_dim {
        if spec.defect(codim).is_none_or(|d| d.symbol.is_zero()) {
            continue;
        }
        log::info!("codim {codim}: exclusion set and branch scan");
        let ex = exclusion_set(spec, codim, n, &branches)?;
        let branch = dispersion_branch(spec, codim, grids, &ex)?;
        let dims = n_dim - codim;
        if dims == 0 {
            for (_, w) in branch.samples() {
                components.push(OmegaComponent {
                    kind: ComponentKind::IsolatedPoint,
                    codim,
                    lo: w,
                    hi: w,
                });
            }
        } else {
            let nodes: Vec<&BranchNode> = branch.nodes.iter().collect();
            for comp in link_components(&nodes, dims, n) {
                let (lo, hi) = if dims == 1 {
                    refine_extremes(spec, &branch, &comp)
                } else {
                    (comp.lo, comp.hi)
                };
                if let Some(iv) = Interval::new(lo, hi).intersect(&window) {
                    components.push(OmegaComponent {
                        kind: ComponentKind::BranchInterval,
                        codim,
                        lo: iv.lo,
                        hi: iv.hi,
                    });
                }
            }
        }
        exclusions.push(ex);
        branches.push(branch);
    }
    let gaps = branches.iter().flat_map(|b| b.gaps().cloned()).collect();
    Ok(SpectralResult {
        omega_window: spec.omega_window,
        grids: *grids,
        bands,
        exclusions,
        branches,
        components,
        gaps,
        root_tol: spec.tolerances.root_tol_omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn chain_with_bound_state() {
        let r = full_spectrum(
            &models::chain_with_point_defect(1.0),
            &SweepGrids::default(),
        )
        .unwrap();
        let set = r.omega_set();
        assert_eq!(set.len(), 2, "{set:?}");
        assert!((set[0].lo + 2.0).abs() < 1e-12 && (set[0].hi - 2.0).abs() < 1e-12);
        assert!((set[1].lo - 5f64.sqrt()).abs() < 1e-9);
        assert_eq!(r.isolated_points().count(), 1);
        assert!(r.gaps.is_empty());
    }

    #[test]
    fn no_defect_is_bands_only() {
        let r = full_spectrum(&models::bipartite_chain(), &SweepGrids::default()).unwrap();
        assert!(r.branches.is_empty());
        assert!(r
            .components
            .iter()
            .all(|c| c.kind == ComponentKind::BandInterval));
        let set = r.omega_set();
        assert_eq!(set.len(), 1, "{set:?}");
        assert!((set[0].lo + 2.0).abs() < 1e-12 && (set[0].hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn window_clips_bands() {
        let spec = models::chain_adjacency().with_window(OmegaWindow::new(-1.0, 4.0));
        let r = full_spectrum(&spec, &SweepGrids::default()).unwrap();
        assert_eq!(r.omega_set(), vec![Interval::new(-1.0, 2.0)]);
    }

    #[test]
    fn guided_branch_image() {
        let spec = models::square_with_line_defect(1.0);
        let g = SweepGrids {
            k_points: 8,
            omega_points: 200,
        };
        let r = full_spectrum(&spec, &g).unwrap();
        let set = r.omega_set();
        assert_eq!(set.len(), 1, "{set:?}");
        assert!((set[0].lo + 4.0).abs() < 1e-12);
        assert!((set[0].hi - (2.0 + 5f64.sqrt())).abs() < 1e-8);
        let b = r
            .components
            .iter()
            .find(|c| c.kind == ComponentKind::BranchInterval)
            .unwrap();
        assert!((b.lo - (5f64.sqrt() - 2.0)).abs() < 1e-8);
    }

    #[test]
    fn branch_extremes_between_nodes() {
        use crate::{ComplexMatrix, DefectLayer, OmegaSymbol, Stencil, ToleranceSet};
        use num_complex::Complex64;
        let phase = Complex64::from_polar(1.0, 0.2);
        let one = ComplexMatrix::scalar(Complex64::new(1.0, 0.0));
        let st = Stencil::from_hoppings(
            2,
            1,
            [
                (vec![1, 0], one.clone()),
                (vec![-1, 0], one),
                (vec![0, 1], ComplexMatrix::scalar(phase)),
                (vec![0, -1], ComplexMatrix::scalar(phase.conj())),
            ],
        )
        .unwrap();
        let spec = ProblemSpec::new(
            OmegaSymbol::shifted(crate::model::stencil_to_symbol(&st)),
            vec![DefectLayer::onsite(1, 2, 1.0).unwrap()],
            ToleranceSet::default(),
            OmegaWindow::new(-6.0, 6.0),
        );
        let g = SweepGrids {
            k_points: 8,
            omega_points: 200,
        };
        let r = full_spectrum(&spec, &g).unwrap();
        let b = r
            .components
            .iter()
            .find(|c| c.kind == ComponentKind::BranchInterval)
            .unwrap();
        assert!((b.hi - (2.0 + 5f64.sqrt())).abs() < 1e-8, "{b:?}");
        assert!((b.lo - (5f64.sqrt() - 2.0)).abs() < 1e-8, "{b:?}");
    }
}
