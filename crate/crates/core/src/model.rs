//! Problem description: the bulk periodic operator plus a nested stack of
//! defects on the coordinate sublattices through the origin cell.
//!
//! Sublattice `j` is the set of cells whose first `j` coordinates vanish, so a
//! codimension-`j` defect is an `(N-j)`-periodic operator living there. Its
//! Floquet action is `A_j(k) <f>_{1..j}`, where the bracket is the scaled
//! integral over the first `j` torus coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{ComplexMatrix, Offset, OmegaSymbol, TrigMatrixPolynomial, MAX_OMEGA_POWER};

/// Real-space hopping blocks: `hopping(n)` couples cell `m` to cell `m + n`,
/// i.e. `(A f)(m) = Σ_n hopping(n) f(m + n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stencil {
    dim: usize,
    cell_size: usize,
    hoppings: BTreeMap<Offset, ComplexMatrix>,
}

impl Stencil {
    pub fn new(dim: usize, cell_size: usize) -> Self {
        Self {
            dim,
            cell_size,
            hoppings: BTreeMap::new(),
        }
    }

    pub fn from_hoppings<I>(dim: usize, cell_size: usize, hoppings: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Offset, ComplexMatrix)>,
    {
        let mut st = Self::new(dim, cell_size);
        for (n, h) in hoppings {
            st.add_hopping(n, h)?;
        }
        Ok(st)
    }

    /// Scalar nearest-neighbour adjacency on `Z^dim` with unit hopping.
    pub fn adjacency(dim: usize) -> Self {
        let mut st = Self::new(dim, 1);
        let one = ComplexMatrix::scalar(Complex64::new(1.0, 0.0));
        for axis in 0..dim {
            for sign in [1, -1] {
                let mut n = vec![0; dim];
                n[axis] = sign;
                st.add_hopping(n, one.clone()).expect("consistent shapes");
            }
        }
        st
    }

    /// On-site term only.
    pub fn onsite(dim: usize, value: ComplexMatrix) -> Self {
        let mut st = Self::new(dim, value.dim());
        st.add_hopping(vec![0; dim], value)
            .expect("consistent shapes");
        st
    }

    pub fn add_hopping(&mut self, offset: Offset, h: ComplexMatrix) -> Result<()> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: offset.len(),
            });
        }
        if h.dim() != self.cell_size {
            return Err(Error::DimensionMismatch {
                expected: self.cell_size,
                got: h.dim(),
            });
        }
        match self.hoppings.get_mut(&offset) {
            Some(existing) => *existing += &h,
            None => {
                self.hoppings.insert(offset, h);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_size(&self) -> usize {
        self.cell_size
    }

    pub fn hopping(&self, offset: &[i64]) -> Option<&ComplexMatrix> {
        self.hoppings.get(offset)
    }

    pub fn hoppings(&self) -> impl Iterator<Item = (&Offset, &ComplexMatrix)> {
        self.hoppings.iter()
    }

    pub fn is_self_adjoint(&self) -> bool {
        stencil_to_symbol(self).is_hermitian_family()
    }
}

/// Floquet symbol of a bulk stencil: the coefficient at `n` is `hopping(n)`.
pub fn stencil_to_symbol(st: &Stencil) -> TrigMatrixPolynomial {
    TrigMatrixPolynomial::from_terms(
        st.dim,
        st.cell_size,
        st.hoppings.iter().map(|(n, h)| (n.clone(), h.clone())),
    )
    .expect("stencil shapes are consistent by construction")
}

/// Fourier normalization `(2π)^{-j/2}` of a codimension-`j` defect.
pub fn defect_normalization(codim: usize) -> f64 {
    TAU.powf(-(codim as f64) / 2.0)
}

/// Floquet symbol on the full `N`-torus of a defect stencil on `Z^{N-j}`.
///
/// The coefficient at `(0,…,0, m)` is `(2π)^{-j/2} hopping(m)`: with the
/// bracket convention this reproduces the real-space action of the defect, so
/// callers specify physical hopping strengths.
pub fn defect_stencil_to_symbol(
    st: &Stencil,
    codim: usize,
    n: usize,
) -> Result<TrigMatrixPolynomial> {
    if codim == 0 || codim > n {
        return Err(Error::CodimOutOfRange { codim, dim: n });
    }
    if st.dim != n - codim {
        return Err(Error::DimensionMismatch {
            expected: n - codim,
            got: st.dim,
        });
    }
    let norm = Complex64::new(defect_normalization(codim), 0.0);
    TrigMatrixPolynomial::from_terms(
        n,
        st.cell_size,
        st.hoppings.iter().map(|(m, h)| {
            let mut full = vec![0; codim];
            full.extend_from_slice(m);
            (full, h.scale(norm))
        }),
    )
}

/// Defect living on the codimension-`codim` sublattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectLayer {
    pub codim: usize,
    /// Raw real-space stencils per ω power, when the layer was built from
    /// them. The truncated-operator oracle places these directly.
    pub stencils: Option<BTreeMap<u32, Stencil>>,
    /// Symbol on the full `N`-torus.
    pub symbol: OmegaSymbol,
    pub normalization_applied: bool,
}

impl DefectLayer {
    /// Build from real-space stencils per ω power.
    pub fn from_stencils(codim: usize, n: usize, stencils: BTreeMap<u32, Stencil>) -> Result<Self> {
        let cell = stencils
            .values()
            .next()
            .map(Stencil::cell_size)
            .ok_or_else(|| Error::InvalidInput("defect needs at least one ω term".into()))?;
        let mut symbol = OmegaSymbol::zero(n, cell);
        for (&p, st) in &stencils {
            symbol.set_term(p, defect_stencil_to_symbol(st, codim, n)?)?;
        }
        Ok(Self {
            codim,
            stencils: Some(stencils),
            symbol,
            normalization_applied: true,
        })
    }

    /// ω-independent defect from a single stencil.
    pub fn from_stencil(codim: usize, n: usize, st: Stencil) -> Result<Self> {
        Self::from_stencils(codim, n, BTreeMap::from([(0, st)]))
    }

    /// Scalar on-site defect of strength `eps` at every cell of the sublattice.
    pub fn onsite(codim: usize, n: usize, eps: f64) -> Result<Self> {
        if codim == 0 || codim > n {
            return Err(Error::CodimOutOfRange { codim, dim: n });
        }
        Self::from_stencil(
            codim,
            n,
            Stencil::onsite(n - codim, ComplexMatrix::scalar(Complex64::new(eps, 0.0))),
        )
    }

    /// Use an already-normalized symbol as is.
    pub fn from_symbol(codim: usize, symbol: OmegaSymbol) -> Self {
        Self {
            codim,
            stencils: None,
            symbol,
            normalization_applied: false,
        }
    }
}

/// Numerical tolerances of the engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSet {
    /// Smallest singular value at or below which a matrix counts as singular.
    pub det_zero_tol: f64,
    /// Relative convergence target of the adaptive bracket.
    pub quad_rel_tol: f64,
    /// Minimum distance from an exclusion set at which brackets are trusted.
    pub band_guard: f64,
    /// Target accuracy of dispersion roots in ω.
    pub root_tol_omega: f64,
    /// Starting points per axis of the adaptive bracket.
    pub k_grid_base: usize,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            det_zero_tol: 1e-9,
            quad_rel_tol: 1e-12,
            band_guard: 1e-2,
            root_tol_omega: 1e-11,
            k_grid_base: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaWindow {
    pub min: f64,
    pub max: f64,
}

impl OmegaWindow {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.min && omega <= self.max
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// `C = A + A_1 + … + A_N` together with tolerances and the ω range of
/// interest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dimension: usize,
    pub cell_size: usize,
    pub bulk: OmegaSymbol,
    /// Sorted by codimension.
    pub defects: Vec<DefectLayer>,
    pub tolerances: ToleranceSet,
    pub omega_window: OmegaWindow,
}

impl ProblemSpec {
    pub fn new(
        bulk: OmegaSymbol,
        mut defects: Vec<DefectLayer>,
        tolerances: ToleranceSet,
        omega_window: OmegaWindow,
    ) -> Self {
        defects.sort_by_key(|d| d.codim);
        Self {
            dimension: bulk.torus_dim(),
            cell_size: bulk.dim(),
            bulk,
            defects,
            tolerances,
            omega_window,
        }
    }

    /// Construct and reject on the first violation.
    pub fn validated(self) -> Result<Self> {
        let report = validate(&self);
        match report.violations.first() {
            None => Ok(self),
            Some(v) => Err(Error::InvalidInput(v.to_string())),
        }
    }

    pub fn defect(&self, codim: usize) -> Option<&DefectLayer> {
        self.defects.iter().find(|d| d.codim == codim)
    }

    pub fn has_defects_from(&self, codim: usize) -> bool {
        self.defects
            .iter()
            .any(|d| d.codim >= codim && !d.symbol.is_zero())
    }

    pub fn is_hermitian(&self) -> bool {
        self.bulk.is_hermitian_family()
            && self.defects.iter().all(|d| d.symbol.is_hermitian_family())
    }

    pub fn with_tolerances(mut self, tolerances: ToleranceSet) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn with_window(mut self, window: OmegaWindow) -> Self {
        self.omega_window = window;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Shape,
    OmegaPower,
    CodimRange,
    DuplicateCodim,
    AveragedDependence,
    Tolerance,
    Window,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolDiagnostics {
    pub name: String,
    pub hermitian_family: bool,
    pub max_omega_power: u32,
}

/// Outcome of [`validate`]. Violations are listed in check order, so the
/// first entry is the first violated invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub symbols: Vec<SymbolDiagnostics>,
    pub max_omega_power: u32,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every structural invariant of a problem.
pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |kind, message: String| violations.push(Violation { kind, message });
    let (n, m) = (spec.dimension, spec.cell_size);

    if n == 0 {
        push(
            ViolationKind::Shape,
            "lattice dimension must be at least 1".into(),
        );
    }
    if spec.bulk.torus_dim() != n || spec.bulk.dim() != m {
        push(
            ViolationKind::Shape,
            format!(
                "bulk symbol has torus dimension {} and cell size {}, expected {n} and {m}",
                spec.bulk.torus_dim(),
                spec.bulk.dim()
            ),
        );
    }
    if spec.bulk.max_power() > MAX_OMEGA_POWER {
        push(
            ViolationKind::OmegaPower,
            format!(
                "bulk symbol has ω-power {}, at most {MAX_OMEGA_POWER} is supported",
                spec.bulk.max_power()
            ),
        );
    }
    if spec.bulk.is_zero() {
        push(
            ViolationKind::Shape,
            "bulk symbol is identically zero".into(),
        );
    }

    let mut seen = BTreeSet::new();
    for d in &spec.defects {
        let j = d.codim;
        if j == 0 || j > n {
            push(
                ViolationKind::CodimRange,
                format!("defect codim {j} out of range 1..={n}"),
            );
            continue;
        }
        if !seen.insert(j) {
            push(
                ViolationKind::DuplicateCodim,
                format!("duplicate codim {j}"),
            );
        }
        if d.symbol.torus_dim() != n || d.symbol.dim() != m {
            push(
                ViolationKind::Shape,
                format!(
                    "codim {j} defect has torus dimension {} and cell size {}, expected {n} and {m}",
                    d.symbol.torus_dim(),
                    d.symbol.dim()
                ),
            );
            continue;
        }
        if d.symbol.max_power() > MAX_OMEGA_POWER {
            push(
                ViolationKind::OmegaPower,
                format!(
                    "codim {j} defect has ω-power {}, at most {MAX_OMEGA_POWER} is supported",
                    d.symbol.max_power()
                ),
            );
        }
        if let Some(axis) = (0..j).find(|&a| d.symbol.depends_on_axis(a)) {
            push(
                ViolationKind::AveragedDependence,
                format!(
                    "defect depends on averaged direction: codim {j} symbol varies with k_{}",
                    axis + 1
                ),
            );
        }
    }

    let t = &spec.tolerances;
    for (name, v) in [
        ("det_zero_tol", t.det_zero_tol),
        ("quad_rel_tol", t.quad_rel_tol),
        ("band_guard", t.band_guard),
        ("root_tol_omega", t.root_tol_omega),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            push(
                ViolationKind::Tolerance,
                format!("tolerance {name} must be positive, got {v}"),
            );
        }
    }
    if t.det_zero_tol >= t.band_guard {
        push(
            ViolationKind::Tolerance,
            format!(
                "det_zero_tol ({}) must be smaller than band_guard ({})",
                t.det_zero_tol, t.band_guard
            ),
        );
    }
    if t.k_grid_base < 4 || !t.k_grid_base.is_power_of_two() {
        push(
            ViolationKind::Tolerance,
            format!(
                "k_grid_base must be a power of two >= 4, got {}",
                t.k_grid_base
            ),
        );
    }
    let w = spec.omega_window;
    if !(w.min.is_finite() && w.max.is_finite() && w.min < w.max) {
        push(
            ViolationKind::Window,
            format!("omega window [{}, {}] is empty or not finite", w.min, w.max),
        );
    }

    let mut symbols = vec![SymbolDiagnostics {
        name: "bulk".into(),
        hermitian_family: spec.bulk.is_hermitian_family(),
        max_omega_power: spec.bulk.max_power(),
    }];
    symbols.extend(spec.defects.iter().map(|d| SymbolDiagnostics {
        name: format!("defect codim {}", d.codim),
        hermitian_family: d.symbol.is_hermitian_family(),
        max_omega_power: d.symbol.max_power(),
    }));
    let max_omega_power = symbols.iter().map(|s| s.max_omega_power).max().unwrap_or(0);

    ValidationReport {
        violations,
        symbols,
        max_omega_power,
    }
}
