//! JSON problem documents.
//!
//! Matrices are given as separate `re` and `im` row arrays. Defect offsets
//! live on the defect's own lattice `Z^{N-j}` and carry physical strengths;
//! the Fourier normalization is applied on load.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{
    validate, DefectLayer, OmegaWindow, ProblemSpec, Stencil, ToleranceSet, Violation,
    ViolationKind,
};
use crate::spectrum::SweepGrids;
use crate::symbol::{ComplexMatrix, OmegaSymbol, TrigMatrixPolynomial};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub dimension: usize,
    pub cell_size: usize,
    pub bulk: SymbolDocument,
    #[serde(default)]
    pub defects: Vec<DefectDocument>,
    #[serde(default)]
    pub tolerances: ToleranceSet,
    pub omega_window: OmegaWindow,
    #[serde(default)]
    pub grids: SweepGrids,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolDocument {
    pub omega_powers: Vec<PowerTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectDocument {
    pub codim: usize,
    pub omega_powers: Vec<PowerTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub power: u32,
    pub coefficients: Vec<Coefficient>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub offset: Vec<i64>,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} violation(s): {}", .0.len(), .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

fn shape(message: String) -> Violation {
    Violation {
        kind: ViolationKind::Shape,
        message,
    }
}

impl Coefficient {
    fn matrix(&self, m: usize, what: &str) -> Result<ComplexMatrix, Violation> {
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == m && rows.iter().all(|r| r.len() == m);
        if !rows_ok(&self.re) || self.im.as_ref().is_some_and(|im| !rows_ok(im)) {
            return Err(shape(format!(
                "{what}: coefficient at offset {:?} is not {m}x{m}",
                self.offset
            )));
        }
        let mut out = ComplexMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                let im = self.im.as_ref().map_or(0.0, |v| v[i][j]);
                out[(i, j)] = Complex64::new(self.re[i][j], im);
            }
        }
        Ok(out)
    }

    fn from_matrix(offset: Vec<i64>, a: &ComplexMatrix) -> Self {
        let im = a.imag_rows();
        let has_im = im.iter().flatten().any(|&x| x != 0.0);
        Self {
            offset,
            re: a.real_rows(),
            im: has_im.then_some(im),
        }
    }
}

fn terms_of(
    powers: &[PowerTerm],
    offset_len: usize,
    m: usize,
    what: &str,
    violations: &mut Vec<Violation>,
) -> BTreeMap<u32, Vec<(Vec<i64>, ComplexMatrix)>> {
    let mut out: BTreeMap<u32, Vec<(Vec<i64>, ComplexMatrix)>> = BTreeMap::new();
    for term in powers {
        let entry = out.entry(term.power).or_default();
        for c in &term.coefficients {
            if c.offset.len() != offset_len {
                violations.push(shape(format!(
                    "{what}: offset {:?} has length {}, expected {offset_len}",
                    c.offset,
                    c.offset.len()
                )));
                continue;
            }
            match c.matrix(m, what) {
                Ok(a) => entry.push((c.offset.clone(), a)),
                Err(v) => violations.push(v),
            }
        }
    }
    out
}

impl ConfigDocument {
    /// Parse without building the problem.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Build the problem without the structural checks of [`validate`].
    /// Only malformed shapes are reported.
    pub fn build(&self) -> Result<ProblemSpec, ConfigError> {
        let (n, m) = (self.dimension, self.cell_size);
        let mut violations = Vec::new();
        if n == 0 || m == 0 {
            return Err(ConfigError::Invalid(vec![shape(format!(
                "dimension and cell_size must be positive, got {n} and {m}"
            ))]));
        }
        let mut bulk = OmegaSymbol::zero(n, m);
        for (p, terms) in terms_of(&self.bulk.omega_powers, n, m, "bulk", &mut violations) {
            match TrigMatrixPolynomial::from_terms(n, m, terms).and_then(|t| bulk.set_term(p, t)) {
                Ok(()) => {}
                Err(e) => violations.push(shape(format!("bulk power {p}: {e}"))),
            }
        }
        let mut defects = Vec::new();
        for d in &self.defects {
            let j = d.codim;
            if j == 0 || j > n {
                violations.push(Violation {
                    kind: ViolationKind::CodimRange,
                    message: format!("defect codim {j} out of range 1..={n}"),
                });
                continue;
            }
            let what = format!("codim {j} defect");
            let mut stencils = BTreeMap::new();
            for (p, terms) in terms_of(&d.omega_powers, n - j, m, &what, &mut violations) {
                match Stencil::from_hoppings(n - j, m, terms) {
                    Ok(st) => {
                        stencils.insert(p, st);
                    }
                    Err(e) => violations.push(shape(format!("{what}, power {p}: {e}"))),
                }
            }
            if stencils.is_empty() {
                stencils.insert(0, Stencil::new(n - j, m));
            }
            match DefectLayer::from_stencils(j, n, stencils) {
                Ok(layer) => defects.push(layer),
                Err(e) => violations.push(shape(format!("{what}: {e}"))),
            }
        }
        if self.grids.k_points < 4 || !self.grids.k_points.is_power_of_two() {
            violations.push(Violation {
                kind: ViolationKind::Grid,
                message: format!(
                    "grids.k_points must be a power of two >= 4, got {}",
                    self.grids.k_points
                ),
            });
        }
        if self.grids.omega_points < 2 {
            violations.push(Violation {
                kind: ViolationKind::Grid,
                message: format!(
                    "grids.omega_points must be at least 2, got {}",
                    self.grids.omega_points
                ),
            });
        }
        if !violations.is_empty() {
            return Err(ConfigError::Invalid(violations));
        }
        Ok(ProblemSpec::new(
            bulk,
            defects,
            self.tolerances.clone(),
            self.omega_window,
        ))
    }

    /// Build and fully validate the problem.
    pub fn to_problem(&self) -> Result<ProblemSpec, ConfigError> {
        let spec = self.build()?;
        let report = validate(&spec);
        if report.is_ok() {
            Ok(spec)
        } else {
            Err(ConfigError::Invalid(report.violations))
        }
    }

    /// Document describing `spec`. Defects built from symbols rather than
    /// stencils are written with the normalization undone.
    pub fn from_problem(spec: &ProblemSpec, grids: SweepGrids) -> Self {
        let powers = |sym: &OmegaSymbol, codim: usize| -> Vec<PowerTerm> {
            let scale = Complex64::new(1.0 / crate::model::defect_normalization(codim.max(1)), 0.0);
            sym.terms()
                .map(|(p, t)| PowerTerm {
                    power: p,
                    coefficients: t
                        .terms()
                        .map(|(off, a)| {
                            if codim == 0 {
                                Coefficient::from_matrix(off.clone(), a)
                            } else {
                                Coefficient::from_matrix(off[codim..].to_vec(), &a.scale(scale))
                            }
                        })
                        .collect(),
                })
                .collect()
        };
        let defects = spec
            .defects
            .iter()
            .map(|d| DefectDocument {
                codim: d.codim,
                omega_powers: match &d.stencils {
                    Some(st) => st
                        .iter()
                        .map(|(&p, s)| PowerTerm {
                            power: p,
                            coefficients: s
                                .hoppings()
                                .map(|(o, a)| Coefficient::from_matrix(o.clone(), a))
                                .collect(),
                        })
                        .collect(),
                    None => powers(&d.symbol, d.codim),
                },
            })
            .collect();
        Self {
            dimension: spec.dimension,
            cell_size: spec.cell_size,
            bulk: SymbolDocument {
                omega_powers: powers(&spec.bulk, 0),
            },
            defects,
            tolerances: spec.tolerances.clone(),
            omega_window: spec.omega_window,
            grids,
        }
    }
}
