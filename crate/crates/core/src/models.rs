//! Ready-made lattice problems used by the tests, benches and docs.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::model::{
    stencil_to_symbol, DefectLayer, OmegaWindow, ProblemSpec, Stencil, ToleranceSet,
};
use crate::symbol::{ComplexMatrix, OmegaSymbol, TrigMatrixPolynomial};

fn scalar(x: f64) -> ComplexMatrix {
    ComplexMatrix::scalar(Complex64::new(x, 0.0))
}

/// `2 cos k - ω` on `Z`.
pub fn chain_adjacency() -> ProblemSpec {
    ProblemSpec::new(
        OmegaSymbol::shifted(stencil_to_symbol(&Stencil::adjacency(1))),
        vec![],
        ToleranceSet::default(),
        OmegaWindow::new(-4.0, 4.0),
    )
}

/// Chain with an on-site impurity of strength `eps` at the origin.
pub fn chain_with_point_defect(eps: f64) -> ProblemSpec {
    let mut spec = chain_adjacency();
    spec.defects
        .push(DefectLayer::onsite(1, 1, eps).expect("codim 1 in 1D"));
    spec
}

/// `2 cos k1 + 2 cos k2 - ω` on `Z^2`.
pub fn square_lattice() -> ProblemSpec {
    ProblemSpec::new(
        OmegaSymbol::shifted(stencil_to_symbol(&Stencil::adjacency(2))),
        vec![],
        ToleranceSet::default(),
        OmegaWindow::new(-6.0, 6.0),
    )
}

/// Square lattice with on-site strength `eps` along the line `n1 = 0`.
pub fn square_with_line_defect(eps: f64) -> ProblemSpec {
    let mut spec = square_lattice();
    spec.defects
        .push(DefectLayer::onsite(1, 2, eps).expect("codim 1 in 2D"));
    spec
}

/// Square lattice with an on-site impurity at the origin.
pub fn square_with_point_defect(eps: f64) -> ProblemSpec {
    let mut spec = square_lattice();
    spec.defects
        .push(DefectLayer::onsite(2, 2, eps).expect("codim 2 in 2D"));
    spec
}

/// Two-site chain with symbol `[[0, 1 + e^{ik}], [1 + e^{-ik}, 0]]`.
pub fn bipartite_chain() -> ProblemSpec {
    let st = bipartite_stencil();
    ProblemSpec::new(
        OmegaSymbol::shifted(stencil_to_symbol(&st)),
        vec![],
        ToleranceSet::default(),
        OmegaWindow::new(-3.0, 3.0),
    )
}

pub fn bipartite_stencil() -> Stencil {
    Stencil::from_hoppings(
        1,
        2,
        [
            (
                vec![0],
                ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
            ),
            (
                vec![1],
                ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]),
            ),
            (
                vec![-1],
                ComplexMatrix::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]),
            ),
        ],
    )
    .expect("2x2 blocks")
}

/// Mass-spring chain `2 cos k - 2 + ω^2` (unit masses and springs) with the
/// mass at the origin changed by `delta_mass`.
pub fn wave_chain_with_mass_defect(delta_mass: f64) -> ProblemSpec {
    let stiffness = TrigMatrixPolynomial::from_terms(
        1,
        1,
        [
            (vec![-1], scalar(1.0)),
            (vec![0], scalar(-2.0)),
            (vec![1], scalar(1.0)),
        ],
    )
    .expect("scalar terms");
    let mut bulk = OmegaSymbol::static_symbol(stiffness);
    bulk.set_term(2, TrigMatrixPolynomial::constant(1, scalar(1.0)))
        .expect("scalar term");
    let defect = DefectLayer::from_stencils(
        1,
        1,
        BTreeMap::from([(2, Stencil::onsite(0, scalar(delta_mass)))]),
    )
    .expect("codim 1 in 1D");
    ProblemSpec::new(
        bulk,
        vec![defect],
        ToleranceSet::default(),
        OmegaWindow::new(-4.0, 4.0),
    )
}
