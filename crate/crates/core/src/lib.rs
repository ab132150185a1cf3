//! Spectra of discrete periodic lattice operators perturbed by periodic
//! defects of smaller dimension.
//!
//! A bulk operator on `Z^N` with an `M`-site unit cell is described by its
//! Floquet symbol `A(ω, k)`. Defects of codimension `j` live on the coordinate
//! sublattice where the first `j` lattice coordinates vanish. The spectrum is
//! decided level by level with the matrices
//!
//! ```text
//! B_0 = A(ω, k)
//! B_j = I + <B_{j-1}^{-1} … B_0^{-1} A_j>_{1..j}
//! ```
//!
//! where `<·>_{1..j}` is the `(2π)^{-j/2}`-scaled integral over the first `j`
//! torus coordinates. A zero of `det B_j` for some `k` puts ω in the spectrum
//! with a dispersion branch of dimension `N - j`.

pub mod config;
pub mod error;
pub mod exec;
pub mod model;
pub mod models;
pub mod oracle;
pub mod quadrature;
pub mod spectrum;
pub mod symbol;

pub use error::{Error, Result};
pub use model::{DefectLayer, OmegaWindow, ProblemSpec, Stencil, ToleranceSet};
pub use spectrum::{
    bands, full_spectrum, membership, resolvent_apply, MembershipCertificate, SpectralResult,
    SweepGrids, Verdict,
};

pub use symbol::{ComplexMatrix, OmegaSymbol, TrigMatrixPolynomial};
