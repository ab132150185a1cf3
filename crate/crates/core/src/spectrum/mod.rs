//! Spectrum computation: the level chain, membership, bands, branches and
//! the assembled set of possible states.

pub mod assemble;
pub mod bands;
pub mod branch;
pub mod chain;
pub mod interval;
pub mod membership;
pub mod resolvent;

use serde::{Deserialize, Serialize};

pub use assemble::{full_spectrum, ComponentKind, OmegaComponent, SpectralResult};
pub use bands::bands;
pub use branch::{
    dispersion_branch, exclusion_set, Branch, BranchNode, BranchRoot, ExclusionNode, ExclusionSet,
    InconclusiveGap,
};
pub use chain::{
    step_check, BChain, ChainEvaluator, CheckMode, Detection, LevelCertificate, StepCheck,
};
pub use interval::{complement_in, distance_to_union, merge_intervals, merge_within, Interval};
pub use membership::{membership, MembershipCertificate, Verdict};
pub use resolvent::{apply_operator, resolvent_apply, ResolventSolution, VectorFn};

/// Sampling densities for sweeps over k and ω.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrids {
    /// Points per torus axis (power of two, at least 4).
    pub k_points: usize,
    /// Uniform ω samples across the window.
    pub omega_points: usize,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            k_points: 64,
            omega_points: 400,
        }
    }
}
