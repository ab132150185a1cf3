//! Deciding whether a single real λ lies in the spectrum.

use serde::{Deserialize, Serialize};

use super::chain::{BChain, Detection};
use super::SweepGrids;
use crate::error::{Error, Result};
use crate::model::{validate, ProblemSpec};
use crate::symbol::ComplexMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    In,
    Out,
    /// A level was too close to singular for the next bracket to converge.
    Inconclusive,
}

/// Outcome of a membership test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipCertificate {
    pub omega: f64,
    pub verdict: Verdict,
    pub in_spectrum: bool,
    pub detected_at_step: Option<usize>,
    pub detection: Option<Detection>,
    /// Point of smallest `σ_min` at the deciding (or last built) level.
    pub witness_k: Vec<f64>,
    /// `min σ_min` for every level that was built; pass-through levels read 1.
    pub min_sigma_per_level: Vec<f64>,
    /// `B_N` when every level was built.
    pub final_matrix: Option<ComplexMatrix>,
    pub note: Option<String>,
}

impl MembershipCertificate {
    pub fn is_in(&self) -> bool {
        self.verdict == Verdict::In
    }

    pub fn is_out(&self) -> bool {
        self.verdict == Verdict::Out
    }

    pub fn is_inconclusive(&self) -> bool {
        self.verdict == Verdict::Inconclusive
    }
}

/// Test λ level by level: a singular `B_j` puts λ in the spectrum at step
/// `j`; if every level including `B_N` is invertible, λ is outside.
pub fn membership(
    spec: &ProblemSpec,
    lambda: f64,
    grids: &SweepGrids,
) -> Result<MembershipCertificate> {
    if !lambda.is_finite() {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let report = validate(spec);
    if !report.is_ok() {
        return Err(Error::InvalidInput(report.violations[0].message.clone()));
    }
    let tol = spec.tolerances.det_zero_tol;
    let guard = spec.tolerances.band_guard;
    let n = spec.dimension;

    let mut cert = MembershipCertificate {
        omega: lambda,
        verdict: Verdict::Out,
        in_spectrum: false,
        detected_at_step: None,
        detection: None,
        witness_k: vec![],
        min_sigma_per_level: vec![],
        final_matrix: None,
        note: None,
    };
    let inconclusive = |mut cert: MembershipCertificate, note: String| {
        cert.verdict = Verdict::Inconclusive;
        cert.note = Some(note);
        Ok(cert)
    };

    let mut chain = match BChain::start(spec, lambda, grids.k_points) {
        Ok(c) => c,
        Err(e) => return inconclusive(cert, format!("level 0: {e}")),
    };
    loop {
        let level = chain.last();
        let j = level.level;
        cert.min_sigma_per_level.push(level.check.min_sigma);
        if !level.pass_through {
            cert.witness_k = level.check.witness_k.clone();
        }
        if level.check.detected() {
            cert.verdict = Verdict::In;
            cert.in_spectrum = true;
            cert.detected_at_step = Some(j);
            cert.detection = level.check.detection;
            if j == n {
                cert.final_matrix = level.check.witness_matrix.clone();
            }
            return Ok(cert);
        }
        if j == n {
            cert.final_matrix = level.check.witness_matrix.clone();
            return Ok(cert);
        }
        let sigma = level.check.min_sigma;
        if sigma < guard && spec.has_defects_from(j + 1) {
            return inconclusive(
                cert,
                format!("level {j} has min sigma {sigma:e} below band guard {guard:e}"),
            );
        }
        debug_assert!(level.certified_invertible(tol));
        if let Err(e) = chain.extend() {
            return inconclusive(cert, format!("level {}: {e}", j + 1));
        }
    }
}
