//! Offline synthesis of the explicit MPC law.

mod condense;
mod controller;
mod enumerate;
mod model;
mod oracle;

pub use condense::{condense, selector, CondensedQp, ConstraintKind, ConstraintTag};
pub use controller::{CriticalRegion, PwaController};
pub use enumerate::{enumerate_regions, EnumerationReport};
pub use model::{LtiSystem, MpcSpec, Polyhedron};
pub use oracle::{solve_qp_oracle, QpSolution};


use thiserror::Error;

/// Point-in-polyhedron slack.
pub const FEAS_TOL: f64 = 1e-9;
/// Singular-value threshold for the LICQ check on `G_A`.
pub const RANK_TOL: f64 = 1e-10;
/// Regions whose inscribed ball is no larger than this are discarded.
pub const CHEBYSHEV_TOL: f64 = 1e-9;
pub(crate) const PD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("QP infeasible at this state")]
    Infeasible,
    #[error("no critical region survived enumeration")]
    EmptyController,
    #[error("state lies in no region of the controller")]
    NotFound,
    #[error("region index {0} out of range")]
    InvalidRegion(usize),
    #[error("controller document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub rank: f64,
    pub chebyshev_radius: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feasibility: FEAS_TOL, rank: RANK_TOL, chebyshev_radius: CHEBYSHEV_TOL }
    }
}

/// Condenses and enumerates in one call.
pub fn synthesize(sys: &LtiSystem, spec: &MpcSpec) -> Result<(CondensedQp, PwaController, EnumerationReport), SynthesisError> {
    let qp = condense(sys, spec)?;
    let (ctrl, report) = enumerate_regions(&qp, &Tolerances::default())?;
    Ok((qp, ctrl, report))
}
