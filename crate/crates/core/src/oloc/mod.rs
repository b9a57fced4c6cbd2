//! Endurance-optimal flow control by direct transcription.

mod lbfgs;
mod oracle;
mod solve;
mod transcription;

pub use lbfgs::{LbfgsReport, ProjectedLbfgs, StopReason};
pub use oracle::{brute_force_piecewise_oracle, OracleResult, RateLimitedSteps, ORACLE_CAP};
pub use solve::{
    solve, solve_physics, verify_feasibility, Candidate, CandidateKind, FeasibilityReport,
    OlocSolution, SolveOptions, Violations, MISMATCH_TOL, VERIFY_DT,
};
pub use transcription::{
    Residuals, Transcription, Workspace, MIN_SEGMENTS, TIME_SCALE, T_END_MAX, T_END_MIN,
};
