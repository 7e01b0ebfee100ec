//! Embedded LP / MILP solver: bounded-variable primal and dual simplex on
//! a dense product-form basis inverse, LP-based branch-and-bound, and
//! LP-file export/import for external cross-validation.
//!
//! The solver is deterministic for a fixed model and options (ties broken
//! by lowest index everywhere) when run single-worker. With `workers > 1`
//! sibling nodes are evaluated concurrently against a shared incumbent and
//! only the final objective is reproducible, not the node count.

mod branch_bound;
mod lp_format;
mod simplex;

pub use branch_bound::solve_mip;
pub use lp_format::{read_lp, write_lp, write_lp_file};
pub use simplex::solve_lp;

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("iteration limit exceeded ({0} iterations)")]
    IterationLimit(u64),
    #[error("model is malformed: {0}")]
    BadModel(String),
    #[error("lp format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome of a pure LP solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basis at termination: the basic column per row position (structural
/// columns first, then one slack per row), plus the nonbasic-at-upper set.
#[derive(Debug, Clone, Default)]
pub struct BasisDescriptor {
    pub basic: Vec<usize>,
    pub at_upper: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Objective value (offset included) when optimal.
    pub objective: T,
    /// Structural column values when optimal.
    pub x: Vec<T>,
    pub basis: BasisDescriptor,
    pub iterations: u64,
}

/// Outcome of a branch-and-bound solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    /// Incumbent proven within the default gap.
    Optimal,
    Infeasible,
    /// Stopped at a user gap looser than the proof gap.
    GapLimit,
    NodeLimit,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct MipSolution<T> {
    pub status: MipStatus,
    /// Best integral objective found (offset included).
    pub objective: Option<T>,
    /// Best proven lower bound (minimization).
    pub best_bound: T,
    /// Relative gap at termination.
    pub gap: f64,
    /// Column values of the incumbent.
    pub x: Option<Vec<T>>,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall: Duration,
    /// Line-oriented solver log: node, bound, incumbent, gap.
    pub log: Vec<String>,
}

/// Branch-and-bound options. The defaults prove optimality to a 1e-6
/// relative gap.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub int_tol: f64,
    pub rel_gap: f64,
    pub node_limit: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Worker threads for node evaluation; determinism is only guaranteed
    /// with a single worker.
    pub workers: usize,
    pub log: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            int_tol: 1e-6,
            rel_gap: 1e-6,
            node_limit: None,
            time_limit: None,
            workers: 1,
            log: false,
        }
    }
}

/// Gap threshold below which a solve counts as proven optimal.
pub(crate) const PROOF_GAP: f64 = 1e-6;
