//! Mixed-binary convex QP: model, relaxation solver, branch-and-bound and
//! MPS export.

mod bnb;
mod model;
mod mps;
mod qp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bnb::{branch_and_bound, INTEGRALITY_TOLERANCE};
pub use model::{LinearConstraint, MiqpModel, Objective, Sense, VarId, VarKind, Variable};
pub use mps::{export_mps, read_mps, write_mps};
pub use qp::{solve_relaxation, QpOptions, Relaxation, RelaxationStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Stop once `(incumbent − bound) ≤ relative_mip_gap·|incumbent|`.
    pub relative_mip_gap: f64,
    /// Stop (and prune) once `incumbent − bound ≤ absolute_gap`.
    pub absolute_gap: f64,
    pub node_limit: usize,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub qp_kkt_tolerance: f64,
    /// Print a line to stdout for every new incumbent.
    pub verbose: bool,
    /// Keep `(fixings, bound)` for every node created.
    pub record_nodes: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            relative_mip_gap: 0.01,
            absolute_gap: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
            qp_kkt_tolerance: 1e-7,
            verbose: false,
            record_nodes: false,
        }
    }
}

impl SolveConfig {
    /// Search to proven optimality (up to `absolute_gap`).
    pub fn exact() -> Self {
        SolveConfig {
            relative_mip_gap: 0.0,
            ..Default::default()
        }
    }

    pub fn with_gap(relative_mip_gap: f64) -> Self {
        SolveConfig {
            relative_mip_gap,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.relative_mip_gap >= 0.0) || !(self.absolute_gap >= 0.0) {
            return Err(Error::input("MIP gaps must be non-negative"));
        }
        if !(self.qp_kkt_tolerance > 0.0) {
            return Err(Error::input("qp_kkt_tolerance must be positive"));
        }
        if self.time_limit.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::input("time_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    GapReached,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub fixings: Vec<(VarId, bool)>,
    /// Lower bound claimed for every completion of `fixings`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Incumbent values; empty when none was found.
    pub assignment: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub nodes_explored: usize,
    pub elapsed_seconds: f64,
    #[serde(skip)]
    pub node_records: Vec<NodeRecord>,
    pub message: Option<String>,
}

impl SolveResult {
    fn infeasible(message: String, nodes: usize, elapsed: f64) -> Self {
        SolveResult {
            status: SolveStatus::Infeasible,
            assignment: Vec::new(),
            objective: f64::INFINITY,
            best_bound: f64::INFINITY,
            nodes_explored: nodes,
            elapsed_seconds: elapsed,
            node_records: Vec::new(),
            message: Some(message),
        }
    }

    pub fn has_solution(&self) -> bool {
        !self.assignment.is_empty()
    }

    /// `(objective − bound) / max(|objective|, 1e-10)`.
    pub fn relative_gap(&self) -> f64 {
        if !self.has_solution() {
            return f64::INFINITY;
        }
        ((self.objective - self.best_bound) / self.objective.abs().max(1e-10)).max(0.0)
    }

    /// Turns an infeasible status into `Error::Infeasible`.
    pub fn into_feasible(self) -> Result<Self> {
        match self.status {
            SolveStatus::Infeasible => Err(Error::Infeasible(self.message.unwrap_or_default())),
            _ if !self.has_solution() => Err(Error::internal(
                self.message.unwrap_or_else(|| "no solution".into()),
            )),
            _ => Ok(self),
        }
    }
}
