//! Fit reports: objective traces, certificates, and termination reasons.

use serde::{Deserialize, Serialize};

use crate::model::SparsitySummary;

/// Why a solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Relative objective (or coefficient) change fell below tolerance.
    Converged,
    /// Iteration budget exhausted; the best iterate so far is returned.
    IterationLimit,
    /// A zero certificate fired; the exact zero solution is returned.
    ZeroCertificate,
}

/// Diagnostics collected by the lassoes and group solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    /// Which penalty and options produced this fit.
    pub penalty: String,
    /// Objective value after every outer iteration (sweep), nonincreasing.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    /// Total inner coordinate sweeps across all tasks.
    pub inner_sweeps: usize,
    /// Per-task subgradient residuals at the returned iterate (lassoes), or
    /// per-row fixed-point residuals (group).
    pub kkt_residuals: Vec<f64>,
    /// Active coordinates per task at the returned iterate.
    pub active_set_sizes: Vec<usize>,
    pub sparsity: Option<SparsitySummary>,
    pub termination: Termination,
}

impl FitReport {
    pub fn converged(&self) -> bool {
        !matches!(self.termination, Termination::IterationLimit)
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}
