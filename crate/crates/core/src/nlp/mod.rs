//! Continuous subproblem solvers.

mod bfgs;
mod global;
mod local;

pub use global::solve_global;
pub use local::solve_local;

use std::time::Duration;

use serde::Serialize;

use crate::model::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NlpStatus {
    LocalOptimal,
    GlobalOptimal,
    Infeasible,
    Failed,
}

impl NlpStatus {
    pub fn is_optimal(self) -> bool {
        matches!(self, NlpStatus::LocalOptimal | NlpStatus::GlobalOptimal)
    }
}

#[derive(Clone, Debug)]
pub struct NlpSolution {
    pub status: NlpStatus,
    pub point: Point,
    pub objective: f64,
    /// Stationarity and complementarity residual, relative to
    /// `max(1, |grad f|_inf)`.
    pub kkt_residual: f64,
    /// Certified lower bound (global solves only).
    pub bound: f64,
    /// Row multipliers (local solves only).
    pub multipliers: Vec<f64>,
    /// Inner quasi-Newton iterations.
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct NlpOptions {
    pub feastol: f64,
    pub kkttol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Extra perturbed starts for local solves.
    pub multistart: usize,
    pub seed: u64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions {
            feastol: 1e-7,
            kkttol: 1e-6,
            max_outer: 30,
            max_inner: 2000,
            multistart: 0,
            seed: 0,
            abs_gap: 1e-6,
            rel_gap: 1e-5,
            node_limit: 20_000,
            time_limit: None,
        }
    }
}
