//! Outer approximation (multi-tree) and LP/NLP-based branch and bound
//! (single-tree), each in a convex and a global variant.

mod context;
mod cuts;
mod multi;
mod single;

pub use cuts::oa_cuts;
pub use multi::solve_oa;
pub use single::solve_lpnlp_bb;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Assignment, FeasibilityNorm, Model, Point};
use crate::nlp::NlpOptions;
use crate::presolve::PresolveStats;
use crate::relax::LinearCut;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Algorithm {
    OA,
    LpNlpBB,
    GOA,
    GLpNlpBB,
}

impl Algorithm {
    pub fn is_global(self) -> bool {
        matches!(self, Algorithm::GOA | Algorithm::GLpNlpBB)
    }

    pub fn is_single_tree(self) -> bool {
        matches!(self, Algorithm::LpNlpBB | Algorithm::GLpNlpBB)
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::OA => "OA",
            Algorithm::LpNlpBB => "LP/NLP-B&B",
            Algorithm::GOA => "GOA",
            Algorithm::GLpNlpBB => "GLP/NLP-B&B",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oa" => Ok(Algorithm::OA),
            "lpnlp" => Ok(Algorithm::LpNlpBB),
            "goa" => Ok(Algorithm::GOA),
            "glpnlp" => Ok(Algorithm::GLpNlpBB),
            _ => Err(Error::InvalidModel(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SubproblemScale {
    /// Tightened bounds only.
    Reduced,
    /// Tightened bounds plus the convexification cuts.
    Complete,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub algorithm: Algorithm,
    pub convexify: bool,
    pub subproblem_scale: SubproblemScale,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub time_limit: Option<Duration>,
    pub feasibility_norm: FeasibilityNorm,
    pub max_iterations: usize,
    /// Linearize only rows violated at the point (all nonlinear rows otherwise).
    pub violated_only: bool,
    pub nlp: NlpOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            algorithm: Algorithm::OA,
            convexify: false,
            subproblem_scale: SubproblemScale::Reduced,
            eps_abs: 1e-5,
            eps_rel: 1e-3,
            time_limit: Some(Duration::from_secs(900)),
            feasibility_norm: FeasibilityNorm::L1,
            max_iterations: 1000,
            violated_only: false,
            nlp: NlpOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn new(algorithm: Algorithm) -> Self {
        SolverOptions {
            algorithm,
            ..Default::default()
        }
    }

    /// Run label: `C-` prefix with convexification and `(r)`/`(c)` for the
    /// subproblem scale.
    pub fn label(&self) -> String {
        if !self.convexify {
            return self.algorithm.label().to_string();
        }
        let scale = match self.subproblem_scale {
            SubproblemScale::Reduced => "r",
            SubproblemScale::Complete => "c",
        };
        format!("C-{}({scale})", self.algorithm.label())
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(Error::InvalidModel("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn converged(&self, lb: f64, ub: f64) -> bool {
        ub.is_finite() && ub - lb <= self.eps_abs.max(self.eps_rel * ub.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SubStatus {
    Optimal,
    Infeasible,
    Failed,
    /// Assignment seen before; nothing was solved.
    Repeated,
    /// No subproblem: converged after the master.
    None,
}

impl fmt::Display for SubStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SubStatus::Optimal => "optimal",
            SubStatus::Infeasible => "infeasible",
            SubStatus::Failed => "failed",
            SubStatus::Repeated => "repeated",
            SubStatus::None => "none",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CutCounts {
    pub oa_objective: usize,
    pub oa_constraint: usize,
    pub envelope: usize,
    pub no_good: usize,
}

impl CutCounts {
    pub fn total(&self) -> usize {
        self.oa_objective + self.oa_constraint + self.envelope + self.no_good
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub assignment: String,
    pub assignment_hash: u64,
    pub master_objective: f64,
    pub subproblem: SubStatus,
    /// Cuts added in this iteration.
    pub cuts: CutCounts,
    pub cuts_total: usize,
    pub lb: f64,
    pub ub: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub lb: f64,
    pub ub: f64,
}

impl Bounds {
    pub fn gap(&self) -> f64 {
        self.ub - self.lb
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    TimeLimit,
    IterationLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Best point over the input model's variables.
    pub incumbent: Option<Point>,
    pub objective: f64,
    pub bounds: Bounds,
    pub log: Vec<IterationLog>,
    /// Lower bound from the first master problem.
    pub first_lb: f64,
    /// Fixed-integer subproblems solved.
    pub nlp_solves: usize,
    /// False when the optimality claim rests on a heuristic step (undeclared
    /// convexity in a convex variant, a failed subproblem, or an uncertified
    /// global subproblem).
    pub certified: bool,
    #[serde(skip)]
    pub presolve: Option<PresolveStats>,
    /// Every cut the master received: convexification cuts first, then the
    /// iteration cuts in order. Columns follow the epigraph model (input
    /// variables, then `mu` for a nonlinear objective), then auxiliaries.
    #[serde(skip)]
    pub cuts: Vec<LinearCut>,
    pub time_s: f64,
}

impl SolveResult {
    /// Writes the cut pool as JSON lines.
    pub fn write_cuts(&self, mut w: impl Write) -> Result<()> {
        for c in &self.cuts {
            writeln!(w, "{}", c.to_json_line()).map_err(|e| Error::InvalidModel(format!("cuts: {e}")))?;
        }
        Ok(())
    }

    /// Writes the iteration trace as CSV.
    pub fn write_trace(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidModel(format!("trace: {e}"));
        out.write_record(["iter", "lb", "ub", "gap", "y_assignment_hash", "subproblem_status", "cuts_total", "time_s"])
            .map_err(io)?;
        for r in &self.log {
            out.write_record([
                r.iteration.to_string(),
                r.lb.to_string(),
                r.ub.to_string(),
                (r.ub - r.lb).to_string(),
                format!("{:016x}", r.assignment_hash),
                r.subproblem.to_string(),
                r.cuts_total.to_string(),
                format!("{:.6}", r.elapsed_s),
            ])
            .map_err(io)?;
        }
        out.flush().map_err(|e| Error::InvalidModel(format!("trace: {e}")))?;
        Ok(())
    }
}

/// Fixed-integer subproblem for `y` as the algorithm in `opts` would build
/// it (including presolve and the subproblem scale). Returns the status and
/// the objective when optimal. In global variants `y` refers to the model
/// after binary expansion.
pub fn solve_subproblem(model: &Model, opts: &SolverOptions, y: &Assignment) -> Result<(SubStatus, Option<f64>)> {
    opts.validate()?;
    let mut ctx = match context::Context::new(model, opts)? {
        context::Setup::Ready(c) => c,
        context::Setup::Done(_) => return Ok((SubStatus::Infeasible, None)),
    };
    if ctx.excluded_by_presolve(y) {
        return Ok((SubStatus::Infeasible, None));
    }
    let start = ctx.ep.model.bounds().start_point();
    let out = ctx.subproblem(y, &start)?;
    let value = (out.status == SubStatus::Optimal).then_some(out.value);
    Ok((out.status, value))
}

/// Runs the algorithm named in `opts`.
pub fn solve(model: &Model, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    if opts.algorithm.is_single_tree() {
        solve_lpnlp_bb(model, opts)
    } else {
        solve_oa(model, opts)
    }
}
