//! Linear and mixed-integer linear programming.

mod milp;
mod simplex;

pub use milp::{
    solve_milp, CallbackResult, MilpCallback, MilpOptions, MilpResult, MilpStatus, NodeContext, Verdict,
};
pub use simplex::{Basis, LpStatus, Simplex};

use serde::Serialize;

use crate::error::Result;
use crate::interval::{Interval, VarBox};
use crate::relax::LinearCut;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Row {
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Row {
        Row {
            coeffs,
            sense: RowSense::Le,
            rhs,
        }
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Row {
        Row {
            coeffs,
            sense: RowSense::Ge,
            rhs,
        }
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Row {
        Row {
            coeffs,
            sense: RowSense::Eq,
            rhs,
        }
    }

    pub fn from_cut(cut: &LinearCut) -> Row {
        Row::le(cut.terms().map(|(v, c)| (v.index(), c)).collect(), cut.rhs)
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Positive part of the row violation at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            RowSense::Le => (a - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - a).max(0.0),
            RowSense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// `min c·x + c0` subject to rows and column bounds.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub num_cols: usize,
    pub objective: Vec<f64>,
    pub obj_constant: f64,
    pub rows: Vec<Row>,
    pub bounds: VarBox,
}

impl LinearProgram {
    pub fn new(bounds: VarBox) -> LinearProgram {
        let n = bounds.len();
        LinearProgram {
            num_cols: n,
            objective: vec![0.0; n],
            obj_constant: 0.0,
            rows: Vec::new(),
            bounds,
        }
    }

    pub fn add_row(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn add_cut(&mut self, cut: &LinearCut) {
        self.rows.push(Row::from_cut(cut));
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(iv, v)| (iv.lo - v).max(v - iv.hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn from_simplex(status: LpStatus, s: &Simplex) -> LpSolution {
        let optimal = status == LpStatus::Optimal;
        LpSolution {
            status,
            primal: s.primal_values(),
            objective: if optimal { s.objective_value() } else { f64::NAN },
            duals: if optimal { s.row_duals() } else { Vec::new() },
            iterations: s.iterations,
        }
    }
}

/// Solves `lp` from scratch.
pub fn solve_lp(lp: &LinearProgram, feastol: f64) -> Result<LpSolution> {
    let mut s = Simplex::new(lp);
    s.feastol = feastol.min(1e-9);
    let st = s.solve()?;
    Ok(LpSolution::from_simplex(st, &s))
}

/// Default box `[0, inf)` for `n` columns.
pub fn nonnegative(n: usize) -> VarBox {
    VarBox::new(vec![Interval::new(0.0, f64::INFINITY); n])
}
