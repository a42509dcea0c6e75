use std::collections::HashSet;

use super::context::{Context, Setup};
use super::{CutCounts, SolveResult, SolveStatus, SolverOptions, SubStatus};
use crate::error::{Error, Result};
use crate::lp::{solve_milp, MilpOptions, MilpStatus};
use crate::model::{Assignment, Convexity, Model};
use crate::nlp::NlpStatus;

/// Solves a problem without discrete variables with one subproblem solve.
pub(super) fn solve_continuous(mut ctx: Box<Context<'_>>) -> Result<SolveResult> {
    let y = Assignment::default();
    let start = ctx.ep.model.bounds().start_point();
    let out = ctx.subproblem(&y, &start)?;
    let status = match out.status {
        SubStatus::Optimal => {
            ctx.raise_lb(out.bound);
            if ctx.certified && !ctx.global {
                ctx.lb = ctx.ub;
            }
            SolveStatus::Optimal
        }
        SubStatus::Infeasible => SolveStatus::Infeasible,
        _ => SolveStatus::IterationLimit,
    };
    ctx.record(&y, f64::NAN, out.status, CutCounts::default());
    Ok(ctx.finish(status))
}

/// Outer approximation: alternate the master MILP and fixed-integer
/// subproblems until the bounds meet. Runs the global variant when
/// `opts.algorithm` is `GOA`.
pub fn solve_oa(model: &Model, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    let mut ctx = match Context::new(model, opts)? {
        Setup::Ready(c) => c,
        Setup::Done(r) => return Ok(r),
    };
    if ctx.ints.is_empty() {
        return solve_continuous(ctx);
    }
    let (st, cuts) = ctx.relaxed_nlp()?;
    if st == NlpStatus::Infeasible && !ctx.global && model.convexity == Convexity::DeclaredConvex {
        return Ok(ctx.finish(SolveStatus::Infeasible));
    }
    ctx.add_cuts(&cuts);

    let mut seen: HashSet<Assignment> = HashSet::new();
    let status = loop {
        if ctx.out_of_time() {
            break SolveStatus::TimeLimit;
        }
        if ctx.log.len() >= opts.max_iterations {
            break SolveStatus::IterationLimit;
        }
        let milp_opts = MilpOptions {
            time_limit: ctx.time_left(),
            rel_gap: 0.0,
            ..Default::default()
        };
        let master = solve_milp(&ctx.master_lp(), &ctx.ints, None, milp_opts)?;
        match master.status {
            MilpStatus::Optimal => {}
            MilpStatus::Infeasible => {
                // every assignment is excluded or proven no better
                if ctx.ub.is_finite() {
                    ctx.raise_lb(ctx.ub);
                    break SolveStatus::Optimal;
                }
                break SolveStatus::Infeasible;
            }
            MilpStatus::Unbounded => {
                return Err(Error::InvalidModel("master problem is unbounded; bound the variables".into()))
            }
            MilpStatus::TimeLimit | MilpStatus::NodeLimit => break SolveStatus::TimeLimit,
        }
        ctx.raise_lb(master.best_bound.min(master.objective));
        let point = master.point.expect("optimal master has a point");
        let y = Assignment::from_point(&ctx.ep.model, &point);
        if ctx.converged() {
            ctx.record(&y, master.objective, SubStatus::None, CutCounts::default());
            break SolveStatus::Optimal;
        }
        let out = ctx.subproblem(&y, &point)?;
        let mut cuts = out.cuts.clone();
        let repeated = !seen.insert(y.clone());
        if ctx.global || out.status == SubStatus::Failed || repeated {
            match ctx.no_good(&y) {
                Some(c) => cuts.push(c),
                None if repeated => {
                    // a general-integer assignment came back and cannot be cut off
                    ctx.certified = false;
                    ctx.record(&y, master.objective, out.status, CutCounts::default());
                    break SolveStatus::IterationLimit;
                }
                None => {}
            }
            if !ctx.global {
                ctx.certified = false;
            }
        }
        let counts = ctx.add_cuts(&cuts);
        ctx.record(&y, master.objective, out.status, counts);
        if ctx.converged() {
            break SolveStatus::Optimal;
        }
    };
    Ok(ctx.finish(status))
}
