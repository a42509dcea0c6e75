use super::context::{Context, Setup};
use super::multi::solve_continuous;
use super::{SolveResult, SolveStatus, SolverOptions, SubStatus};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, solve_milp, CallbackResult, LpStatus, MilpOptions, MilpStatus, NodeContext, Row, Verdict};
use crate::model::{Assignment, Convexity, Model};
use crate::nlp::NlpStatus;

/// LP/NLP-based branch and bound: one MILP tree over the master whose
/// integer-feasible nodes trigger subproblem solves and lazy cuts. Runs the
/// global variant when `opts.algorithm` is `GLpNlpBB`.
pub fn solve_lpnlp_bb(model: &Model, opts: &SolverOptions) -> Result<SolveResult> {
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
    let lp = ctx.master_lp();
    let ints = ctx.ints.clone();
    // the first master bound of a single tree is its root relaxation
    let root = solve_lp(&lp, 1e-9)?;
    if root.status == LpStatus::Optimal {
        ctx.raise_lb(root.objective);
    }

    let mut failure: Option<Error> = None;
    let mut cb = |node: &NodeContext, x: &[f64]| -> CallbackResult {
        if failure.is_some() || ctx.out_of_time() || ctx.nlp_solves >= opts.max_iterations {
            return CallbackResult::reject(Vec::new());
        }
        ctx.raise_lb(node.global_bound);
        let y = Assignment::from_point(&ctx.ep.model, x);
        let out = match ctx.subproblem(&y, x) {
            Ok(o) => o,
            Err(e) => {
                failure = Some(e);
                return CallbackResult::reject(Vec::new());
            }
        };
        let mut cuts = out.cuts.clone();
        if ctx.global || out.status == SubStatus::Failed {
            if let Some(c) = ctx.no_good(&y) {
                cuts.push(c);
            }
            if !ctx.global {
                ctx.certified = false;
            }
        }
        let rows: Vec<Row> = cuts.iter().map(Row::from_cut).collect();
        if out.status != SubStatus::Repeated {
            let counts = ctx.add_cuts(&cuts);
            ctx.record(&y, node.lp_objective, out.status, counts);
        }
        CallbackResult {
            verdict: Verdict::RejectAndCut,
            cuts: rows,
            incumbent: ctx.master_incumbent(),
        }
    };
    let milp_opts = MilpOptions {
        abs_gap: opts.eps_abs,
        rel_gap: opts.eps_rel,
        time_limit: opts.time_limit,
        ..Default::default()
    };
    let res = solve_milp(&lp, &ints, Some(&mut cb), milp_opts)?;
    if let Some(e) = failure {
        return Err(e);
    }
    if ctx.first_lb.is_none() {
        ctx.first_lb = res.bound_trace.first().copied();
    }
    let status = match res.status {
        MilpStatus::Optimal if ctx.ub.is_finite() => {
            ctx.raise_lb(res.best_bound);
            if ctx.nlp_solves >= opts.max_iterations {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::Optimal
            }
        }
        MilpStatus::Optimal | MilpStatus::Infeasible => {
            if ctx.ub.is_finite() {
                ctx.raise_lb(ctx.ub);
                SolveStatus::Optimal
            } else if ctx.out_of_time() {
                SolveStatus::TimeLimit
            } else if ctx.nlp_solves >= opts.max_iterations {
                SolveStatus::IterationLimit
            } else {
                SolveStatus::Infeasible
            }
        }
        MilpStatus::Unbounded => {
            return Err(Error::InvalidModel("master problem is unbounded; bound the variables".into()))
        }
        MilpStatus::TimeLimit => {
            ctx.raise_lb(res.best_bound);
            SolveStatus::TimeLimit
        }
        MilpStatus::NodeLimit => {
            ctx.raise_lb(res.best_bound);
            SolveStatus::IterationLimit
        }
    };
    Ok(ctx.finish(status))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::ModelBuilder;
    use crate::oa::{solve_oa, Algorithm};

    fn tiny() -> Model {
        let mut b = ModelBuilder::new("tiny");
        let x = b.continuous("x", 0.0, 4.0);
        let y = b.binary("y");
        b.minimize((Expr::var(x) - 2.0).powi(2) + 0.5 * Expr::var(y))
            .leq(Expr::var(x) - 2.0 * Expr::var(y), 1.0)
            .declare_convex();
        b.build().unwrap()
    }

    #[test]
    fn matches_multi_tree() {
        for convexify in [false, true] {
            let opts = SolverOptions {
                convexify,
                ..SolverOptions::new(Algorithm::LpNlpBB)
            };
            let r = solve_lpnlp_bb(&tiny(), &opts).unwrap();
            let o = solve_oa(&tiny(), &SolverOptions::new(Algorithm::OA)).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective - 0.5).abs() < 1e-6, "{}", r.objective);
            assert!((r.objective - o.objective).abs() < 1e-6);
            assert!(r.nlp_solves <= 2);
        }
    }

    #[test]
    fn integral_root_needs_one_subproblem() {
        // y = 1 is forced by the linear row, so the root LP is integral
        let mut b = ModelBuilder::new("root");
        let x = b.continuous("x", 0.0, 4.0);
        let y = b.binary("y");
        b.minimize((Expr::var(x) - 2.0).powi(2) + Expr::var(y))
            .geq(Expr::var(y), 0.5)
            .declare_convex();
        let r = solve_lpnlp_bb(&b.build().unwrap(), &SolverOptions::new(Algorithm::LpNlpBB)).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.nlp_solves, 1);
        assert!((r.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn global_single_tree_bilinear() {
        let mut b = ModelBuilder::new("bil");
        let x = b.continuous("x", 0.0, 1.0);
        let z = b.continuous("z", 0.0, 1.0);
        let y = b.binary("y");
        b.minimize(-(Expr::var(x) * Expr::var(z)) + Expr::var(y))
            .leq(Expr::var(x) + Expr::var(z) - Expr::var(y), 1.0);
        let m = b.build().unwrap();
        for convexify in [false, true] {
            let opts = SolverOptions {
                convexify,
                ..SolverOptions::new(Algorithm::GLpNlpBB)
            };
            let r = solve_lpnlp_bb(&m, &opts).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective + 0.25).abs() < 1e-5, "{}", r.objective);
        }
    }
}
