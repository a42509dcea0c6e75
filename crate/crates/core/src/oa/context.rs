//! State shared by the multi-tree and single-tree drivers.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::{oa_cuts, Bounds, CutCounts, IterationLog, SolveResult, SolveStatus, SolverOptions, SubStatus, SubproblemScale};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interval::VarBox;
use crate::lp::{LinearProgram, Row};
use crate::model::{Assignment, Convexity, Epigraph, Model, Point, VarId};
use crate::nlp::{solve_global, solve_local, NlpOptions, NlpSolution, NlpStatus};
use crate::presolve::{nonlinear_targets, presolve, relaxation_lp, PresolveOptions, PresolveResult};
use crate::relax::{no_good_cut, CutKind, LinearCut};

#[derive(Clone, Debug)]
pub(super) struct Outcome {
    pub status: SubStatus,
    /// Objective at the subproblem optimum.
    pub value: f64,
    /// Certified lower bound for this assignment (global solves).
    pub bound: f64,
    pub cuts: Vec<LinearCut>,
}

pub(super) enum Setup<'a> {
    Ready(Box<Context<'a>>),
    Done(SolveResult),
}

pub(super) struct Context<'a> {
    pub opts: &'a SolverOptions,
    original_vars: usize,
    /// Input model, with integers expanded to binaries in global mode.
    pub model: Model,
    pub ep: Epigraph,
    pub global: bool,
    pub presolve: Option<PresolveResult>,
    pub master_box: VarBox,
    pub rows: Vec<Row>,
    pub ints: Vec<usize>,
    objective: Vec<f64>,
    obj_constant: f64,
    sub_model: Model,
    /// Models whose bounds define the boxes for global-mode estimators.
    cut_models: Vec<Model>,
    pub start: Instant,
    pub log: Vec<IterationLog>,
    pub lb: f64,
    pub ub: f64,
    incumbent: Option<Vec<f64>>,
    cache: HashMap<Assignment, Outcome>,
    pub certified: bool,
    pub nlp_solves: usize,
    cuts_total: usize,
    pool: Vec<LinearCut>,
    pub first_lb: Option<f64>,
}

impl<'a> Context<'a> {
    pub fn new(input: &Model, opts: &'a SolverOptions) -> Result<Setup<'a>> {
        let start = Instant::now();
        let global = opts.algorithm.is_global();
        let model = if global { input.binary_expand()? } else { input.clone() };
        let ep = model.epigraph();
        let e = &ep.model;
        if global {
            for v in nonlinear_targets(e) {
                if !e.var(v).bounds().is_finite() {
                    return Err(Error::UnboundedBox(e.var(v).name.clone()));
                }
            }
        }
        let n = e.num_vars();
        let presolve = if opts.convexify {
            let r = presolve(e, &mut PresolveOptions::new())?;
            if r.is_infeasible() {
                let mut res = empty_result(SolveStatus::Infeasible, start);
                res.presolve = Some(r.stats);
                return Ok(Setup::Done(res));
            }
            Some(r)
        } else {
            None
        };
        let (master_box, cuts) = match &presolve {
            Some(r) => (r.lifted_box(), r.cuts.clone()),
            None => (e.bounds(), Vec::new()),
        };
        let rows = relaxation_lp(e, &cuts, &master_box).rows;
        let form = e.objective.linear_form().expect("epigraph objective is affine");
        let mut objective = vec![0.0; master_box.len()];
        for (v, c) in &form.coeffs {
            objective[v.index()] = *c;
        }
        let ints = e.discrete_vars().map(|v| v.index()).collect();

        // Subproblems are solved on the model itself; `mu` only enters the
        // complete-scale rows, where it stands for the objective.
        let nm = model.num_vars();
        let mut sub_model = model.clone();
        let mut cut_models = vec![e.clone()];
        if let Some(r) = &presolve {
            let mut tight = r.tightened.clone();
            tight.truncate(n);
            if global {
                cut_models.push(e.with_bounds(&tight));
            }
            tight.truncate(nm);
            sub_model = model.with_bounds(&tight);
            if opts.subproblem_scale == SubproblemScale::Complete {
                let mu = ep.mu;
                let objective: Expr = (*model.objective).clone();
                let as_objective = move |v: VarId| (Some(v) == mu).then(|| objective.clone());
                let extra: Vec<(Expr, String)> = r
                    .cuts
                    .iter()
                    .map(|c| (substitute_aux(c, r, n).substitute(&as_objective), c.source.clone()))
                    .collect();
                sub_model = sub_model.with_rows(extra);
            }
        }
        let presolve_cuts = presolve.as_ref().map_or_else(Vec::new, |r| r.cuts.clone());
        let certified = global || model.convexity == Convexity::DeclaredConvex;
        Ok(Setup::Ready(Box::new(Context {
            opts,
            original_vars: input.num_vars(),
            model,
            ep,
            global,
            presolve,
            master_box,
            rows,
            ints,
            objective,
            obj_constant: form.constant,
            sub_model,
            cut_models,
            start,
            log: Vec::new(),
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            incumbent: None,
            cache: HashMap::new(),
            certified,
            nlp_solves: 0,
            cuts_total: 0,
            pool: presolve_cuts,
            first_lb: None,
        })))
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    pub fn time_left(&self) -> Option<Duration> {
        self.opts.time_limit.map(|t| t.saturating_sub(self.elapsed()))
    }

    pub fn out_of_time(&self) -> bool {
        self.time_left().is_some_and(|t| t.is_zero())
    }

    pub fn converged(&self) -> bool {
        self.opts.converged(self.lb, self.ub)
    }

    pub fn raise_lb(&mut self, v: f64) {
        if v > self.lb {
            self.lb = v.min(self.ub);
        }
        if self.first_lb.is_none() {
            self.first_lb = Some(v);
        }
    }

    pub fn master_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.master_box.clone());
        lp.objective = self.objective.clone();
        lp.obj_constant = self.obj_constant;
        lp.rows = self.rows.clone();
        lp
    }

    fn nlp_options(&self) -> NlpOptions {
        let mut o = self.opts.nlp.clone();
        o.time_limit = self.time_left();
        o
    }

    /// Linearizations at an epigraph-space point.
    pub fn cuts_at(&self, point: &[f64]) -> Vec<LinearCut> {
        let mut out = Vec::new();
        for m in &self.cut_models {
            out.extend(oa_cuts(m, self.ep.objective_row, point, !self.global));
            if !self.global {
                break;
            }
        }
        if self.opts.violated_only {
            out.retain(|c| c.lhs(point) - c.rhs >= -1e-6 * (1.0 + c.rhs.abs()));
        }
        out
    }

    pub fn add_cuts(&mut self, cuts: &[LinearCut]) -> CutCounts {
        let mut counts = CutCounts::default();
        for c in cuts {
            match c.kind {
                CutKind::OAObjective => counts.oa_objective += 1,
                CutKind::OAConstraint => counts.oa_constraint += 1,
                CutKind::Envelope => counts.envelope += 1,
                CutKind::NoGood => counts.no_good += 1,
            }
            self.rows.push(Row::from_cut(c));
        }
        self.pool.extend_from_slice(cuts);
        self.cuts_total += cuts.len();
        counts
    }

    pub fn no_good(&self, y: &Assignment) -> Option<LinearCut> {
        no_good_cut(&self.ep.model, y).ok()
    }

    /// Relaxed NLP over the unreduced box; cuts at its solution.
    pub fn relaxed_nlp(&mut self) -> Result<(NlpStatus, Vec<LinearCut>)> {
        let relaxed = self.model.relax_integrality();
        let sol = solve_local(&relaxed, &relaxed.bounds().start_point(), &self.nlp_options())?;
        let cuts = match sol.status {
            NlpStatus::LocalOptimal => self.cuts_at(&self.to_epigraph(sol.point.0, sol.objective)),
            _ => Vec::new(),
        };
        Ok((sol.status, cuts))
    }

    /// Appends `mu = value` to a point of the model.
    fn to_epigraph(&self, mut point: Vec<f64>, value: f64) -> Vec<f64> {
        point.resize(self.ep.model.num_vars(), 0.0);
        if let Some(mu) = self.ep.mu {
            point[mu.index()] = value;
        }
        point
    }

    fn objective_at(&self, point: &[f64]) -> Option<f64> {
        self.model.objective_value(&point[..self.model.num_vars()]).ok()
    }

    fn offer(&mut self, point: Vec<f64>, value: f64) {
        if value < self.ub {
            self.ub = value;
            self.incumbent = Some(point);
        }
    }

    /// Incumbent extended to the master columns, with its objective.
    pub fn master_incumbent(&self) -> Option<(Vec<f64>, f64)> {
        let p = self.incumbent.as_ref()?;
        let lifted = match &self.presolve {
            Some(r) => r.avm.lift_point(p)?,
            None => p.clone(),
        };
        Some((lifted, self.ub))
    }

    fn solve_fixed(&self, m: &Model, start: &[f64]) -> Result<NlpSolution> {
        let opts = self.nlp_options();
        if self.global {
            return solve_global(m, &opts);
        }
        let sol = solve_local(m, start, &opts)?;
        if sol.status != NlpStatus::Failed {
            return Ok(sol);
        }
        let retry = NlpOptions { multistart: 3, ..opts };
        solve_local(m, &m.bounds().start_point(), &retry)
    }

    /// True when `y` lies in the original bounds but outside the tightened
    /// ones, so presolve has already proven it infeasible.
    pub fn excluded_by_presolve(&self, y: &Assignment) -> bool {
        y.iter().any(|(v, val)| {
            let (orig, tight) = (self.ep.model.var(v).bounds(), self.sub_model.var(v).bounds());
            let val = val as f64;
            orig.lo <= val && val <= orig.hi && (val < tight.lo || val > tight.hi)
        })
    }

    /// Fixed-integer subproblem for `y`, falling back to the feasibility
    /// problem. Repeated assignments return the cached outcome with status
    /// `Repeated`.
    pub fn subproblem(&mut self, y: &Assignment, start: &[f64]) -> Result<Outcome> {
        if let Some(o) = self.cache.get(y) {
            return Ok(Outcome {
                status: SubStatus::Repeated,
                ..o.clone()
            });
        }
        let n = self.model.num_vars();
        let fixed = self.sub_model.fix_integers(y)?;
        let mut x0 = start[..n].to_vec();
        fixed.bounds().project(&mut x0);
        self.nlp_solves += 1;
        let sol = self.solve_fixed(&fixed, &x0)?;
        let outcome = if sol.status.is_optimal() {
            if self.global && sol.status != NlpStatus::GlobalOptimal {
                self.certified = false;
            }
            let value = self.objective_at(&sol.point).unwrap_or(sol.objective);
            let p = self.to_epigraph(sol.point.0, value);
            let cuts = self.cuts_at(&p);
            self.offer(p, value);
            Outcome {
                status: SubStatus::Optimal,
                value,
                bound: if self.global { sol.bound.min(value) } else { value },
                cuts,
            }
        } else {
            let status = if sol.status == NlpStatus::Infeasible {
                SubStatus::Infeasible
            } else {
                SubStatus::Failed
            };
            let feas = self.sub_model.make_feasibility(y, self.opts.feasibility_norm)?;
            let mut f0 = x0.clone();
            f0.resize(feas.num_vars(), 0.0);
            let fs = solve_local(&feas, &f0, &self.nlp_options())?;
            let cuts = if fs.status.is_optimal() {
                let x = fs.point[..n].to_vec();
                let value = self.objective_at(&x).unwrap_or(0.0);
                self.cuts_at(&self.to_epigraph(x, value))
            } else {
                Vec::new()
            };
            if status == SubStatus::Failed {
                self.certified = false;
            }
            Outcome {
                status,
                value: f64::INFINITY,
                bound: if status == SubStatus::Infeasible { f64::INFINITY } else { f64::NEG_INFINITY },
                cuts,
            }
        };
        self.cache.insert(y.clone(), outcome.clone());
        Ok(outcome)
    }

    pub fn record(&mut self, y: &Assignment, master_objective: f64, subproblem: SubStatus, cuts: CutCounts) {
        self.log.push(IterationLog {
            iteration: self.log.len(),
            assignment: y.to_string(),
            assignment_hash: y.stable_hash(),
            master_objective,
            subproblem,
            cuts,
            cuts_total: self.cuts_total,
            lb: self.lb,
            ub: self.ub,
            elapsed_s: self.elapsed().as_secs_f64(),
        });
    }

    pub fn finish(self, status: SolveStatus) -> SolveResult {
        let incumbent = self.incumbent.map(|mut p| {
            p.truncate(self.original_vars);
            Point(p)
        });
        let lb = if status == SolveStatus::Optimal { self.lb.min(self.ub) } else { self.lb };
        SolveResult {
            status,
            objective: if incumbent.is_some() { self.ub } else { f64::NAN },
            incumbent,
            bounds: Bounds { lb, ub: self.ub },
            log: self.log,
            first_lb: self.first_lb.unwrap_or(f64::NEG_INFINITY),
            nlp_solves: self.nlp_solves,
            certified: self.certified,
            presolve: self.presolve.map(|r| r.stats),
            cuts: self.pool,
            time_s: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn empty_result(status: SolveStatus, start: Instant) -> SolveResult {
    SolveResult {
        status,
        incumbent: None,
        objective: f64::NAN,
        bounds: Bounds {
            lb: f64::INFINITY,
            ub: f64::INFINITY,
        },
        log: Vec::new(),
        first_lb: f64::INFINITY,
        nlp_solves: 0,
        certified: true,
        presolve: None,
        cuts: Vec::new(),
        time_s: start.elapsed().as_secs_f64(),
    }
}

/// A cut as a row over the model's own variables, with each auxiliary column
/// replaced by the factor it stands for.
fn substitute_aux(cut: &LinearCut, r: &PresolveResult, n: usize) -> Expr {
    let mut linear = Vec::new();
    let mut body = Expr::constant(-cut.rhs);
    for (v, c) in cut.terms() {
        if v.index() < n {
            linear.push((v, c));
        } else {
            body = body + c * r.avm.factors[v.index() - n].definition.clone();
        }
    }
    body + Expr::linear(&linear, 0.0)
}
