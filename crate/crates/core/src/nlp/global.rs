//! Spatial branch-and-bound over envelope relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::{solve_local, NlpOptions, NlpSolution, NlpStatus};
use crate::error::{Error, Result};
use crate::interval::{Interval, VarBox};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::model::{Model, Point};
use crate::presolve::{fbbt, nonlinear_targets, relaxation_lp, FbbtOptions};
use crate::relax::Avm;

struct Node {
    bx: VarBox,
    bound: f64,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

enum Relaxation {
    Infeasible,
    Bound { value: f64, point: Vec<f64>, avm: Avm },
}

fn relax_node(model: &Model, bx: &VarBox, hints: &[Vec<f64>], feastol: f64) -> Result<Relaxation> {
    let avm = Avm::build(model, bx).unwrap_or_else(|_| Avm::build_partial(model, bx));
    let cuts = avm.envelope_cuts(model, hints);
    let lifted = avm.lifted_box(bx);
    let mut lp: LinearProgram = relaxation_lp(model, &cuts, &lifted);
    let form = match &avm.objective {
        Some(f) => f.clone(),
        None => model.objective.linear_form().expect("affine objective"),
    };
    for (v, c) in &form.coeffs {
        lp.objective[v.index()] += c;
    }
    lp.obj_constant = form.constant;
    let sol = solve_lp(&lp, feastol)?;
    Ok(match sol.status {
        LpStatus::Infeasible => Relaxation::Infeasible,
        LpStatus::Unbounded => Relaxation::Bound {
            value: f64::NEG_INFINITY,
            point: bx.midpoint(),
            avm,
        },
        LpStatus::Optimal => Relaxation::Bound {
            value: sol.objective,
            point: sol.primal,
            avm,
        },
    })
}

/// Variable to split: largest relaxation gap of the factors it feeds, scaled
/// by its width; the widest nonlinear variable when no factor has a gap.
fn branching_variable(model: &Model, bx: &VarBox, avm: &Avm, lifted_point: &[f64], targets: &[usize]) -> Option<usize> {
    let n = model.num_vars();
    let x = &lifted_point[..n];
    let splittable = |i: usize| bx[i].width() > 1e-7 * (1.0 + bx[i].mag());
    let mut score = vec![0.0; n];
    for f in &avm.factors {
        let Ok(exact) = f.definition.eval(x) else { continue };
        let gap = (lifted_point[f.aux.index()] - exact).abs();
        if !gap.is_finite() {
            continue;
        }
        for v in f.definition.variables() {
            let i = v.index();
            if splittable(i) {
                score[i] += gap * bx[i].width();
            }
        }
    }
    let best = targets
        .iter()
        .copied()
        .filter(|&i| splittable(i) && score[i] > 0.0)
        .max_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)));
    best.or_else(|| {
        targets
            .iter()
            .copied()
            .filter(|&i| splittable(i))
            .max_by(|&a, &b| bx[a].width().total_cmp(&bx[b].width()).then(b.cmp(&a)))
    })
}

fn gap_closed(ub: f64, lb: f64, opts: &NlpOptions) -> bool {
    ub - lb <= opts.abs_gap.max(opts.rel_gap * ub.abs())
}

/// Certified global minimum of a continuous model (discrete variables must be
/// fixed). Every variable in a nonlinear term needs finite bounds.
pub fn solve_global(model: &Model, opts: &NlpOptions) -> Result<NlpSolution> {
    let start = Instant::now();
    let targets: Vec<usize> = nonlinear_targets(model).into_iter().map(|v| v.index()).collect();
    for &i in &targets {
        if !model.variables[i].bounds().is_finite() {
            return Err(Error::UnboundedBox(model.variables[i].name.clone()));
        }
    }
    let n = model.num_vars();
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let consider = |x: &[f64], incumbent: &mut Option<(Vec<f64>, f64)>| {
        if x.len() != n || model.bound_violation(x) > 0.0 || model.max_violation(x) > opts.feastol {
            return;
        }
        let Ok(f) = model.objective_value(x) else { return };
        if incumbent.as_ref().map_or(true, |(_, u)| f < *u) {
            *incumbent = Some((x.to_vec(), f));
        }
    };

    let root = model.bounds();
    let mid = root.midpoint();
    let local = solve_local(model, &root.start_point(), opts)?;
    iterations += local.iterations;
    if local.status == NlpStatus::LocalOptimal {
        consider(&local.point, &mut incumbent);
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bx: root,
        bound: f64::NEG_INFINITY,
        seq,
    });
    // bounds of boxes too small to split further
    let mut stuck = f64::INFINITY;
    let mut nodes = 0;
    let mut limited = false;
    while let Some(node) = heap.pop() {
        let ub = incumbent.as_ref().map_or(f64::INFINITY, |(_, u)| *u);
        if gap_closed(ub, node.bound, opts) {
            continue;
        }
        if nodes >= opts.node_limit || opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            limited = true;
            break;
        }
        nodes += 1;
        let Some(bx) = fbbt(model, &node.bx, FbbtOptions::default()).0.into_box() else {
            continue;
        };
        let mut hints = vec![bx.midpoint()];
        if let Some((x, _)) = &incumbent {
            if bx.contains_point(x, 0.0) {
                hints.push(x.clone());
            }
        }
        let (value, point, avm) = match relax_node(model, &bx, &hints, opts.feastol)? {
            Relaxation::Infeasible => continue,
            Relaxation::Bound { value, point, avm } => (value, point, avm),
        };
        let bound = value.max(node.bound);
        let mut x: Vec<f64> = point[..n].to_vec();
        bx.project(&mut x);
        consider(&x, &mut incumbent);
        let ub = incumbent.as_ref().map_or(f64::INFINITY, |(_, u)| *u);
        if gap_closed(ub, bound, opts) {
            continue;
        }
        let sub = model.with_bounds(&bx);
        let local = solve_local(&sub, &x, &NlpOptions { multistart: 0, ..opts.clone() })?;
        iterations += local.iterations;
        if local.status == NlpStatus::LocalOptimal {
            consider(&local.point, &mut incumbent);
        }
        let ub = incumbent.as_ref().map_or(f64::INFINITY, |(_, u)| *u);
        if gap_closed(ub, bound, opts) {
            continue;
        }
        let Some(j) = branching_variable(model, &bx, &avm, &point, &targets) else {
            stuck = stuck.min(bound);
            continue;
        };
        let iv = bx[j];
        let w = iv.width();
        let split = if point[j] > iv.lo + 0.2 * w && point[j] < iv.hi - 0.2 * w {
            point[j]
        } else {
            iv.mid()
        };
        for half in [Interval::new(iv.lo, split), Interval::new(split, iv.hi)] {
            let mut child = bx.clone();
            child[j] = half;
            seq += 1;
            heap.push(Node {
                bx: child,
                bound,
                seq,
            });
        }
    }
    let open = heap.peek().map_or(f64::INFINITY, |nd| nd.bound);
    let lower = open.min(stuck);
    Ok(match incumbent {
        Some((x, f)) => {
            let bound = lower.min(f);
            let certified = !limited && gap_closed(f, bound, opts);
            NlpSolution {
                status: if certified {
                    NlpStatus::GlobalOptimal
                } else {
                    NlpStatus::LocalOptimal
                },
                point: Point(x),
                objective: f,
                kkt_residual: 0.0,
                bound,
                multipliers: Vec::new(),
                iterations,
            }
        }
        None if !limited && lower == f64::INFINITY => NlpSolution {
            status: NlpStatus::Infeasible,
            point: Point(mid),
            objective: f64::NAN,
            kkt_residual: f64::INFINITY,
            bound: f64::INFINITY,
            multipliers: Vec::new(),
            iterations,
        },
        None => NlpSolution {
            status: NlpStatus::Failed,
            point: Point(mid),
            objective: f64::NAN,
            kkt_residual: f64::INFINITY,
            bound: lower,
            multipliers: Vec::new(),
            iterations,
        },
    })
}
