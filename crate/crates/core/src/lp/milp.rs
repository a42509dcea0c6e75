//! LP-based branch and bound with a lazy-cut callback at integral nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::{Duration, Instant};

use super::simplex::{Basis, LpStatus, Simplex};
use super::{LinearProgram, Row};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    RejectAndCut,
}

#[derive(Clone, Debug)]
pub struct CallbackResult {
    pub verdict: Verdict,
    /// Rows added to every node from now on.
    pub cuts: Vec<Row>,
    /// A feasible solution found by the caller, with its objective.
    pub incumbent: Option<(Vec<f64>, f64)>,
}

impl CallbackResult {
    pub fn accept() -> Self {
        CallbackResult {
            verdict: Verdict::Accept,
            cuts: Vec::new(),
            incumbent: None,
        }
    }

    pub fn reject(cuts: Vec<Row>) -> Self {
        CallbackResult {
            verdict: Verdict::RejectAndCut,
            cuts,
            incumbent: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NodeContext {
    pub node: usize,
    pub depth: usize,
    pub lp_objective: f64,
    pub global_bound: f64,
    pub incumbent: f64,
}

pub trait MilpCallback {
    /// Called with every LP solution that is integral within `inttol`.
    fn integer_solution(&mut self, ctx: &NodeContext, x: &[f64]) -> CallbackResult;
}

impl<F: FnMut(&NodeContext, &[f64]) -> CallbackResult> MilpCallback for F {
    fn integer_solution(&mut self, ctx: &NodeContext, x: &[f64]) -> CallbackResult {
        self(ctx, x)
    }
}

pub struct MilpOptions {
    pub inttol: f64,
    pub feastol: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    /// Only solutions strictly better than this are of interest.
    pub cutoff: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    pub node_log: Option<Box<dyn Write>>,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            inttol: 1e-6,
            feastol: 1e-7,
            abs_gap: 1e-9,
            rel_gap: 1e-9,
            cutoff: f64::INFINITY,
            time_limit: None,
            node_limit: 1_000_000,
            node_log: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
    NodeLimit,
}

#[derive(Clone, Debug)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub point: Option<Vec<f64>>,
    /// Incumbent objective (`inf` without one).
    pub objective: f64,
    /// Proven lower bound on every solution below the cutoff.
    pub best_bound: f64,
    pub nodes: usize,
    pub callback_calls: usize,
    pub lp_iterations: usize,
    /// Global bound after each processed node.
    pub bound_trace: Vec<f64>,
    /// Rows injected by the callback, in order.
    pub added_rows: Vec<Row>,
}

struct Node {
    bound: f64,
    seq: usize,
    depth: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.seq.cmp(&self.seq))
    }
}

fn fractionality(v: f64) -> f64 {
    let f = v - v.floor();
    f.min(1.0 - f)
}

struct Engine<'a> {
    opts: MilpOptions,
    ints: &'a [usize],
    s: Simplex,
    heap: BinaryHeap<Node>,
    seq: usize,
    incumbent: Option<Vec<f64>>,
    inc_obj: f64,
    pruned_min: f64,
    reported: f64,
    res: MilpResult,
}

impl Engine<'_> {
    fn threshold(&self) -> f64 {
        let gap = self.opts.abs_gap.max(self.opts.rel_gap * self.inc_obj.abs());
        (self.inc_obj - if self.inc_obj.is_finite() { gap } else { 0.0 }).min(self.opts.cutoff)
    }

    fn prune(&mut self, bound: f64) {
        self.pruned_min = self.pruned_min.min(bound);
    }

    fn global_bound(&self) -> f64 {
        let open = self.heap.peek().map_or(f64::INFINITY, |n| n.bound);
        open.min(self.pruned_min).min(self.inc_obj)
    }

    fn push(&mut self, bound: f64, depth: usize, lo: Vec<f64>, hi: Vec<f64>) {
        self.seq += 1;
        let basis = self.s.basis();
        self.heap.push(Node {
            bound,
            seq: self.seq,
            depth,
            lo,
            hi,
            basis,
        });
    }

    fn offer(&mut self, x: Vec<f64>, obj: f64) {
        if obj < self.inc_obj {
            self.inc_obj = obj;
            self.incumbent = Some(x);
        }
    }

    fn log(&mut self, id: usize, depth: usize, bound: f64, action: &str) {
        let inc = self.inc_obj;
        if let Some(w) = self.opts.node_log.as_mut() {
            let _ = writeln!(w, "{id},{depth},{bound},{inc},{action}");
        }
    }

    /// Processes one node; returns `Err` only for LP iteration failures.
    fn process(&mut self, node: Node, id: usize, cb: &mut Option<&mut dyn MilpCallback>) -> Result<bool> {
        for (k, &j) in self.ints.iter().enumerate() {
            self.s.set_bounds(j, node.lo[k], node.hi[k]);
        }
        if let Some(b) = &node.basis {
            self.s.set_basis(b);
        }
        for _round in 0..10_000 {
            let st = self.s.solve()?;
            self.res.lp_iterations = self.s.iterations;
            match st {
                LpStatus::Infeasible => {
                    self.log(id, node.depth, node.bound, "infeasible");
                    return Ok(true);
                }
                LpStatus::Unbounded => {
                    self.log(id, node.depth, f64::NEG_INFINITY, "unbounded");
                    return Ok(false);
                }
                LpStatus::Optimal => {}
            }
            let obj = self.s.objective_value();
            let bound = node.bound.max(obj);
            if bound >= self.threshold() {
                self.prune(bound);
                self.log(id, node.depth, bound, "pruned");
                return Ok(true);
            }
            let mut x = self.s.primal_values();
            let branch = self
                .ints
                .iter()
                .enumerate()
                .filter(|(_, &j)| fractionality(x[j]) > self.opts.inttol)
                .max_by(|a, b| {
                    fractionality(x[*a.1])
                        .total_cmp(&fractionality(x[*b.1]))
                        .then(b.0.cmp(&a.0))
                })
                .map(|(k, _)| k);
            if let Some(k) = branch {
                let v = x[self.ints[k]];
                let (mut dlo, mut dhi) = (node.lo.clone(), node.hi.clone());
                dhi[k] = v.floor();
                let (ulo, uhi) = {
                    let mut l = node.lo.clone();
                    l[k] = v.ceil();
                    (l, node.hi.clone())
                };
                self.push(bound, node.depth + 1, std::mem::take(&mut dlo), std::mem::take(&mut dhi));
                self.push(bound, node.depth + 1, ulo, uhi);
                self.log(id, node.depth, bound, "branched");
                return Ok(true);
            }
            for &j in self.ints {
                x[j] = x[j].round();
            }
            let Some(cb) = cb.as_mut() else {
                self.offer(x, obj);
                self.log(id, node.depth, bound, "incumbent");
                return Ok(true);
            };
            self.res.callback_calls += 1;
            let ctx = NodeContext {
                node: id,
                depth: node.depth,
                lp_objective: obj,
                global_bound: self.reported,
                incumbent: self.inc_obj,
            };
            let out = cb.integer_solution(&ctx, &x);
            if let Some((p, v)) = out.incumbent {
                self.offer(p, v);
            }
            match out.verdict {
                Verdict::Accept => {
                    self.offer(x, obj);
                    self.log(id, node.depth, bound, "accepted");
                    return Ok(true);
                }
                Verdict::RejectAndCut => {
                    let raw = self.s.primal_values();
                    let violated = out.cuts.iter().any(|r| r.violation(&raw) > self.opts.feastol);
                    for r in out.cuts {
                        self.s.add_row(&r.coeffs, r.sense, r.rhs);
                        self.res.added_rows.push(r);
                    }
                    if violated {
                        continue;
                    }
                    // nothing separates this point: split on an unfixed integer
                    let free = (0..self.ints.len()).find(|&k| node.lo[k] < node.hi[k]);
                    match free {
                        Some(k) => {
                            let v = x[self.ints[k]];
                            let (alo, mut ahi) = (node.lo.clone(), node.hi.clone());
                            let (mut blo, bhi) = (node.lo.clone(), node.hi.clone());
                            if v < node.hi[k] {
                                ahi[k] = v;
                                blo[k] = v + 1.0;
                            } else {
                                ahi[k] = v - 1.0;
                                blo[k] = v;
                            }
                            self.push(bound, node.depth + 1, alo, ahi);
                            self.push(bound, node.depth + 1, blo, bhi);
                            self.log(id, node.depth, bound, "rejected-split");
                        }
                        None => self.log(id, node.depth, bound, "rejected"),
                    }
                    return Ok(true);
                }
            }
        }
        self.log(id, node.depth, node.bound, "round-limit");
        Ok(true)
    }
}

/// Minimizes `lp` with the columns in `ints` integral.
pub fn solve_milp(
    lp: &LinearProgram,
    ints: &[usize],
    mut callback: Option<&mut dyn MilpCallback>,
    mut opts: MilpOptions,
) -> Result<MilpResult> {
    let start = Instant::now();
    if let Some(w) = opts.node_log.as_mut() {
        let _ = writeln!(w, "node,depth,lp_bound,incumbent,action");
    }
    let mut s = Simplex::new(lp);
    s.feastol = opts.feastol.min(1e-9);
    let lo: Vec<f64> = ints.iter().map(|&j| lp.bounds[j].lo.ceil()).collect();
    let hi: Vec<f64> = ints.iter().map(|&j| lp.bounds[j].hi.floor()).collect();
    let mut e = Engine {
        opts,
        ints,
        s,
        heap: BinaryHeap::new(),
        seq: 0,
        incumbent: None,
        inc_obj: f64::INFINITY,
        pruned_min: f64::INFINITY,
        reported: f64::NEG_INFINITY,
        res: MilpResult {
            status: MilpStatus::Optimal,
            point: None,
            objective: f64::INFINITY,
            best_bound: f64::NEG_INFINITY,
            nodes: 0,
            callback_calls: 0,
            lp_iterations: 0,
            bound_trace: Vec::new(),
            added_rows: Vec::new(),
        },
    };
    e.heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq: 0,
        depth: 0,
        lo,
        hi,
        basis: None,
    });
    let mut status = MilpStatus::Optimal;
    while let Some(node) = e.heap.pop() {
        if e.opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            e.heap.push(node);
            status = MilpStatus::TimeLimit;
            break;
        }
        if e.res.nodes >= e.opts.node_limit {
            e.heap.push(node);
            status = MilpStatus::NodeLimit;
            break;
        }
        let id = e.res.nodes;
        e.res.nodes += 1;
        if node.bound >= e.threshold() {
            e.prune(node.bound);
            e.log(id, node.depth, node.bound, "pruned");
        } else if !e.process(node, id, &mut callback)? {
            status = MilpStatus::Unbounded;
            break;
        }
        e.reported = e.reported.max(e.global_bound());
        e.res.bound_trace.push(e.reported);
    }
    let mut res = e.res;
    res.objective = e.inc_obj;
    res.point = e.incumbent;
    res.best_bound = match status {
        MilpStatus::Unbounded => f64::NEG_INFINITY,
        _ => e.reported.max({
            let open = e.heap.peek().map_or(f64::INFINITY, |n| n.bound);
            open.min(e.pruned_min).min(e.inc_obj)
        }),
    };
    res.status = match status {
        MilpStatus::Optimal if res.point.is_none() => MilpStatus::Infeasible,
        s => s,
    };
    if let Some(w) = e.opts.node_log.as_mut() {
        let _ = w.flush();
    }
    Ok(res)
}
