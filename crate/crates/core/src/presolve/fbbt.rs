//! Forward-backward interval propagation over constraint expressions.

use std::io::Write;

use serde::Serialize;

use crate::expr::{Expr, Node};
use crate::interval::{Interval, VarBox};
use crate::model::Model;

/// Outcome of a bound-tightening step.
#[derive(Clone, Debug, PartialEq)]
pub enum Tightening {
    Tightened(VarBox),
    ProvenInfeasible,
}

impl Tightening {
    pub fn into_box(self) -> Option<VarBox> {
        match self {
            Tightening::Tightened(b) => Some(b),
            Tightening::ProvenInfeasible => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FbbtOptions {
    pub max_passes: usize,
    pub min_reduction: f64,
}

impl Default for FbbtOptions {
    fn default() -> Self {
        FbbtOptions {
            max_passes: 10,
            min_reduction: 1e-3,
        }
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    pass: usize,
    changes: Vec<TraceChange<'a>>,
}

#[derive(Serialize)]
struct TraceChange<'a> {
    var: &'a str,
    old: [f64; 2],
    new: [f64; 2],
}

/// Relative shrinkage of `old` to `new`, in `[0, 1]`.
fn reduction(old: &Interval, new: &Interval) -> f64 {
    let w = old.width();
    if w.is_finite() {
        return if w > 0.0 { (w - new.width()) / w } else { 0.0 };
    }
    let became_finite =
        (old.lo.is_infinite() && new.lo.is_finite()) || (old.hi.is_infinite() && new.hi.is_finite());
    if became_finite {
        return 1.0;
    }
    let moved = |a: f64, b: f64| {
        if a.is_finite() {
            (a - b).abs() / (1.0 + a.abs())
        } else {
            0.0
        }
    };
    moved(old.lo, new.lo).max(moved(old.hi, new.hi)).min(1.0)
}

/// Narrows `bx` with `body <= 0`. Returns `false` when the row is infeasible
/// over the box.
pub(crate) fn propagate_row(body: &Expr, bx: &mut VarBox, scratch: &mut Vec<Interval>) -> bool {
    if body.interval_eval_into(bx, scratch).is_err() {
        return false;
    }
    let nodes = body.nodes();
    let root = nodes.len() - 1;
    match scratch[root].intersect(&Interval::new(f64::NEG_INFINITY, 0.0)) {
        Some(iv) => scratch[root] = iv,
        None => return false,
    }
    for id in (0..nodes.len()).rev() {
        let p = scratch[id];
        let narrowed: Vec<(u32, Option<Interval>)> = match &nodes[id] {
            Node::Const(_) => continue,
            Node::Var(v) => {
                match bx[*v].intersect(&p) {
                    Some(iv) => bx[*v] = iv,
                    None => return false,
                }
                continue;
            }
            Node::Sum { terms, constant } => {
                let k = terms.len();
                let parts: Vec<Interval> = terms.iter().map(|(c, w)| scratch[*c as usize].scale(*w)).collect();
                let mut prefix = vec![Interval::point(0.0); k + 1];
                for i in 0..k {
                    prefix[i + 1] = prefix[i].add(&parts[i]);
                }
                let mut suffix = vec![Interval::point(0.0); k + 1];
                for i in (0..k).rev() {
                    suffix[i] = suffix[i + 1].add(&parts[i]);
                }
                terms
                    .iter()
                    .enumerate()
                    .map(|(i, (c, w))| {
                        let rest = prefix[i].add(&suffix[i + 1]).add_scalar(*constant);
                        let target = p.sub(&rest);
                        let child = scratch[*c as usize];
                        let inv = if *w == 0.0 {
                            Some(child)
                        } else {
                            target.div_relation(&Interval::point(*w), &child)
                        };
                        (*c, inv)
                    })
                    .collect()
            }
            Node::Product(a, b) if a == b => {
                let ca = scratch[*a as usize];
                vec![(*a, p.powi_inverse(2, &ca))]
            }
            Node::Product(a, b) => {
                let (ca, cb) = (scratch[*a as usize], scratch[*b as usize]);
                let na = p.div_relation(&cb, &ca);
                let nb = na.and_then(|na| p.div_relation(&na, &cb));
                vec![(*a, na), (*b, nb)]
            }
            Node::Power(a, n) => {
                let ca = scratch[*a as usize];
                vec![(*a, p.powi_inverse(*n, &ca))]
            }
            Node::Exp(a) => {
                let ca = scratch[*a as usize];
                let inv = p.ln().and_then(|l| l.intersect(&ca));
                vec![(*a, inv)]
            }
            Node::Log(a) => {
                let ca = scratch[*a as usize];
                let inv = p.exp().intersect(&ca);
                vec![(*a, inv)]
            }
            Node::Sqrt(a) => {
                let ca = scratch[*a as usize];
                let inv = p
                    .intersect(&Interval::new(0.0, f64::INFINITY))
                    .and_then(|q| q.powi(2).intersect(&ca));
                vec![(*a, inv)]
            }
            Node::Negate(a) => {
                let ca = scratch[*a as usize];
                vec![(*a, p.neg().intersect(&ca))]
            }
            Node::Reciprocal(a) => {
                let ca = scratch[*a as usize];
                vec![(*a, Interval::point(1.0).div_relation(&p, &ca))]
            }
        };
        for (c, iv) in narrowed {
            match iv {
                Some(iv) => scratch[c as usize] = iv,
                None => return false,
            }
        }
    }
    true
}

/// Rounds discrete variables inward; `false` if one becomes empty.
pub(crate) fn round_integers(model: &Model, bx: &mut VarBox) -> bool {
    for v in model.discrete_vars() {
        match bx[v].round_inward(1e-9) {
            Some(iv) => bx[v] = iv,
            None => return false,
        }
    }
    true
}

/// Propagates every constraint until no variable shrinks by more than
/// `min_reduction` (relative width) in a pass, or `max_passes` is reached.
pub fn fbbt(model: &Model, bx: &VarBox, opts: FbbtOptions) -> (Tightening, usize) {
    fbbt_traced(model, bx, opts, None)
}

pub fn fbbt_traced(
    model: &Model,
    bx: &VarBox,
    opts: FbbtOptions,
    mut trace: Option<&mut dyn Write>,
) -> (Tightening, usize) {
    let n = model.num_vars();
    let mut cur = bx.clone();
    if !round_integers(model, &mut cur) {
        return (Tightening::ProvenInfeasible, 0);
    }
    let mut scratch = Vec::new();
    for pass in 1..=opts.max_passes {
        let before = cur.clone();
        for c in &model.constraints {
            if !propagate_row(&c.body, &mut cur, &mut scratch) {
                return (Tightening::ProvenInfeasible, pass);
            }
        }
        if !round_integers(model, &mut cur) {
            return (Tightening::ProvenInfeasible, pass);
        }
        if let Some(w) = trace.as_mut() {
            let changes = (0..n)
                .filter(|&i| before[i] != cur[i])
                .map(|i| TraceChange {
                    var: &model.variables[i].name,
                    old: [before[i].lo, before[i].hi],
                    new: [cur[i].lo, cur[i].hi],
                })
                .collect();
            let line = TraceLine { pass, changes };
            let _ = writeln!(w, "{}", serde_json::to_string(&line).expect("trace serializes"));
        }
        let best = (0..n).map(|i| reduction(&before[i], &cur[i])).fold(0.0, f64::max);
        if best <= opts.min_reduction {
            return (Tightening::Tightened(cur), pass);
        }
    }
    (Tightening::Tightened(cur), opts.max_passes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    fn run(m: &Model) -> Tightening {
        fbbt(m, &m.bounds(), FbbtOptions::default()).0
    }

    #[test]
    fn linear_backward_pass() {
        let mut b = ModelBuilder::new("lin");
        let x = b.continuous("x", 0.0, 10.0);
        let y = b.continuous("y", 2.0, 10.0);
        b.minimize(Expr::var(x)).leq(Expr::var(x) + Expr::var(y), 5.0);
        let m = b.build().unwrap();
        let bx = run(&m).into_box().unwrap();
        assert_eq!(bx[x], Interval::new(0.0, 3.0));
        assert_eq!(bx[y], Interval::new(2.0, 5.0));
    }

    #[test]
    fn square_inverse() {
        let mut b = ModelBuilder::new("sq");
        let x = b.continuous("x", -10.0, 10.0);
        b.minimize(Expr::var(x)).leq(Expr::var(x).powi(2) - 4.0, 0.0);
        let m = b.build().unwrap();
        assert_eq!(run(&m).into_box().unwrap()[x], Interval::new(-2.0, 2.0));
    }

    #[test]
    fn contradictory_bounds() {
        let mut b = ModelBuilder::new("inf");
        let x = b.continuous("x", -10.0, 10.0);
        b.minimize(Expr::var(x)).geq(Expr::var(x), 3.0).leq(Expr::var(x), 1.0);
        let m = b.build().unwrap();
        assert_eq!(run(&m), Tightening::ProvenInfeasible);
    }

    #[test]
    fn chained_equality() {
        let mut b = ModelBuilder::new("chain");
        let x = b.continuous("x", -10.0, 10.0);
        let y = b.continuous("y", -10.0, 10.0);
        b.minimize(Expr::var(x))
            .eq(Expr::var(x) - Expr::var(y), 0.0)
            .leq(Expr::var(y), 2.0)
            .geq(Expr::var(x), 0.0);
        let m = b.build().unwrap();
        let two = FbbtOptions {
            max_passes: 2,
            ..Default::default()
        };
        let bx = fbbt(&m, &m.bounds(), two).0.into_box().unwrap();
        assert_eq!(bx[x], Interval::new(0.0, 2.0));
        assert_eq!(bx[y], Interval::new(0.0, 2.0));
        // the third pass only confirms the fixpoint
        let (t, passes) = fbbt(&m, &m.bounds(), FbbtOptions::default());
        assert_eq!(t.into_box().unwrap(), bx);
        assert_eq!(passes, 3);
    }

    #[test]
    fn integers_round_inward() {
        let mut b = ModelBuilder::new("int");
        let k = b.integer("k", 0.0, 10.0);
        b.minimize(Expr::var(k)).leq(Expr::var(k) * 2.0, 7.0);
        let m = b.build().unwrap();
        assert_eq!(run(&m).into_box().unwrap()[k], Interval::new(0.0, 3.0));
    }

    #[test]
    fn trace_has_one_line_per_pass() {
        let mut b = ModelBuilder::new("lin");
        let x = b.continuous("x", 0.0, 10.0);
        let y = b.continuous("y", 2.0, 10.0);
        b.minimize(Expr::var(x)).leq(Expr::var(x) + Expr::var(y), 5.0);
        let m = b.build().unwrap();
        let mut out = Vec::new();
        let (_, passes) = fbbt_traced(&m, &m.bounds(), FbbtOptions::default(), Some(&mut out));
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), passes);
        assert!(text.lines().next().unwrap().contains("\"var\":\"x\""));
    }
}
