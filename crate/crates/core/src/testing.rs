//! Random boxes, expressions and points for property checks.
//!
//! Expressions are built against a box so that every log, sqrt and
//! reciprocal argument stays positive over it and exp arguments stay small.

use rand::Rng;

use crate::expr::Expr;
use crate::interval::{Interval, VarBox};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Row, RowSense};
use crate::model::VarId;

pub fn random_box<R: Rng>(rng: &mut R, n: usize) -> VarBox {
    VarBox::new(
        (0..n)
            .map(|_| {
                let lo = rng.gen_range(-3.0..2.0);
                let w = rng.gen_range(0.1..3.0);
                Interval::new(lo, lo + w)
            })
            .collect(),
    )
}

pub fn random_point<R: Rng>(rng: &mut R, bx: &VarBox) -> Vec<f64> {
    bx.iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect()
}

/// Random sub-box of `bx` containing `point`.
pub fn random_subbox<R: Rng>(rng: &mut R, bx: &VarBox, point: &[f64]) -> VarBox {
    VarBox::new(
        bx.iter()
            .zip(point)
            .map(|(iv, &p)| {
                let lo = rng.gen_range(iv.lo..=p);
                let hi = rng.gen_range(p..=iv.hi);
                Interval::new(lo, hi)
            })
            .collect(),
    )
}

fn enclosure(e: &Expr, bx: &VarBox) -> Interval {
    e.interval_eval(bx).expect("generated expressions are defined on their box")
}

/// Moves `e` so its enclosure starts at `margin`.
fn shift_positive(e: Expr, bx: &VarBox, margin: f64) -> Expr {
    let lo = enclosure(&e, bx).lo;
    e + (margin - lo)
}

pub fn random_expr<R: Rng>(rng: &mut R, bx: &VarBox, depth: usize) -> Expr {
    let n = bx.len();
    if depth == 0 || rng.gen_bool(0.15) {
        return if rng.gen_bool(0.85) {
            Expr::var(VarId(rng.gen_range(0..n) as u32))
        } else {
            Expr::constant(rng.gen_range(-2.0..2.0))
        };
    }
    let sub = |rng: &mut R| random_expr(rng, bx, depth - 1);
    match rng.gen_range(0..9) {
        0 => {
            let a = sub(rng);
            let b = sub(rng);
            let (wa, wb) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            Expr::sum_of(vec![(a, wa), (b, wb)], rng.gen_range(-1.0..1.0))
        }
        1 | 2 => sub(rng) * sub(rng),
        3 => sub(rng).powi(rng.gen_range(2..=3)),
        4 => {
            let a = sub(rng);
            let mag = enclosure(&a, bx).mag();
            if mag > 3.0 {
                (a * (3.0 / mag)).exp()
            } else {
                a.exp()
            }
        }
        5 => shift_positive(sub(rng), bx, 0.5).ln(),
        6 => shift_positive(sub(rng), bx, 0.01).sqrt(),
        7 => shift_positive(sub(rng), bx, 0.5).recip(),
        _ => -sub(rng),
    }
}

/// All constraints as `a·x <= b`, including the box.
fn halfspaces(lp: &LinearProgram) -> Vec<(Vec<f64>, f64)> {
    let n = lp.num_cols;
    let mut out = Vec::new();
    for r in &lp.rows {
        let sign = if r.sense == RowSense::Ge { -1.0 } else { 1.0 };
        let mut a = vec![0.0; n];
        for &(j, v) in &r.coeffs {
            a[j] += sign * v;
        }
        out.push((a, sign * r.rhs));
    }
    for (j, iv) in lp.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        out.push((e.clone(), iv.hi));
        e[j] = -1.0;
        out.push((e, -iv.lo));
    }
    out
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &k| a[i][c].abs().total_cmp(&a[k][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(p, c);
        b.swap(p, c);
        for i in 0..n {
            if i != c {
                let f = a[i][c] / a[c][c];
                for k in 0..n {
                    a[i][k] -= f * a[c][k];
                }
                b[i] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if m < k {
        return vec![];
    }
    let mut out = subsets(m - 1, k);
    for mut s in subsets(m - 1, k - 1) {
        s.push(m - 1);
        out.push(s);
    }
    out
}

/// LP optimum over the feasible vertices, by enumerating basic solutions.
/// `None` when no vertex is feasible.
pub fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let hs = halfspaces(lp);
    let n = lp.num_cols;
    let mut best: Option<f64> = None;
    for s in subsets(hs.len(), n) {
        let a = s.iter().map(|&i| hs[i].0.clone()).collect();
        let b = s.iter().map(|&i| hs[i].1).collect();
        let Some(x) = solve_square(a, b) else { continue };
        let ok = hs
            .iter()
            .all(|(a, b)| a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9);
        if ok {
            let v = lp.objective_value(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

pub fn random_lp<R: Rng>(rng: &mut R, n: usize, m: usize) -> LinearProgram {
    let bounds = VarBox::new(
        (0..n)
            .map(|_| {
                let lo = rng.gen_range(-5..=0) as f64;
                Interval::new(lo, lo + rng.gen_range(1..=8) as f64)
            })
            .collect(),
    );
    let mut lp = LinearProgram::new(bounds);
    lp.objective = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    for _ in 0..m {
        let coeffs = (0..n).map(|j| (j, rng.gen_range(-4..=4) as f64)).collect();
        let rhs = rng.gen_range(-6..=10) as f64;
        lp.add_row(if rng.gen_bool(0.8) {
            Row::le(coeffs, rhs)
        } else {
            Row::ge(coeffs, rhs)
        });
    }
    lp
}

/// MILP optimum by fixing every integer point of the box and solving the LP.
pub fn milp_brute_force(lp: &LinearProgram, ints: &[usize]) -> Option<f64> {
    let ranges: Vec<(i64, i64)> = ints
        .iter()
        .map(|&j| (lp.bounds[j].lo.ceil() as i64, lp.bounds[j].hi.floor() as i64))
        .collect();
    let mut best: Option<f64> = None;
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        let mut fixed = lp.clone();
        for (k, &j) in ints.iter().enumerate() {
            fixed.bounds[j] = Interval::point(cur[k] as f64);
        }
        let sol = solve_lp(&fixed, 1e-9).expect("bounded LP");
        if sol.status == LpStatus::Optimal {
            best = Some(best.map_or(sol.objective, |b: f64| b.min(sol.objective)));
        }
        let mut k = 0;
        loop {
            if k == cur.len() {
                return best;
            }
            if cur[k] < ranges[k].1 {
                cur[k] += 1;
                break;
            }
            cur[k] = ranges[k].0;
            k += 1;
        }
    }
}
