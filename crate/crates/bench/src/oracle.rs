//! Enumeration oracles over the generator's structured data, independent of
//! the solver's expression graphs and NLP code.
//!
//! For each binary assignment the continuous problem is solved by a
//! log-barrier Newton method (convex kind) or by enumerating the active sets
//! of the KKT system (nonconvex kind, whose rows are linear and whose
//! objective is quadratic). Assignments whose feasibility margin is within
//! `MARGIN` of zero are reported as ambiguous so the generator can redraw.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::instance::{InstanceData, InstanceKind};

const MARGIN: f64 = 1e-4;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<i64>,
}

/// `k + lin.z + sum quad_i z_i^2 + sum c exp(s z_v) + sum c z_i z_j`
#[derive(Clone, Debug)]
struct Smooth {
    k: f64,
    lin: Vec<f64>,
    quad: Vec<f64>,
    exp: Vec<(usize, f64, f64)>,
    bil: Vec<(usize, usize, f64)>,
}

impl Smooth {
    fn zeros(n: usize) -> Self {
        Smooth {
            k: 0.0,
            lin: vec![0.0; n],
            quad: vec![0.0; n],
            exp: Vec::new(),
            bil: Vec::new(),
        }
    }

    fn value(&self, z: &[f64]) -> f64 {
        let mut v = self.k;
        for i in 0..self.lin.len() {
            v += self.lin[i] * z[i] + self.quad[i] * z[i] * z[i];
        }
        for &(i, c, s) in &self.exp {
            v += c * (s * z[i]).exp();
        }
        for &(i, j, c) in &self.bil {
            v += c * z[i] * z[j];
        }
        v
    }

    fn grad(&self, z: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        for i in 0..self.lin.len() {
            g[i] = self.lin[i] + 2.0 * self.quad[i] * z[i];
        }
        for &(i, c, s) in &self.exp {
            g[i] += c * s * (s * z[i]).exp();
        }
        for &(i, j, c) in &self.bil {
            g[i] += c * z[j];
            g[j] += c * z[i];
        }
        g
    }

    fn hess_add(&self, z: &[f64], w: f64, h: &mut DMatrix<f64>) {
        for i in 0..self.quad.len() {
            h[(i, i)] += w * 2.0 * self.quad[i];
        }
        for &(i, c, s) in &self.exp {
            h[(i, i)] += w * c * s * s * (s * z[i]).exp();
        }
        for &(i, j, c) in &self.bil {
            h[(i, j)] += w * c;
            h[(j, i)] += w * c;
        }
    }

    fn is_linear(&self) -> bool {
        self.exp.is_empty() && self.bil.is_empty() && self.quad.iter().all(|&q| q == 0.0)
    }
}

/// Continuous problem for one assignment, with single-variable linear rows
/// folded into the bounds and fixed variables substituted out.
struct Reduced {
    /// Original index of each free variable.
    free: Vec<usize>,
    /// Values of all continuous variables; free entries are placeholders.
    template: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    f: Smooth,
    rows: Vec<Smooth>,
}

impl Reduced {
    fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.template.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = z[k];
        }
        x
    }
}

fn reduce(d: &InstanceData, y: &[f64]) -> Option<Reduced> {
    let n = d.n_cont();
    let mut lo = d.x_lo.clone();
    let mut hi = d.x_hi.clone();
    let consts: Vec<f64> = d
        .rows
        .iter()
        .map(|r| r.e.iter().zip(y).map(|(e, v)| e * v).sum::<f64>() - r.b)
        .collect();
    let mut folded = vec![false; d.rows.len()];
    let fixed = |lo: &[f64], hi: &[f64], i: usize| hi[i] - lo[i] <= 1e-12;
    loop {
        let mut changed = false;
        for (j, r) in d.rows.iter().enumerate() {
            if folded[j] || !r.is_linear() {
                continue;
            }
            let mut rest = consts[j];
            let mut open = Vec::new();
            for i in 0..n {
                if r.a[i] == 0.0 {
                    continue;
                }
                if fixed(&lo, &hi, i) {
                    rest += r.a[i] * lo[i];
                } else {
                    open.push(i);
                }
            }
            match open[..] {
                [] => {
                    if rest > FEAS_TOL {
                        return None;
                    }
                }
                [i] => {
                    let v = -rest / r.a[i];
                    if r.a[i] > 0.0 {
                        hi[i] = hi[i].min(v);
                    } else {
                        lo[i] = lo[i].max(v);
                    }
                    if lo[i] > hi[i] + FEAS_TOL {
                        return None;
                    }
                    if lo[i] > hi[i] {
                        hi[i] = lo[i];
                    }
                }
                _ => continue,
            }
            folded[j] = true;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed(&lo, &hi, i)).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    let template: Vec<f64> = (0..n).map(|i| if fixed(&lo, &hi, i) { lo[i] } else { f64::NAN }).collect();
    let nf = free.len();

    // objective
    let o = &d.objective;
    let mut f = Smooth::zeros(nf);
    f.k = o.d.iter().zip(y).map(|(c, v)| c * v).sum();
    for i in 0..n {
        let (c, q, t) = (o.c[i], o.q[i], o.t[i]);
        if pos[i] == usize::MAX {
            f.k += c * template[i] + q * (template[i] - t).powi(2);
        } else {
            let k = pos[i];
            f.lin[k] += c - 2.0 * q * t;
            f.quad[k] += q;
            f.k += q * t * t;
        }
    }
    for b in &o.bilinear {
        match (pos[b.i], pos[b.j]) {
            (usize::MAX, usize::MAX) => f.k += b.coef * template[b.i] * template[b.j],
            (usize::MAX, k) => f.lin[k] += b.coef * template[b.i],
            (k, usize::MAX) => f.lin[k] += b.coef * template[b.j],
            (k, l) => f.bil.push((k, l, b.coef)),
        }
    }

    let mut rows = Vec::new();
    for (j, r) in d.rows.iter().enumerate() {
        if folded[j] {
            continue;
        }
        let mut g = Smooth::zeros(nf);
        g.k = consts[j];
        for i in 0..n {
            if pos[i] == usize::MAX {
                g.k += r.a[i] * template[i] + r.quad[i] * template[i] * template[i];
            } else {
                g.lin[pos[i]] += r.a[i];
                g.quad[pos[i]] += r.quad[i];
            }
        }
        for t in &r.exp {
            if pos[t.var] == usize::MAX {
                g.k += t.coef * (t.scale * template[t.var]).exp();
            } else {
                g.exp.push((pos[t.var], t.coef, t.scale));
            }
        }
        if nf == 0 || g.lin.iter().all(|&a| a == 0.0) && g.is_linear() {
            if g.k > FEAS_TOL {
                return None;
            }
            continue;
        }
        rows.push(g);
    }
    Some(Reduced {
        lo: free.iter().map(|&i| lo[i]).collect(),
        hi: free.iter().map(|&i| hi[i]).collect(),
        free,
        template,
        f,
        rows,
    })
}

fn barrier_value(t: f64, f: &Smooth, g: &[Smooth], lo: &[f64], hi: &[f64], z: &[f64]) -> Option<f64> {
    let mut v = t * f.value(z);
    for gj in g {
        let s = -gj.value(z);
        if !(s > 0.0) {
            return None;
        }
        v -= s.ln();
    }
    for i in 0..z.len() {
        if lo[i].is_finite() {
            let s = z[i] - lo[i];
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        if hi[i].is_finite() {
            let s = hi[i] - z[i];
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
    }
    Some(v)
}

fn solve_spd(mut h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1e-300, f64::max);
    let mut delta = 0.0;
    for _ in 0..8 {
        if let Some(c) = h.clone().cholesky() {
            return Some(c.solve(rhs));
        }
        delta = if delta == 0.0 { 1e-14 * scale } else { delta * 100.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += delta;
        }
    }
    None
}

/// Log-barrier method from a strictly feasible `z`. Stops early once
/// `z[v] < threshold` when `stop` is given.
fn barrier(f: &Smooth, g: &[Smooth], lo: &[f64], hi: &[f64], z: &mut [f64], stop: Option<(usize, f64)>) -> Result<()> {
    let n = z.len();
    let m = g.len() + lo.iter().chain(hi).filter(|b| b.is_finite()).count();
    if m == 0 {
        return Err(BenchError::Oracle("unconstrained continuous problem".into()));
    }
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            if stop.is_some_and(|(v, th)| z[v] < th) {
                return Ok(());
            }
            let mut grad = f.grad(z) * t;
            let mut h = DMatrix::zeros(n, n);
            f.hess_add(z, t, &mut h);
            for gj in g {
                let s = -gj.value(z);
                let gg = gj.grad(z);
                grad += &gg / s;
                gj.hess_add(z, 1.0 / s, &mut h);
                h += &gg * gg.transpose() / (s * s);
            }
            for i in 0..n {
                if lo[i].is_finite() {
                    let s = z[i] - lo[i];
                    grad[i] -= 1.0 / s;
                    h[(i, i)] += 1.0 / (s * s);
                }
                if hi[i].is_finite() {
                    let s = hi[i] - z[i];
                    grad[i] += 1.0 / s;
                    h[(i, i)] += 1.0 / (s * s);
                }
            }
            let Some(dz) = solve_spd(h, &(-&grad)) else {
                if (m as f64) / t < 1e-6 {
                    return Ok(());
                }
                return Err(BenchError::Oracle("singular barrier Hessian".into()));
            };
            let slope = grad.dot(&dz);
            if -slope / 2.0 <= 1e-12 {
                break;
            }
            let phi = barrier_value(t, f, g, lo, hi, z).expect("iterate stays interior");
            let mut alpha = 1.0;
            let mut trial = vec![0.0; n];
            let mut moved = false;
            while alpha > 1e-14 {
                for i in 0..n {
                    trial[i] = z[i] + alpha * dz[i];
                }
                if let Some(v) = barrier_value(t, f, g, lo, hi, &trial) {
                    if v <= phi + 0.01 * alpha * slope {
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
            z.copy_from_slice(&trial);
        }
        if (m as f64) / t < 1e-9 {
            return Ok(());
        }
        t *= 8.0;
    }
}

/// Strictly feasible point of the reduced problem, `Ok(None)` when clearly
/// infeasible, or an error when the margin is ambiguous.
fn phase_one(r: &Reduced) -> Result<Option<Vec<f64>>> {
    let nf = r.free.len();
    let mid: Vec<f64> = r.lo.iter().zip(&r.hi).map(|(a, b)| 0.5 * (a + b)).collect();
    if r.rows.is_empty() {
        return Ok(Some(mid));
    }
    let worst = r.rows.iter().map(|g| g.value(&mid)).fold(f64::NEG_INFINITY, f64::max);
    if worst < -MARGIN {
        return Ok(Some(mid));
    }
    // minimize s subject to g_j(x) <= s
    let mut f = Smooth::zeros(nf + 1);
    f.lin[nf] = 1.0;
    let g: Vec<Smooth> = r
        .rows
        .iter()
        .map(|gj| {
            let mut h = gj.clone();
            h.lin.push(-1.0);
            h.quad.push(0.0);
            h
        })
        .collect();
    let mut lo = r.lo.clone();
    let mut hi = r.hi.clone();
    lo.push(f64::NEG_INFINITY);
    hi.push(f64::INFINITY);
    let mut z = mid.clone();
    z.push(worst + 1.0);
    barrier(&f, &g, &lo, &hi, &mut z, Some((nf, -MARGIN)))?;
    let s = z[nf];
    if s < -MARGIN {
        z.truncate(nf);
        Ok(Some(z))
    } else if s > MARGIN {
        Ok(None)
    } else {
        Err(BenchError::Oracle(format!("feasibility margin {s:.2e} too small")))
    }
}

fn convex_fixed(r: &Reduced) -> Result<Option<Vec<f64>>> {
    if r.free.is_empty() {
        return Ok(Some(Vec::new()));
    }
    let Some(mut z) = phase_one(r)? else { return Ok(None) };
    barrier(&r.f, &r.rows, &r.lo, &r.hi, &mut z, None)?;
    Ok(Some(z))
}

fn combinations(m: usize, k: usize, out: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if out.len() == k {
        visit(out);
        return;
    }
    for i in start..m {
        out.push(i);
        combinations(m, k, out, i + 1, visit);
        out.pop();
    }
}

/// Global minimum of a quadratic over a polytope by enumerating the KKT
/// systems of every active set of at most `n` constraints.
fn quadratic_fixed(r: &Reduced) -> Result<Option<Vec<f64>>> {
    let nf = r.free.len();
    if nf == 0 {
        return Ok(Some(Vec::new()));
    }
    if r.rows.iter().any(|g| !g.is_linear()) {
        return Err(BenchError::Oracle("active-set oracle needs linear rows".into()));
    }
    if phase_one(r)?.is_none() {
        return Ok(None);
    }
    let zero = vec![0.0; nf];
    let c = r.f.grad(&zero);
    let mut h = DMatrix::zeros(nf, nf);
    r.f.hess_add(&zero, 1.0, &mut h);
    // constraints a.z <= beta: rows, then lower bounds, then upper bounds
    let mut a: Vec<(DVector<f64>, f64, Option<usize>)> = Vec::new();
    for g in &r.rows {
        a.push((DVector::from_vec(g.lin.clone()), -g.k, None));
    }
    for i in 0..nf {
        let mut e = DVector::zeros(nf);
        e[i] = -1.0;
        a.push((e, -r.lo[i], Some(i)));
    }
    for i in 0..nf {
        let mut e = DVector::zeros(nf);
        e[i] = 1.0;
        a.push((e, r.hi[i], Some(i)));
    }
    let feasible = |z: &DVector<f64>| a.iter().all(|(ai, b, _)| ai.dot(z) - b <= FEAS_TOL * (1.0 + b.abs()));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..=nf.min(a.len()) {
        combinations(a.len(), k, &mut Vec::new(), 0, &mut |set: &[usize]| {
            let mut vars: Vec<usize> = set.iter().filter_map(|&j| a[j].2).collect();
            vars.sort_unstable();
            if vars.windows(2).any(|w| w[0] == w[1]) {
                return;
            }
            let dim = nf + k;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            kkt.view_mut((0, 0), (nf, nf)).copy_from(&h);
            for i in 0..nf {
                rhs[i] = -c[i];
            }
            for (p, &j) in set.iter().enumerate() {
                for i in 0..nf {
                    kkt[(nf + p, i)] = a[j].0[i];
                    kkt[(i, nf + p)] = a[j].0[i];
                }
                rhs[nf + p] = a[j].1;
            }
            let Some(sol) = kkt.clone().lu().solve(&rhs) else { return };
            let resid = (&kkt * &sol - &rhs).amax();
            if !sol.iter().all(|v| v.is_finite()) || resid > 1e-9 * (1.0 + rhs.amax()) {
                return;
            }
            let z = sol.rows(0, nf).into_owned();
            if !feasible(&z) {
                return;
            }
            let v = r.f.value(z.as_slice());
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, z.as_slice().to_vec()));
            }
        });
    }
    match best {
        Some((_, z)) => Ok(Some(z)),
        None => Err(BenchError::Oracle("no KKT point in a feasible polytope".into())),
    }
}

/// Optimum of the continuous problem for binary values `y`, as the objective
/// and the full continuous point. `Ok(None)` when `y` is infeasible.
pub fn fixed_oracle(d: &InstanceData, y: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
    let Some(r) = reduce(d, y) else { return Ok(None) };
    let z = match d.kind {
        InstanceKind::Convex => convex_fixed(&r)?,
        InstanceKind::Nonconvex => quadratic_fixed(&r)?,
    };
    Ok(z.map(|z| {
        let x = r.expand(&z);
        (d.objective_value(&x, y), x)
    }))
}

/// Enumerates every binary assignment. `Ok(None)` when none is feasible.
pub fn oracle(d: &InstanceData) -> Result<Option<OracleValue>> {
    let m = d.n_bin;
    let mut best: Option<OracleValue> = None;
    for mask in 0u32..(1 << m) {
        let y: Vec<f64> = (0..m).map(|j| f64::from((mask >> j) & 1)).collect();
        if let Some((v, x)) = fixed_oracle(d, &y)? {
            if best.as_ref().map_or(true, |b| v < b.value) {
                best = Some(OracleValue {
                    value: v,
                    x,
                    y: y.iter().map(|&v| v as i64).collect(),
                });
            }
        }
    }
    Ok(best)
}
