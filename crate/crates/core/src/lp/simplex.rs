//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Every row `a·x (<=|>=|=) b` gets a slack column `s` with `a·x + s = b`, so
//! the slack bounds carry the row sense. A cold start uses the slack basis,
//! adding one artificial column per violated row for phase 1. Warm starts after
//! bound changes or new rows use the dual simplex.

use super::{LinearProgram, RowSense};
use crate::error::{Error, Result};

const PIV_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const DUAL_FEAS_TOL: f64 = 1e-7;
const REINVERT_EVERY: usize = 64;
const DEGENERATE_STREAK: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Stat {
    Basic,
    Lower,
    Upper,
    /// free nonbasic column held at zero
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basis snapshot for warm starts; rows added later default to their slacks.
#[derive(Clone, Debug)]
pub struct Basis {
    head: Vec<usize>,
    stat: Vec<Stat>,
}

enum Phase {
    Done,
    Unbounded,
}

#[derive(Clone)]
pub struct Simplex {
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    stat: Vec<Stat>,
    head: Vec<usize>,
    binv: Vec<f64>,
    slack: Vec<usize>,
    art: Vec<Option<usize>>,
    is_art: Vec<bool>,
    is_slack: Vec<bool>,
    has_basis: bool,
    since_reinvert: usize,
    pub feastol: f64,
    pub iterations: usize,
    pub max_iterations: usize,
    obj_constant: f64,
}

impl Simplex {
    pub fn new(lp: &LinearProgram) -> Simplex {
        let n = lp.num_cols;
        let m = lp.rows.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, r) in lp.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        let mut s = Simplex {
            n,
            cols,
            cost: lp.objective.clone(),
            lo: lp.bounds.iter().map(|iv| iv.lo).collect(),
            hi: lp.bounds.iter().map(|iv| iv.hi).collect(),
            b: Vec::with_capacity(m),
            x: vec![0.0; n],
            stat: vec![Stat::Lower; n],
            head: Vec::new(),
            binv: Vec::new(),
            slack: Vec::with_capacity(m),
            art: Vec::with_capacity(m),
            is_art: vec![false; n],
            is_slack: vec![false; n],
            has_basis: false,
            since_reinvert: 0,
            feastol: 1e-9,
            iterations: 0,
            max_iterations: 0,
            obj_constant: lp.obj_constant,
        };
        s.cost.resize(n, 0.0);
        for r in &lp.rows {
            s.push_slack(r.sense, r.rhs);
        }
        s.max_iterations = 20_000 + 50 * (n + m);
        s
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    fn push_slack(&mut self, sense: RowSense, rhs: f64) {
        let i = self.b.len();
        let j = self.cols.len();
        self.cols.push(vec![(i, 1.0)]);
        self.cost.push(0.0);
        let (l, h) = match sense {
            RowSense::Le => (0.0, f64::INFINITY),
            RowSense::Ge => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (0.0, 0.0),
        };
        self.lo.push(l);
        self.hi.push(h);
        self.x.push(0.0);
        self.stat.push(Stat::Basic);
        self.is_art.push(false);
        self.is_slack.push(true);
        self.b.push(rhs);
        self.slack.push(j);
        self.art.push(None);
    }

    /// Appends a row; with a basis in place the new slack becomes basic.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) {
        let i = self.b.len();
        for &(j, a) in coeffs {
            if a != 0.0 {
                self.cols[j].push((i, a));
            }
        }
        self.push_slack(sense, rhs);
        let s = *self.slack.last().unwrap();
        if !self.has_basis {
            return;
        }
        // B' = [[B, 0], [a_B, 1]]  =>  B'^-1 = [[B^-1, 0], [-a_B B^-1, 1]]
        let m_old = i;
        let m = i + 1;
        let mut binv = vec![0.0; m * m];
        for r in 0..m_old {
            binv[r * m..r * m + m_old].copy_from_slice(&self.binv[r * m_old..(r + 1) * m_old]);
        }
        let mut last = vec![0.0; m];
        for (r, &h) in self.head.iter().enumerate() {
            let a = self.coef(h, i);
            if a != 0.0 {
                for k in 0..m_old {
                    last[k] -= a * self.binv[r * m_old + k];
                }
            }
        }
        last[i] = 1.0;
        binv[i * m..].copy_from_slice(&last);
        self.binv = binv;
        self.head.push(s);
        self.stat[s] = Stat::Basic;
        let act: f64 = (0..self.cols.len())
            .filter(|&j| j != s)
            .map(|j| self.coef(j, i) * self.x[j])
            .sum();
        self.x[s] = rhs - act;
    }

    fn coef(&self, j: usize, row: usize) -> f64 {
        // rows are appended in increasing order, so the last entry is the newest
        self.cols[j]
            .iter()
            .rev()
            .find(|e| e.0 == row)
            .map_or(0.0, |e| e.1)
    }

    pub fn set_objective(&mut self, c: &[f64]) {
        self.cost[..self.n].copy_from_slice(c);
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    /// Changes structural bounds; nonbasic columns move onto the new bound.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.stat[j] != Stat::Basic {
            self.place_nonbasic(j);
        }
    }

    fn place_nonbasic(&mut self, j: usize) {
        let (l, h) = (self.lo[j], self.hi[j]);
        let st = match self.stat[j] {
            Stat::Upper if h.is_finite() => Stat::Upper,
            _ if l.is_finite() => Stat::Lower,
            _ if h.is_finite() => Stat::Upper,
            _ => Stat::Zero,
        };
        self.stat[j] = st;
        self.x[j] = match st {
            Stat::Lower => l,
            Stat::Upper => h,
            _ => 0.0,
        };
    }

    pub fn basis(&self) -> Option<Basis> {
        self.has_basis.then(|| Basis {
            head: self.head.clone(),
            stat: self.stat.clone(),
        })
    }

    /// Installs a saved basis. Returns `false` (leaving a cold state) if it is
    /// singular for the current rows.
    pub fn set_basis(&mut self, basis: &Basis) -> bool {
        let m = self.num_rows();
        let mut head = basis.head.clone();
        let mut stat = basis.stat.clone();
        // columns created after the snapshot: slacks of new rows (basic) and
        // artificials (nonbasic)
        while stat.len() < self.cols.len() {
            let j = stat.len();
            stat.push(if self.is_slack[j] && !head.contains(&j) && head.len() < m {
                head.push(j);
                Stat::Basic
            } else {
                Stat::Lower
            });
        }
        if head.len() != m {
            self.has_basis = false;
            return false;
        }
        self.head = head;
        self.stat = stat;
        for j in 0..self.cols.len() {
            if self.stat[j] != Stat::Basic {
                self.place_nonbasic(j);
            }
        }
        if self.reinvert() {
            self.has_basis = true;
            true
        } else {
            self.has_basis = false;
            false
        }
    }

    fn reinvert(&mut self) -> bool {
        let m = self.num_rows();
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.head.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&i, &k| a[i * m + c].abs().total_cmp(&a[k * m + c].abs()))
                .unwrap();
            if a[p * m + c].abs() < 1e-11 {
                return false;
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = 1.0 / a[c * m + c];
            for k in 0..m {
                a[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            for i in 0..m {
                if i != c {
                    let f = a[i * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[i * m + k] -= f * a[c * m + k];
                            inv[i * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        // row c of `inv` now belongs to the basic column at position c
        self.binv = inv;
        self.since_reinvert = 0;
        self.compute_basic_values();
        true
    }

    fn compute_basic_values(&mut self) {
        let m = self.num_rows();
        let mut r = self.b.clone();
        for j in 0..self.cols.len() {
            if self.stat[j] != Stat::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * self.x[j];
                }
            }
        }
        for p in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[p * m + k] * r[k]).sum();
            self.x[self.head[p]] = v;
        }
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let m = self.num_rows();
        let mut out = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for (p, o) in out.iter_mut().enumerate() {
                *o += self.binv[p * m + i] * a;
            }
        }
        out
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.num_rows();
        let mut y = vec![0.0; m];
        for (p, &h) in self.head.iter().enumerate() {
            let c = cost[h];
            if c != 0.0 {
                for k in 0..m {
                    y[k] += c * self.binv[p * m + k];
                }
            }
        }
        y
    }

    fn reduced(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.num_rows();
        let piv = alpha[r];
        let row_r: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().map(|v| v / piv).collect();
        for (i, &ai) in alpha.iter().enumerate() {
            if i != r && ai != 0.0 {
                for k in 0..m {
                    self.binv[i * m + k] -= ai * row_r[k];
                }
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&row_r);
        self.since_reinvert += 1;
    }

    fn after_pivot(&mut self) -> Result<()> {
        if self.since_reinvert >= REINVERT_EVERY && !self.reinvert() {
            return Err(Error::IterationLimit("simplex: singular basis"));
        }
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(Error::IterationLimit("simplex"));
        }
        Ok(())
    }

    fn cold_start(&mut self) {
        let m = self.num_rows();
        for j in 0..self.cols.len() {
            if self.is_art[j] {
                self.lo[j] = 0.0;
                self.hi[j] = 0.0;
            }
            self.stat[j] = Stat::Lower;
            self.place_nonbasic(j);
        }
        let mut r = self.b.clone();
        for j in 0..self.cols.len() {
            if !self.is_slack[j] && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * self.x[j];
                }
            }
        }
        self.head = vec![0; m];
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            let s = self.slack[i];
            let v = r[i];
            if v >= self.lo[s] - self.feastol && v <= self.hi[s] + self.feastol {
                self.head[i] = s;
                self.stat[s] = Stat::Basic;
                self.x[s] = v;
                self.binv[i * m + i] = 1.0;
                continue;
            }
            // slack sits at its violated bound; an artificial absorbs the rest
            let sv = if v < self.lo[s] { self.lo[s] } else { self.hi[s] };
            self.stat[s] = if v < self.lo[s] { Stat::Lower } else { Stat::Upper };
            self.x[s] = sv;
            let sign = if v - sv >= 0.0 { 1.0 } else { -1.0 };
            let a = match self.art[i] {
                Some(a) => {
                    self.cols[a] = vec![(i, sign)];
                    a
                }
                None => {
                    let a = self.cols.len();
                    self.cols.push(vec![(i, sign)]);
                    self.cost.push(0.0);
                    self.lo.push(0.0);
                    self.hi.push(0.0);
                    self.x.push(0.0);
                    self.stat.push(Stat::Lower);
                    self.is_art.push(true);
                    self.is_slack.push(false);
                    self.art[i] = Some(a);
                    a
                }
            };
            self.hi[a] = f64::INFINITY;
            self.x[a] = (v - sv).abs();
            self.stat[a] = Stat::Basic;
            self.head[i] = a;
            self.binv[i * m + i] = sign;
        }
        self.has_basis = true;
        self.since_reinvert = 0;
    }

    fn fix_artificials(&mut self) {
        for j in 0..self.cols.len() {
            if self.is_art[j] {
                self.hi[j] = 0.0;
                if self.stat[j] != Stat::Basic {
                    self.x[j] = 0.0;
                }
            }
        }
    }

    /// Pivots zero-valued basic artificials out where some column allows it.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.num_rows();
        for r in 0..m {
            if !self.is_art[self.head[r]] {
                continue;
            }
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.cols.len() {
                if self.stat[j] == Stat::Basic || self.is_art[j] {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(i, v)| rho[i] * v).sum();
                if a.abs() > 1e-7 && best.map_or(true, |(_, b)| a.abs() > b.abs()) {
                    best = Some((j, a));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.column(q);
                let leaving = self.head[r];
                let delta = self.x[leaving] / alpha[r];
                for (p, &ap) in alpha.iter().enumerate() {
                    let h = self.head[p];
                    self.x[h] -= ap * delta;
                }
                self.x[q] += delta;
                self.x[leaving] = 0.0;
                self.stat[leaving] = Stat::Lower;
                self.stat[q] = Stat::Basic;
                self.head[r] = q;
                self.pivot(r, &alpha);
                self.after_pivot()?;
            }
        }
        Ok(())
    }

    fn primal(&mut self, cost: &[f64]) -> Result<Phase> {
        let mut streak = 0usize;
        loop {
            let bland = streak >= DEGENERATE_STREAK;
            let y = self.duals(cost);
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..self.cols.len() {
                let st = self.stat[j];
                if st == Stat::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.reduced(cost, &y, j);
                let dir = match st {
                    Stat::Lower if d < -OPT_TOL => 1.0,
                    Stat::Upper if d > OPT_TOL => -1.0,
                    Stat::Zero if d.abs() > OPT_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir, d));
                    break;
                }
                if enter.map_or(true, |(_, _, bd)| d.abs() > bd.abs()) {
                    enter = Some((j, dir, d));
                }
            }
            let Some((q, dir, _)) = enter else {
                return Ok(Phase::Done);
            };
            let alpha = self.column(q);
            let mut t_best = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut a_best = 0.0f64;
            for (p, &ap) in alpha.iter().enumerate() {
                if ap.abs() <= PIV_TOL {
                    continue;
                }
                let h = self.head[p];
                let rate = -dir * ap;
                let (t, to_upper) = if rate < 0.0 {
                    if !self.lo[h].is_finite() {
                        continue;
                    }
                    (((self.x[h] - self.lo[h]) / -rate).max(0.0), false)
                } else {
                    if !self.hi[h].is_finite() {
                        continue;
                    }
                    (((self.hi[h] - self.x[h]) / rate).max(0.0), true)
                };
                let better = if t < t_best - 1e-12 {
                    true
                } else if t <= t_best + 1e-12 {
                    // ties with a bound flip keep the flip
                    match leave {
                        None => false,
                        Some((lp, _)) if bland => h < self.head[lp],
                        Some(_) => ap.abs() > a_best,
                    }
                } else {
                    false
                };
                if better {
                    t_best = t;
                    leave = Some((p, to_upper));
                    a_best = ap.abs();
                }
            }
            if !t_best.is_finite() {
                return Ok(Phase::Unbounded);
            }
            streak = if t_best <= 1e-12 { streak + 1 } else { 0 };
            for (p, &ap) in alpha.iter().enumerate() {
                let h = self.head[p];
                self.x[h] -= dir * t_best * ap;
            }
            self.x[q] += dir * t_best;
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.stat[q] = Stat::Upper;
                        self.x[q] = self.hi[q];
                    } else {
                        self.stat[q] = Stat::Lower;
                        self.x[q] = self.lo[q];
                    }
                    self.iterations += 1;
                    if self.iterations > self.max_iterations {
                        return Err(Error::IterationLimit("simplex"));
                    }
                }
                Some((r, to_upper)) => {
                    let h = self.head[r];
                    if to_upper {
                        self.stat[h] = Stat::Upper;
                        self.x[h] = self.hi[h];
                    } else {
                        self.stat[h] = Stat::Lower;
                        self.x[h] = self.lo[h];
                    }
                    self.stat[q] = Stat::Basic;
                    self.head[r] = q;
                    self.pivot(r, &alpha);
                    self.after_pivot()?;
                }
            }
        }
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.head
            .iter()
            .map(|&h| (self.lo[h] - self.x[h]).max(self.x[h] - self.hi[h]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Makes the nonbasic columns dual feasible by bound flips; `false` when
    /// that is impossible.
    fn restore_dual_feasibility(&mut self) -> bool {
        let y = self.duals(&self.cost);
        let mut flipped = false;
        for j in 0..self.cols.len() {
            let st = self.stat[j];
            if st == Stat::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced(&self.cost, &y, j);
            match st {
                Stat::Lower if d < -DUAL_FEAS_TOL => {
                    if !self.hi[j].is_finite() {
                        return false;
                    }
                    self.stat[j] = Stat::Upper;
                    self.x[j] = self.hi[j];
                    flipped = true;
                }
                Stat::Upper if d > DUAL_FEAS_TOL => {
                    if !self.lo[j].is_finite() {
                        return false;
                    }
                    self.stat[j] = Stat::Lower;
                    self.x[j] = self.lo[j];
                    flipped = true;
                }
                Stat::Zero if d.abs() > DUAL_FEAS_TOL => return false,
                _ => {}
            }
        }
        if flipped {
            self.compute_basic_values();
        }
        true
    }

    /// Dual simplex from a dual feasible basis. `Ok(false)` means the LP is
    /// primal infeasible.
    fn dual(&mut self) -> Result<bool> {
        let m = self.num_rows();
        let mut streak = 0usize;
        loop {
            let bland = streak >= DEGENERATE_STREAK;
            let mut leave: Option<(usize, f64, bool)> = None;
            for p in 0..m {
                let h = self.head[p];
                let (inf, below) = if self.x[h] < self.lo[h] - self.feastol {
                    (self.lo[h] - self.x[h], true)
                } else if self.x[h] > self.hi[h] + self.feastol {
                    (self.x[h] - self.hi[h], false)
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((lp, li, _)) => {
                        if bland {
                            h < self.head[lp]
                        } else {
                            inf > li
                        }
                    }
                };
                if better {
                    leave = Some((p, inf, below));
                }
            }
            let Some((r, _, to_lower)) = leave else {
                return Ok(true);
            };
            let hr = self.head[r];
            let target = if to_lower { self.lo[hr] } else { self.hi[hr] };
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let y = self.duals(&self.cost);
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..self.cols.len() {
                let st = self.stat[j];
                if st == Stat::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(i, v)| rho[i] * v).sum();
                if a.abs() <= PIV_TOL {
                    continue;
                }
                // x_r moves by -a * dx_j; it must move toward `target`
                let ok = match (st, to_lower) {
                    (Stat::Lower, true) => a < 0.0,
                    (Stat::Upper, true) => a > 0.0,
                    (Stat::Lower, false) => a > 0.0,
                    (Stat::Upper, false) => a < 0.0,
                    (Stat::Zero, _) => true,
                    (Stat::Basic, _) => unreachable!(),
                };
                if !ok {
                    continue;
                }
                let d = self.reduced(&self.cost, &y, j);
                let slack = match st {
                    Stat::Lower => d.max(0.0),
                    Stat::Upper => (-d).max(0.0),
                    _ => d.abs(),
                };
                let ratio = slack / a.abs();
                let better = match enter {
                    None => true,
                    Some((bj, br, ba)) => {
                        if ratio < br - 1e-12 {
                            true
                        } else if ratio <= br + 1e-12 {
                            if bland {
                                j < bj
                            } else {
                                a.abs() > ba
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    enter = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, ratio, _)) = enter else {
                return Ok(false);
            };
            streak = if ratio <= 1e-12 { streak + 1 } else { 0 };
            let alpha = self.column(q);
            let dx = (self.x[hr] - target) / alpha[r];
            for (p, &ap) in alpha.iter().enumerate() {
                let h = self.head[p];
                self.x[h] -= ap * dx;
            }
            self.x[q] += dx;
            self.x[hr] = target;
            self.stat[hr] = if to_lower { Stat::Lower } else { Stat::Upper };
            self.stat[q] = Stat::Basic;
            self.head[r] = q;
            self.pivot(r, &alpha);
            self.after_pivot()?;
        }
    }

    fn solve_cold(&mut self) -> Result<LpStatus> {
        self.cold_start();
        let phase1: Vec<f64> = (0..self.cols.len())
            .map(|j| if self.is_art[j] { 1.0 } else { 0.0 })
            .collect();
        if self.is_art.iter().any(|a| *a) {
            self.primal(&phase1)?;
            let infeas: f64 = (0..self.cols.len())
                .filter(|&j| self.is_art[j])
                .map(|j| self.x[j])
                .sum();
            let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeas > 1e-9 * scale {
                self.fix_artificials();
                return Ok(LpStatus::Infeasible);
            }
            self.fix_artificials();
            self.drive_out_artificials()?;
        }
        let cost = self.cost.clone();
        match self.primal(&cost)? {
            Phase::Done => Ok(LpStatus::Optimal),
            Phase::Unbounded => Ok(LpStatus::Unbounded),
        }
    }

    /// Solves from the current state: warm when a basis is present.
    pub fn solve(&mut self) -> Result<LpStatus> {
        for j in 0..self.cols.len() {
            if self.lo[j] > self.hi[j] {
                return Ok(LpStatus::Infeasible);
            }
        }
        let st = match self.has_basis.then(|| self.solve_warm()) {
            Some(Ok(Some(st))) => st,
            _ => self.solve_cold()?,
        };
        match st {
            LpStatus::Optimal => self.refine(),
            other => Ok(other),
        }
    }

    /// Incremental updates of the basic values drift when columns sit at
    /// large bounds. Refactorizes, recomputes them and re-optimizes until the
    /// basis is optimal with exact values.
    fn refine(&mut self) -> Result<LpStatus> {
        let cost = self.cost.clone();
        for _ in 0..5 {
            if !self.reinvert() {
                break;
            }
            let before = self.iterations;
            if self.max_primal_infeasibility() > self.feastol {
                if !self.restore_dual_feasibility() {
                    break;
                }
                if !self.dual()? {
                    return Ok(LpStatus::Infeasible);
                }
            }
            if let Phase::Unbounded = self.primal(&cost)? {
                return Ok(LpStatus::Unbounded);
            }
            if self.iterations == before {
                break;
            }
        }
        Ok(LpStatus::Optimal)
    }

    fn solve_warm(&mut self) -> Result<Option<LpStatus>> {
        if !self.reinvert() {
            return Ok(None);
        }
        let cost = self.cost.clone();
        if self.max_primal_infeasibility() <= self.feastol {
            return Ok(Some(match self.primal(&cost)? {
                Phase::Done => LpStatus::Optimal,
                Phase::Unbounded => LpStatus::Unbounded,
            }));
        }
        if !self.restore_dual_feasibility() {
            return Ok(None);
        }
        if !self.dual()? {
            return Ok(Some(LpStatus::Infeasible));
        }
        Ok(Some(match self.primal(&cost)? {
            Phase::Done => LpStatus::Optimal,
            Phase::Unbounded => LpStatus::Unbounded,
        }))
    }

    pub fn primal_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    pub fn objective_value(&self) -> f64 {
        self.obj_constant + (0..self.n).map(|j| self.cost[j] * self.x[j]).sum::<f64>()
    }

    pub fn row_duals(&self) -> Vec<f64> {
        self.duals(&self.cost)
    }
}
