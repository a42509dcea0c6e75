//! Random test instances with a known algebraic structure.
//!
//! Variables are continuous `x_0..x_n` in `[lo, hi]` followed by binaries
//! `y_0..y_m`. The objective is
//! `c.x + d.y + sum q_i (x_i - t_i)^2 + sum b_ij x_i x_j` and every row is
//! `a.x + e.y + sum alpha_i x_i^2 + sum beta exp(gamma x_i) <= b`.
//! Convex instances have no bilinear terms and nonnegative `alpha`, `beta`;
//! nonconvex instances have bilinear objective terms and linear rows only.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use minlp_core::{json, Expr, Model, ModelBuilder, VarId};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{io_err, BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Convex,
    Nonconvex,
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceKind::Convex => "convex",
            InstanceKind::Nonconvex => "nonconvex",
        })
    }
}

impl FromStr for InstanceKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(InstanceKind::Convex),
            "nonconvex" => Ok(InstanceKind::Nonconvex),
            _ => Err(BenchError::Config(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub var: usize,
    pub coef: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bilinear {
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub q: Vec<f64>,
    pub t: Vec<f64>,
    pub bilinear: Vec<Bilinear>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowData {
    pub a: Vec<f64>,
    pub e: Vec<f64>,
    pub quad: Vec<f64>,
    pub exp: Vec<ExpTerm>,
    pub b: f64,
}

impl RowData {
    fn zero(n: usize, m: usize) -> Self {
        RowData {
            a: vec![0.0; n],
            e: vec![0.0; m],
            quad: vec![0.0; n],
            exp: Vec::new(),
            b: 0.0,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.exp.is_empty() && self.quad.iter().all(|&q| q == 0.0)
    }

    /// Left-hand side minus `b`.
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v = -self.b;
        for i in 0..x.len() {
            v += self.a[i] * x[i] + self.quad[i] * x[i] * x[i];
        }
        for (e, yj) in self.e.iter().zip(y) {
            v += e * yj;
        }
        for t in &self.exp {
            v += t.coef * (t.scale * x[t.var]).exp();
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceData {
    pub name: String,
    pub kind: InstanceKind,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub n_bin: usize,
    pub objective: Objective,
    pub rows: Vec<RowData>,
}

fn r2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl InstanceData {
    pub fn n_cont(&self) -> usize {
        self.x_lo.len()
    }

    pub fn objective_value(&self, x: &[f64], y: &[f64]) -> f64 {
        let o = &self.objective;
        let mut v = 0.0;
        for i in 0..x.len() {
            v += o.c[i] * x[i] + o.q[i] * (x[i] - o.t[i]).powi(2);
        }
        for (d, yj) in o.d.iter().zip(y) {
            v += d * yj;
        }
        for b in &o.bilinear {
            v += b.coef * x[b.i] * x[b.j];
        }
        v
    }

    pub fn is_feasible(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.x_lo[i] - tol && v <= self.x_hi[i] + tol)
            && self.rows.iter().all(|r| r.value(x, y) <= tol)
    }

    pub fn to_model(&self) -> Model {
        let n = self.n_cont();
        let mut b = ModelBuilder::new(self.name.clone());
        let xs: Vec<VarId> = (0..n).map(|i| b.continuous(format!("x{i}"), self.x_lo[i], self.x_hi[i])).collect();
        let ys: Vec<VarId> = (0..self.n_bin).map(|j| b.binary(format!("y{j}"))).collect();
        let o = &self.objective;
        let mut lin: Vec<(VarId, f64)> = Vec::new();
        let mut terms: Vec<(Expr, f64)> = Vec::new();
        for i in 0..n {
            if o.c[i] != 0.0 {
                lin.push((xs[i], o.c[i]));
            }
            if o.q[i] != 0.0 {
                terms.push(((Expr::var(xs[i]) - o.t[i]).powi(2), o.q[i]));
            }
        }
        for j in 0..self.n_bin {
            if o.d[j] != 0.0 {
                lin.push((ys[j], o.d[j]));
            }
        }
        for t in &o.bilinear {
            terms.push((Expr::var(xs[t.i]) * Expr::var(xs[t.j]), t.coef));
        }
        terms.push((Expr::linear(&lin, 0.0), 1.0));
        b.minimize(Expr::sum_of(terms, 0.0));
        for (k, r) in self.rows.iter().enumerate() {
            let mut lin: Vec<(VarId, f64)> = Vec::new();
            let mut terms: Vec<(Expr, f64)> = Vec::new();
            for i in 0..n {
                if r.a[i] != 0.0 {
                    lin.push((xs[i], r.a[i]));
                }
                if r.quad[i] != 0.0 {
                    terms.push((Expr::var(xs[i]).powi(2), r.quad[i]));
                }
            }
            for j in 0..self.n_bin {
                if r.e[j] != 0.0 {
                    lin.push((ys[j], r.e[j]));
                }
            }
            for t in &r.exp {
                terms.push(((Expr::var(xs[t.var]) * t.scale).exp(), t.coef));
            }
            terms.push((Expr::linear(&lin, 0.0), 1.0));
            b.named_constraint(format!("r{k}"), Expr::sum_of(terms, -r.b), minlp_core::Sense::Leq);
        }
        if self.kind == InstanceKind::Convex {
            b.declare_convex();
        }
        b.build().expect("generated instances are well formed")
    }
}

/// Draws one instance. Every row holds with slack at the reference point
/// `y = 1`, `x = 0.75 hi`, so the instance is feasible.
pub fn random_instance<R: Rng>(rng: &mut R, kind: InstanceKind, name: String) -> InstanceData {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(2..=6);
    random_instance_sized(rng, kind, name, n, m)
}

/// As [`random_instance`] with `n` continuous variables and `m` binaries.
pub fn random_instance_sized<R: Rng>(rng: &mut R, kind: InstanceKind, name: String, n: usize, m: usize) -> InstanceData {
    assert!(n >= 2 && m >= 1, "need two continuous variables and a binary");
    let x_lo = vec![0.0; n];
    let x_hi: Vec<f64> = (0..n).map(|_| r2(rng.gen_range(1.0..4.0))).collect();
    let x_ref: Vec<f64> = x_hi.iter().map(|h| 0.75 * h).collect();
    let y_ref = vec![1.0; m];

    let q_range = match kind {
        InstanceKind::Convex => 0.2..2.0,
        InstanceKind::Nonconvex => 0.0..0.6,
    };
    let mut bilinear = Vec::new();
    if kind == InstanceKind::Nonconvex {
        let count = rng.gen_range(1..=(n * (n - 1) / 2).min(3));
        while bilinear.len() < count {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j || bilinear.iter().any(|b: &Bilinear| (b.i, b.j) == (i.min(j), i.max(j))) {
                continue;
            }
            let mag = rng.gen_range(0.5..3.0);
            let coef = if rng.gen_bool(0.5) { mag } else { -mag };
            bilinear.push(Bilinear {
                i: i.min(j),
                j: i.max(j),
                coef: r2(coef),
            });
        }
    }
    let objective = Objective {
        c: (0..n).map(|_| r2(rng.gen_range(-2.0..1.0))).collect(),
        d: (0..m).map(|_| r2(rng.gen_range(0.5..3.0))).collect(),
        q: (0..n).map(|_| r2(rng.gen_range(q_range.clone()))).collect(),
        t: x_hi.iter().map(|&h| r2(rng.gen_range(0.0..h))).collect(),
        bilinear,
    };

    let mut rows = Vec::new();
    // x_i switched on by one binary
    for i in 0..n {
        let mut r = RowData::zero(n, m);
        r.a[i] = 1.0;
        r.e[rng.gen_range(0..m)] = -x_hi[i];
        rows.push(r);
    }
    // demand over a subset
    let mut r = RowData::zero(n, m);
    let mut total = 0.0;
    for i in 0..n {
        if rng.gen_bool(0.7) || i == 0 {
            r.a[i] = -1.0;
            total += x_hi[i];
        }
    }
    r.b = -r2(total * rng.gen_range(0.2..0.6));
    rows.push(r);
    // dense coupling row
    let mut r = RowData::zero(n, m);
    for a in r.a.iter_mut() {
        *a = r2(rng.gen_range(-1.5..1.5));
    }
    for e in r.e.iter_mut() {
        *e = r2(rng.gen_range(-1.0..1.5));
    }
    r.b = r2(r.value(&x_ref, &y_ref) + rng.gen_range(0.3..1.5));
    rows.push(r);
    if kind == InstanceKind::Convex {
        for _ in 0..rng.gen_range(1..=2) {
            let mut r = RowData::zero(n, m);
            for i in 0..n {
                if rng.gen_bool(0.6) {
                    r.quad[i] = r2(rng.gen_range(0.2..1.5));
                } else if rng.gen_bool(0.5) {
                    r.exp.push(ExpTerm {
                        var: i,
                        coef: r2(rng.gen_range(0.2..1.0)),
                        scale: r2(rng.gen_range(0.3..0.8)),
                    });
                }
                if rng.gen_bool(0.3) {
                    r.a[i] = r2(rng.gen_range(-1.0..1.0));
                }
            }
            for e in r.e.iter_mut() {
                if rng.gen_bool(0.5) {
                    *e = -r2(rng.gen_range(0.5..3.0));
                }
            }
            r.b = r2(r.value(&x_ref, &y_ref) + rng.gen_range(0.5..3.0));
            rows.push(r);
        }
    }
    InstanceData {
        name,
        kind,
        x_lo,
        x_hi,
        n_bin: m,
        objective,
        rows,
    }
}

/// Writes `<dir>/<name>.json`: the model plus its generator data under
/// `"instance"`.
pub fn write_instance(dir: &Path, data: &InstanceData) -> Result<()> {
    let mut v = json::model_to_json(&data.to_model());
    v["instance"] = serde_json::to_value(data)?;
    let path = dir.join(format!("{}.json", data.name));
    let text = serde_json::to_string_pretty(&v)?;
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Reads a model file; the generator data is returned when present.
pub fn read_instance(path: &Path) -> Result<(Model, Option<InstanceData>)> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let model = json::parse_model(&text)?;
    let v: Value = serde_json::from_str(&text)?;
    let data = match v.get("instance") {
        Some(d) => Some(serde_json::from_value(d.clone())?),
        None => None,
    };
    Ok((model, data))
}
