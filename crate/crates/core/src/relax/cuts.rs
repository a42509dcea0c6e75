use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::mccormick::mccormick_eval;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interval::VarBox;
use crate::model::{Assignment, Model, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutKind {
    OAObjective,
    OAConstraint,
    Envelope,
    NoGood,
}

/// `x·A + y·B + z·C <= rhs`, split by continuous (`x`), discrete (`y`) and
/// auxiliary (`z`, ids past the model's variables) columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCut {
    pub x: BTreeMap<VarId, f64>,
    pub y: BTreeMap<VarId, f64>,
    pub z: BTreeMap<VarId, f64>,
    pub rhs: f64,
    pub kind: CutKind,
    pub source: String,
}

impl LinearCut {
    /// Builds a cut from raw terms, merging duplicates and dropping zeros.
    pub fn from_terms(
        model: &Model,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        rhs: f64,
        kind: CutKind,
        source: impl Into<String>,
    ) -> LinearCut {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, c) in terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        let mut cut = LinearCut {
            x: BTreeMap::new(),
            y: BTreeMap::new(),
            z: BTreeMap::new(),
            rhs,
            kind,
            source: source.into(),
        };
        let n = model.num_vars();
        for (v, c) in merged {
            if c == 0.0 {
                continue;
            }
            let part = if v.index() >= n {
                &mut cut.z
            } else if model.var(v).domain.is_discrete() {
                &mut cut.y
            } else {
                &mut cut.x
            };
            part.insert(v, c);
        }
        cut
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.x
            .iter()
            .chain(&self.y)
            .chain(&self.z)
            .map(|(v, c)| (*v, *c))
    }

    pub fn lhs(&self, point: &[f64]) -> f64 {
        self.terms().map(|(v, c)| c * point[v.index()]).sum()
    }

    /// Amount by which `point` violates the cut (0 when satisfied).
    pub fn violation(&self, point: &[f64]) -> f64 {
        (self.lhs(point) - self.rhs).max(0.0)
    }

    pub fn is_satisfied(&self, point: &[f64], tol: f64) -> bool {
        self.lhs(point) <= self.rhs + tol * (1.0 + self.rhs.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.rhs.is_finite() && self.terms().all(|(_, c)| c.is_finite())
    }

    pub fn max_var_index(&self) -> Option<usize> {
        self.terms().map(|(v, _)| v.index()).max()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("cut serializes")
    }
}

impl fmt::Display for LinearCut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in self.terms() {
            if first {
                write!(f, "{c}*{v}")?;
                first = false;
            } else if c < 0.0 {
                write!(f, " - {}*{v}", -c)?;
            } else {
                write!(f, " + {c}*{v}")?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " <= {}", self.rhs)
    }
}

/// `constant + coeffs·v`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineEstimator {
    pub coeffs: BTreeMap<VarId, f64>,
    pub constant: f64,
}

impl AffineEstimator {
    fn at(value: f64, sub: &[f64], point: &[f64]) -> Self {
        let mut coeffs = BTreeMap::new();
        let mut constant = value;
        for (i, (&s, &p)) in sub.iter().zip(point).enumerate() {
            if s != 0.0 {
                coeffs.insert(VarId(i as u32), s);
                constant -= s * p;
            }
        }
        AffineEstimator { coeffs, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(v, c)| c * x[v.index()]).sum::<f64>()
    }

    /// The cut `self(v) <= t` (or `self(v) <= 0` without `t`).
    pub fn below(&self, model: &Model, t: Option<VarId>, kind: CutKind, source: &str) -> LinearCut {
        let mut terms: Vec<(VarId, f64)> = self.coeffs.iter().map(|(v, c)| (*v, *c)).collect();
        if let Some(t) = t {
            terms.push((t, -1.0));
        }
        LinearCut::from_terms(model, terms, -self.constant, kind, source)
    }
}

fn padded_point(expr: &Expr, point: &[f64]) -> Vec<f64> {
    let need = expr.max_var_index().map_or(0, |m| m + 1);
    let mut p = point.to_vec();
    if p.len() < need {
        p.resize(need, 0.0);
    }
    p
}

/// Affine function below `expr` on the whole box, exact in the McCormick
/// sense at `point`.
pub fn affine_underestimator(expr: &Expr, bx: &VarBox, point: &[f64]) -> Result<AffineEstimator> {
    if let Some(c) = expr.as_constant() {
        return Ok(AffineEstimator {
            coeffs: BTreeMap::new(),
            constant: c,
        });
    }
    let p = padded_point(expr, point);
    let m = mccormick_eval(expr, bx, &p)?;
    let q: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, v)| if i < bx.len() { bx[i].clamp(*v) } else { *v })
        .collect();
    Ok(AffineEstimator::at(m.cv, &m.cv_sub, &q))
}

/// Affine function above `expr` on the whole box.
pub fn affine_overestimator(expr: &Expr, bx: &VarBox, point: &[f64]) -> Result<AffineEstimator> {
    if let Some(c) = expr.as_constant() {
        return Ok(AffineEstimator {
            coeffs: BTreeMap::new(),
            constant: c,
        });
    }
    let p = padded_point(expr, point);
    let m = mccormick_eval(expr, bx, &p)?;
    let q: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, v)| if i < bx.len() { bx[i].clamp(*v) } else { *v })
        .collect();
    Ok(AffineEstimator::at(m.cc, &m.cc_sub, &q))
}

/// Cut excluding exactly the binary assignment `y`:
/// `sum_{y_i=1} y_i - sum_{y_i=0} y_i <= |{i: y_i=1}| - 1`.
pub fn no_good_cut(model: &Model, y: &Assignment) -> Result<LinearCut> {
    let mut ones = 0i64;
    let mut terms = Vec::with_capacity(y.len());
    for (v, val) in y.iter() {
        let var = model.var(v);
        if !var.is_binary() {
            return Err(Error::NonBinary(var.name.clone()));
        }
        match val {
            1 => {
                ones += 1;
                terms.push((v, 1.0));
            }
            0 => terms.push((v, -1.0)),
            other => {
                return Err(Error::Assignment(format!(
                    "binary `{}` assigned {other}",
                    var.name
                )))
            }
        }
    }
    Ok(LinearCut::from_terms(
        model,
        terms,
        (ones - 1) as f64,
        CutKind::NoGood,
        format!("nogood:{:016x}", y.stable_hash()),
    ))
}
