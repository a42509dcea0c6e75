//! MINLP instances and the subproblems derived from them.
//!
//! A [`Model`] minimizes an expression subject to `g_j(x, y) <= 0` rows over
//! continuous and discrete variables. Equality inputs are split into two
//! `<=` rows with negated bodies when the model is built. Derived models
//! (`fix_integers`, `make_feasibility`, `relax_integrality`, `epigraph`) keep
//! the original [`VarId`]s and append any new variables after them.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interval::{Interval, VarBox};

/// Default bounds of the epigraph variable that carries a nonlinear objective.
pub const EPIGRAPH_BOUND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarDomain {
    Continuous,
    Integer,
    Binary,
}

impl VarDomain {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VarDomain::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub domain: VarDomain,
    pub lower: f64,
    pub upper: f64,
}

impl Variable {
    pub fn bounds(&self) -> Interval {
        Interval::new(self.lower, self.upper)
    }

    pub fn is_binary(&self) -> bool {
        self.domain == VarDomain::Binary
            || (self.domain == VarDomain::Integer && self.lower >= 0.0 && self.upper <= 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Leq,
    Eq,
}

/// A row `body <= 0`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub body: Arc<Expr>,
    /// Always `Leq` once the model is built.
    pub sense: Sense,
    pub is_linear: bool,
    pub index: usize,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convexity {
    DeclaredConvex,
    Unknown,
}

/// Dense vector of variable values, indexed by [`VarId`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Deref for Point {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Values for the discrete variables of a model.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub BTreeMap<VarId, i64>);

impl Assignment {
    pub fn new(values: impl IntoIterator<Item = (VarId, i64)>) -> Self {
        Assignment(values.into_iter().collect())
    }

    /// Rounds the discrete coordinates of `point`.
    pub fn from_point(model: &Model, point: &[f64]) -> Self {
        Assignment(
            model
                .discrete_vars()
                .map(|v| (v, point[v.index()].round() as i64))
                .collect(),
        )
    }

    pub fn get(&self, v: VarId) -> Option<i64> {
        self.0.get(&v).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, i64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// FNV-1a over the (id, value) pairs; stable across runs and platforms.
    pub fn stable_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in &self.0 {
            for b in k.0.to_le_bytes().iter().chain(v.to_le_bytes().iter()) {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.values().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeasibilityNorm {
    L1,
    Linf,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    pub variables: Vec<Variable>,
    pub objective: Arc<Expr>,
    pub constraints: Vec<Constraint>,
    pub convexity: Convexity,
}

/// Where the epigraph reformulation put the objective.
#[derive(Clone, Debug)]
pub struct Epigraph {
    pub model: Model,
    /// `Some` when a nonlinear objective was moved into a row `f - mu <= 0`.
    pub mu: Option<VarId>,
    pub objective_row: Option<usize>,
}

pub struct ModelBuilder {
    name: String,
    variables: Vec<Variable>,
    objective: Option<Expr>,
    rows: Vec<(Expr, Sense, String)>,
    convexity: Convexity,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        ModelBuilder {
            name: name.into(),
            variables: Vec::new(),
            objective: None,
            rows: Vec::new(),
            convexity: Convexity::Unknown,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, domain: VarDomain, lower: f64, upper: f64) -> VarId {
        let id = VarId(self.variables.len() as u32);
        self.variables.push(Variable {
            id,
            name: name.into(),
            domain,
            lower,
            upper,
        });
        id
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarDomain::Continuous, lower, upper)
    }

    pub fn integer(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarDomain::Integer, lower, upper)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarDomain::Binary, 0.0, 1.0)
    }

    pub fn minimize(&mut self, objective: Expr) -> &mut Self {
        self.objective = Some(objective);
        self
    }

    /// Adds `body <= 0` (or `body = 0`).
    pub fn constraint(&mut self, body: Expr, sense: Sense) -> &mut Self {
        let name = format!("c{}", self.rows.len());
        self.rows.push((body, sense, name));
        self
    }

    pub fn named_constraint(&mut self, name: impl Into<String>, body: Expr, sense: Sense) -> &mut Self {
        self.rows.push((body, sense, name.into()));
        self
    }

    pub fn leq(&mut self, lhs: Expr, rhs: f64) -> &mut Self {
        self.constraint(lhs - rhs, Sense::Leq)
    }

    pub fn geq(&mut self, lhs: Expr, rhs: f64) -> &mut Self {
        self.constraint(Expr::constant(rhs) - lhs, Sense::Leq)
    }

    pub fn eq(&mut self, lhs: Expr, rhs: f64) -> &mut Self {
        self.constraint(lhs - rhs, Sense::Eq)
    }

    pub fn declare_convex(&mut self) -> &mut Self {
        self.convexity = Convexity::DeclaredConvex;
        self
    }

    pub fn build(self) -> Result<Model> {
        if self.variables.is_empty() {
            return Err(Error::InvalidModel("model has no variables".into()));
        }
        let mut variables = self.variables;
        for v in &mut variables {
            if v.lower.is_nan() || v.upper.is_nan() {
                return Err(Error::InvalidModel(format!("variable `{}` has a NaN bound", v.name)));
            }
            match v.domain {
                VarDomain::Binary => {
                    v.lower = v.lower.max(0.0).ceil();
                    v.upper = v.upper.min(1.0).floor();
                }
                VarDomain::Integer => {
                    let r = Interval::checked(v.lower, v.upper)
                        .and_then(|iv| iv.round_inward(1e-9));
                    if let Some(r) = r {
                        v.lower = r.lo;
                        v.upper = r.hi;
                    }
                }
                VarDomain::Continuous => {}
            }
            if !(v.lower <= v.upper) {
                return Err(Error::InvalidModel(format!(
                    "variable `{}` has empty domain [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        let n = variables.len();
        let check = |e: &Expr, what: &str| -> Result<()> {
            match e.max_var_index() {
                Some(i) if i >= n => Err(Error::InvalidModel(format!(
                    "{what} references undeclared variable v{i}"
                ))),
                _ => Ok(()),
            }
        };
        let objective = self.objective.unwrap_or_else(|| Expr::constant(0.0));
        check(&objective, "objective")?;
        let mut constraints = Vec::new();
        for (body, sense, name) in self.rows {
            check(&body, &name)?;
            match sense {
                Sense::Leq => push_row(&mut constraints, body, name),
                Sense::Eq => {
                    let neg = -body.clone();
                    push_row(&mut constraints, body, format!("{name}[le]"));
                    push_row(&mut constraints, neg, format!("{name}[ge]"));
                }
            }
        }
        Ok(Model {
            name: self.name,
            variables,
            objective: Arc::new(objective),
            constraints,
            convexity: self.convexity,
        })
    }
}

fn push_row(rows: &mut Vec<Constraint>, body: Expr, name: String) {
    let is_linear = body.is_linear();
    rows.push(Constraint {
        body: Arc::new(body),
        sense: Sense::Leq,
        is_linear,
        index: rows.len(),
        name,
    });
}

impl Model {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.index()]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().find(|v| v.name == name).map(|v| v.id)
    }

    pub fn discrete_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables
            .iter()
            .filter(|v| v.domain.is_discrete())
            .map(|v| v.id)
    }

    pub fn continuous_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables
            .iter()
            .filter(|v| !v.domain.is_discrete())
            .map(|v| v.id)
    }

    pub fn has_discrete(&self) -> bool {
        self.discrete_vars().next().is_some()
    }

    pub fn bounds(&self) -> VarBox {
        VarBox::new(self.variables.iter().map(Variable::bounds).collect())
    }

    /// Replaces every variable's bounds.
    pub fn with_bounds(&self, bx: &VarBox) -> Model {
        let mut m = self.clone();
        for (v, iv) in m.variables.iter_mut().zip(bx.iter()) {
            v.lower = iv.lo;
            v.upper = iv.hi;
        }
        m
    }

    pub fn is_objective_linear(&self) -> bool {
        self.objective.is_linear()
    }

    pub fn nonlinear_rows(&self) -> impl Iterator<Item = &Constraint> + '_ {
        self.constraints.iter().filter(|c| !c.is_linear)
    }

    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        self.objective.eval(x)
    }

    /// Largest row violation `max(0, g_j(x))`; domain errors count as infinite.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut scratch = Vec::new();
        self.constraints
            .iter()
            .map(|c| match c.body.eval_into(x, &mut scratch) {
                Ok(g) => g.max(0.0),
                Err(_) => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    pub fn bound_violation(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn integrality_violation(&self, x: &[f64]) -> f64 {
        self.discrete_vars()
            .map(|v| (x[v.index()] - x[v.index()].round()).abs())
            .fold(0.0, f64::max)
    }

    /// Rows, bounds and integrality all satisfied within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.num_vars()
            && self.bound_violation(x) <= tol
            && self.integrality_violation(x) <= tol
            && self.max_violation(x) <= tol
    }

    fn check_assignment(&self, y: &Assignment) -> Result<()> {
        for v in self.discrete_vars() {
            let var = self.var(v);
            let val = y
                .get(v)
                .ok_or_else(|| Error::Assignment(format!("no value for `{}`", var.name)))?;
            let fv = val as f64;
            if fv < var.lower || fv > var.upper {
                return Err(Error::Assignment(format!(
                    "`{}` = {} outside [{}, {}]",
                    var.name, val, var.lower, var.upper
                )));
            }
        }
        for (v, _) in y.iter() {
            if v.index() >= self.num_vars() || !self.var(v).domain.is_discrete() {
                return Err(Error::Assignment(format!("{v} is not a discrete variable")));
            }
        }
        Ok(())
    }

    /// Continuous model with each discrete variable collapsed to its assigned value.
    pub fn fix_integers(&self, y: &Assignment) -> Result<Model> {
        self.check_assignment(y)?;
        let mut m = self.clone();
        for (v, val) in y.iter() {
            let var = &mut m.variables[v.index()];
            var.lower = val as f64;
            var.upper = val as f64;
            var.domain = VarDomain::Continuous;
        }
        Ok(m)
    }

    /// Feasibility subproblem minimizing the `norm` of slacks on nonlinear rows.
    ///
    /// Slack variables are appended after the original ones; linear rows stay hard.
    pub fn make_feasibility(&self, y: &Assignment, norm: FeasibilityNorm) -> Result<Model> {
        let mut m = self.fix_integers(y)?;
        m.name = format!("{}[feas]", self.name);
        let nonlinear: Vec<usize> = m
            .constraints
            .iter()
            .filter(|c| !c.is_linear)
            .map(|c| c.index)
            .collect();
        let mut slack_of_row = BTreeMap::new();
        let add_slack = |m: &mut Model, name: String| {
            let id = VarId(m.variables.len() as u32);
            m.variables.push(Variable {
                id,
                name,
                domain: VarDomain::Continuous,
                lower: 0.0,
                upper: f64::INFINITY,
            });
            id
        };
        match norm {
            FeasibilityNorm::L1 => {
                for &j in &nonlinear {
                    let name = format!("slack[{}]", m.constraints[j].name);
                    let s = add_slack(&mut m, name);
                    slack_of_row.insert(j, s);
                }
            }
            FeasibilityNorm::Linf => {
                if !nonlinear.is_empty() {
                    let s = add_slack(&mut m, "slack[max]".to_string());
                    for &j in &nonlinear {
                        slack_of_row.insert(j, s);
                    }
                }
            }
        }
        for (&j, &s) in &slack_of_row {
            let row = &mut m.constraints[j];
            let body = (*row.body).clone() - Expr::var(s);
            row.body = Arc::new(body);
        }
        let mut slacks: Vec<VarId> = slack_of_row.values().copied().collect();
        slacks.dedup();
        m.objective = Arc::new(Expr::linear(
            &slacks.iter().map(|&s| (s, 1.0)).collect::<Vec<_>>(),
            0.0,
        ));
        m.convexity = self.convexity;
        Ok(m)
    }

    /// Same model with extra rows `body <= 0` appended.
    pub fn with_rows(&self, rows: impl IntoIterator<Item = (Expr, String)>) -> Model {
        let mut m = self.clone();
        for (body, name) in rows {
            push_row(&mut m.constraints, body, name);
        }
        m
    }

    /// Same model with every discrete domain made continuous.
    pub fn relax_integrality(&self) -> Model {
        let mut m = self.clone();
        for v in &mut m.variables {
            v.domain = VarDomain::Continuous;
        }
        m
    }

    /// Moves a nonlinear objective into a row `f - mu <= 0` and minimizes `mu`.
    pub fn epigraph(&self) -> Epigraph {
        if self.is_objective_linear() {
            return Epigraph {
                model: self.clone(),
                mu: None,
                objective_row: None,
            };
        }
        // the objective's enclosure over the box, capped where it is huge or
        // unbounded
        let range = self
            .objective
            .interval_eval(&self.bounds())
            .unwrap_or(Interval::new(f64::NEG_INFINITY, f64::INFINITY));
        let mut m = self.clone();
        let mu = VarId(m.variables.len() as u32);
        m.variables.push(Variable {
            id: mu,
            name: "mu".into(),
            domain: VarDomain::Continuous,
            lower: range.lo.max(-EPIGRAPH_BOUND),
            upper: range.hi.min(EPIGRAPH_BOUND),
        });
        let row = m.constraints.len();
        let body = (*self.objective).clone() - Expr::var(mu);
        push_row(&mut m.constraints, body, "objective".into());
        m.objective = Arc::new(Expr::var(mu));
        Epigraph {
            model: m,
            mu: Some(mu),
            objective_row: Some(row),
        }
    }

    /// Replaces every non-binary integer `y in [l, u]` by `y = l + sum 2^k b_k`.
    ///
    /// `y` becomes continuous (keeping its id and bounds); the new binaries are
    /// appended and two rows tie them to `y`.
    pub fn binary_expand(&self) -> Result<Model> {
        let mut m = self.clone();
        let mut rows = Vec::new();
        for v in self.variables.iter().filter(|v| v.domain == VarDomain::Integer) {
            if v.is_binary() {
                m.variables[v.id.index()].domain = VarDomain::Binary;
                continue;
            }
            if !v.lower.is_finite() || !v.upper.is_finite() {
                return Err(Error::UnboundedBox(v.name.clone()));
            }
            m.variables[v.id.index()].domain = VarDomain::Continuous;
            let range = (v.upper - v.lower) as u64;
            if range == 0 {
                continue;
            }
            let bits = 64 - range.leading_zeros();
            let mut terms = vec![(Expr::var(v.id), 1.0)];
            for k in 0..bits {
                let id = VarId(m.variables.len() as u32);
                m.variables.push(Variable {
                    id,
                    name: format!("{}[bit{}]", v.name, k),
                    domain: VarDomain::Binary,
                    lower: 0.0,
                    upper: 1.0,
                });
                terms.push((Expr::var(id), -((1u64 << k) as f64)));
            }
            rows.push((Expr::sum_of(terms, -v.lower), format!("{}[expand]", v.name)));
        }
        for (body, name) in rows {
            let neg = -body.clone();
            push_row(&mut m.constraints, body, format!("{name}[le]"));
            push_row(&mut m.constraints, neg, format!("{name}[ge]"));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Model, VarId, VarId) {
        // min (x-2)^2 + 0.5 y  s.t.  x <= 1 + 2y,  x in [0,4], y in {0,1}
        let mut b = ModelBuilder::new("tiny");
        let x = b.continuous("x", 0.0, 4.0);
        let y = b.binary("y");
        b.minimize((Expr::var(x) - 2.0).powi(2) + 0.5 * Expr::var(y));
        b.leq(Expr::var(x) - 2.0 * Expr::var(y), 1.0);
        b.declare_convex();
        (b.build().unwrap(), x, y)
    }

    #[test]
    fn equality_splits_into_two_rows() {
        let mut b = ModelBuilder::new("eq");
        let x = b.continuous("x", -1.0, 1.0);
        b.eq(Expr::var(x).powi(2), 0.25);
        let m = b.build().unwrap();
        assert_eq!(m.constraints.len(), 2);
        assert!(m.constraints.iter().all(|c| c.sense == Sense::Leq));
        let g0 = m.constraints[0].body.eval(&[0.9]).unwrap();
        let g1 = m.constraints[1].body.eval(&[0.9]).unwrap();
        assert_eq!(g0, -g1);
    }

    #[test]
    fn integer_bounds_round_inward() {
        let mut b = ModelBuilder::new("r");
        b.integer("n", 0.5, 3.7);
        let m = b.build().unwrap();
        assert_eq!(m.variables[0].bounds(), Interval::new(1.0, 3.0));
    }

    #[test]
    fn undeclared_variable_rejected() {
        let mut b = ModelBuilder::new("bad");
        b.continuous("x", 0.0, 1.0);
        b.minimize(Expr::var(VarId(3)));
        assert!(matches!(b.build(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn fix_integers_collapses_bounds() {
        let (m, x, y) = tiny();
        let fixed = m.fix_integers(&Assignment::new([(y, 1)])).unwrap();
        assert_eq!(fixed.var(y).bounds(), Interval::point(1.0));
        assert_eq!(fixed.var(x).bounds(), Interval::new(0.0, 4.0));
        assert!(!fixed.has_discrete());
        assert!(Arc::ptr_eq(&fixed.objective, &m.objective));
        assert!(matches!(
            m.fix_integers(&Assignment::new([(y, 2)])),
            Err(Error::Assignment(_))
        ));
        assert!(matches!(m.fix_integers(&Assignment::default()), Err(Error::Assignment(_))));
    }

    #[test]
    fn feasibility_model_adds_slacks_to_nonlinear_rows_only() {
        let mut b = ModelBuilder::new("f");
        let x = b.continuous("x", 0.0, 1.0);
        let y = b.binary("y");
        b.leq(Expr::var(x).powi(2) + 1.0, 0.0);
        b.leq(Expr::var(x) + Expr::var(y), 5.0);
        let m = b.build().unwrap();
        let f = m.make_feasibility(&Assignment::new([(y, 0)]), FeasibilityNorm::L1).unwrap();
        assert_eq!(f.num_vars(), 3);
        assert!(f.constraints[1].body.eval(&[0.0, 0.0, 7.0]).unwrap() < 0.0);
        let finf = m.make_feasibility(&Assignment::new([(y, 0)]), FeasibilityNorm::Linf).unwrap();
        assert_eq!(finf.num_vars(), 3);
    }

    #[test]
    fn relax_integrality_keeps_bounds() {
        let mut b = ModelBuilder::new("r");
        b.integer("n", 0.0, 3.0);
        let m = b.build().unwrap();
        let r = m.relax_integrality();
        assert_eq!(r.variables[0].domain, VarDomain::Continuous);
        assert_eq!(r.variables[0].bounds(), Interval::new(0.0, 3.0));
    }

    #[test]
    fn epigraph_moves_nonlinear_objective() {
        let (m, _, _) = tiny();
        let ep = m.epigraph();
        let mu = ep.mu.unwrap();
        assert_eq!(ep.model.num_vars(), 3);
        assert!(ep.model.objective.is_linear());
        let row = &ep.model.constraints[ep.objective_row.unwrap()];
        // (x-2)^2 + 0.5y - mu at x=2,y=1,mu=0.5 is zero
        assert_eq!(row.body.eval(&[2.0, 1.0, 0.5]).unwrap(), 0.0);
        assert_eq!(mu, VarId(2));
    }

    #[test]
    fn binary_expansion_represents_every_integer() {
        let mut b = ModelBuilder::new("e");
        let n = b.integer("n", 2.0, 7.0);
        b.minimize(Expr::var(n));
        let m = b.build().unwrap();
        let e = m.binary_expand().unwrap();
        assert_eq!(e.num_vars(), 4);
        assert!(e.discrete_vars().all(|v| e.var(v).is_binary()));
        // n = 2 + b0 + 2 b1 + 4 b2 holds for n = 5 with bits (1,1,0)
        assert!(e.is_feasible(&[5.0, 1.0, 1.0, 0.0], 1e-12));
        assert!(!e.is_feasible(&[5.0, 1.0, 0.0, 0.0], 1e-12));
    }
}
