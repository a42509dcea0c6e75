//! Auxiliary-variable decomposition: one lifted column per distinct nonlinear
//! factor, so every nonlinear row becomes affine in original and auxiliary
//! columns, and every factor `z = op(args)` gets polyhedral envelopes.

use std::collections::{BTreeMap, HashMap};

use super::cuts::{CutKind, LinearCut};
use super::mccormick::{Envelope, Uni};
use crate::error::{Error, Result};
use crate::expr::{Atom, Expr, LinearForm, Node, NodeId};
use crate::interval::{Interval, VarBox};
use crate::model::{Model, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactorOp {
    Product,
    Pow(u32),
    Exp,
    Log,
    Sqrt,
    Recip,
}

impl FactorOp {
    fn uni(self) -> Option<Uni> {
        match self {
            FactorOp::Product => None,
            FactorOp::Pow(n) => Some(Uni::Pow(n)),
            FactorOp::Exp => Some(Uni::Exp),
            FactorOp::Log => Some(Uni::Log),
            FactorOp::Sqrt => Some(Uni::Sqrt),
            FactorOp::Recip => Some(Uni::Recip),
        }
    }
}

/// `aux = op(args)`, with every argument affine in original and earlier
/// auxiliary columns.
#[derive(Clone, Debug)]
pub struct Factor {
    pub aux: VarId,
    pub op: FactorOp,
    pub args: Vec<LinearForm>,
    /// Enclosures of the arguments over the box.
    pub arg_bounds: Vec<Interval>,
    pub bounds: Interval,
    /// The factor as an expression over original variables.
    pub definition: Expr,
}

/// Affine row `form <= 0` over original and auxiliary columns.
#[derive(Clone, Debug)]
pub struct LiftedRow {
    pub row: usize,
    pub name: String,
    pub form: LinearForm,
}

#[derive(Clone, Debug)]
pub struct Avm {
    pub num_original: usize,
    pub factors: Vec<Factor>,
    /// Lifted nonlinear constraint rows.
    pub rows: Vec<LiftedRow>,
    /// Lifted objective; `None` when the objective is affine.
    pub objective: Option<LinearForm>,
}

type FactorKey = (FactorOp, Vec<Vec<(u32, u64)>>, Vec<u64>);

fn key_of(op: FactorOp, args: &[LinearForm]) -> FactorKey {
    let terms = args
        .iter()
        .map(|a| a.coeffs.iter().map(|(v, c)| (v.0, c.to_bits())).collect())
        .collect();
    let consts = args.iter().map(|a| a.constant.to_bits()).collect();
    (op, terms, consts)
}

struct Lifter<'a> {
    n: usize,
    bx: &'a VarBox,
    strict: bool,
    factors: Vec<Factor>,
    index: HashMap<FactorKey, usize>,
}

impl Lifter<'_> {
    /// Lifts `expr`, returning the affine form of its root.
    fn lift(&mut self, expr: &Expr) -> Result<LinearForm> {
        let mut ivs = Vec::new();
        if let Err(e) = expr.interval_eval_into(self.bx, &mut ivs) {
            if self.strict {
                return Err(e);
            }
            ivs = self.loose_intervals(expr);
        }
        let mut aux_of: HashMap<NodeId, VarId> = HashMap::new();
        for (id, node) in expr.nodes().iter().enumerate() {
            let id = id as NodeId;
            if !expr.is_nonlinear_node(id) {
                continue;
            }
            let (op, children) = match node {
                Node::Product(a, b) if a == b => (FactorOp::Pow(2), vec![*a]),
                Node::Product(a, b) => (FactorOp::Product, vec![*a, *b]),
                Node::Power(a, k) => (FactorOp::Pow(*k), vec![*a]),
                Node::Exp(a) => (FactorOp::Exp, vec![*a]),
                Node::Log(a) => (FactorOp::Log, vec![*a]),
                Node::Sqrt(a) => (FactorOp::Sqrt, vec![*a]),
                Node::Reciprocal(a) => (FactorOp::Recip, vec![*a]),
                _ => unreachable!("affine node classified nonlinear"),
            };
            let args: Vec<LinearForm> = children
                .iter()
                .map(|c| self.affine_form(expr, *c, &aux_of))
                .collect();
            let arg_bounds: Vec<Interval> = children.iter().map(|c| ivs[*c as usize]).collect();
            if self.strict {
                for iv in &arg_bounds {
                    if !iv.is_finite() {
                        let vars = expr.subexpr(id).variables();
                        let name = vars
                            .iter()
                            .find(|v| !self.bx[**v].is_finite())
                            .map_or_else(|| format!("factor argument {iv}"), |v| v.to_string());
                        return Err(Error::UnboundedBox(name));
                    }
                }
            }
            let key = key_of(op, &args);
            let k = match self.index.get(&key) {
                Some(&k) => {
                    let f = &mut self.factors[k];
                    for (b, iv) in f.arg_bounds.iter_mut().zip(&arg_bounds) {
                        *b = b.intersect(iv).unwrap_or(*b);
                    }
                    f.bounds = f.bounds.intersect(&ivs[id as usize]).unwrap_or(f.bounds);
                    k
                }
                None => {
                    let k = self.factors.len();
                    self.factors.push(Factor {
                        aux: VarId((self.n + k) as u32),
                        op,
                        args,
                        arg_bounds,
                        bounds: ivs[id as usize],
                        definition: expr.subexpr(id),
                    });
                    self.index.insert(key, k);
                    k
                }
            };
            aux_of.insert(id, self.factors[k].aux);
        }
        Ok(self.affine_form(expr, expr.root(), &aux_of))
    }

    fn affine_form(&self, expr: &Expr, node: NodeId, aux_of: &HashMap<NodeId, VarId>) -> LinearForm {
        let (atoms, constant) = expr.affine_decompose(node);
        let mut coeffs = BTreeMap::new();
        for (a, c) in atoms {
            let v = match a {
                Atom::Var(v) => v,
                Atom::Node(id) => aux_of[&id],
            };
            *coeffs.entry(v).or_insert(0.0) += c;
        }
        coeffs.retain(|_, c: &mut f64| *c != 0.0);
        LinearForm { coeffs, constant }
    }

    /// Node enclosures when some node's domain is violated over the box;
    /// offending nodes become the entire line.
    fn loose_intervals(&self, expr: &Expr) -> Vec<Interval> {
        (0..expr.nodes().len() as NodeId)
            .map(|id| {
                expr.subexpr(id)
                    .interval_eval(self.bx)
                    .unwrap_or(Interval::ENTIRE)
            })
            .collect()
    }
}

impl Avm {
    /// Decomposes objective and nonlinear rows; fails on unbounded factor
    /// arguments.
    pub fn build(model: &Model, bx: &VarBox) -> Result<Avm> {
        Self::build_with(model, bx, true)
    }

    /// As [`Avm::build`], but factors with unbounded arguments keep infinite
    /// bounds and simply receive no envelope cuts.
    pub fn build_partial(model: &Model, bx: &VarBox) -> Avm {
        Self::build_with(model, bx, false).expect("lenient decomposition never fails")
    }

    fn build_with(model: &Model, bx: &VarBox, strict: bool) -> Result<Avm> {
        let mut l = Lifter {
            n: model.num_vars(),
            bx,
            strict,
            factors: Vec::new(),
            index: HashMap::new(),
        };
        let objective = if model.objective.is_linear() {
            None
        } else {
            Some(l.lift(&model.objective)?)
        };
        let mut rows = Vec::new();
        for (j, c) in model.constraints.iter().enumerate() {
            if c.is_linear {
                continue;
            }
            rows.push(LiftedRow {
                row: j,
                name: c.name.clone(),
                form: l.lift(&c.body)?,
            });
        }
        Ok(Avm {
            num_original: model.num_vars(),
            factors: l.factors,
            rows,
            objective,
        })
    }

    pub fn num_aux(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Box over original and auxiliary columns.
    pub fn lifted_box(&self, bx: &VarBox) -> VarBox {
        let mut out = bx.clone();
        out.truncate(self.num_original);
        for f in &self.factors {
            out.push(f.bounds);
        }
        out
    }

    /// Extends an original-space point with the auxiliary values; `None` if a
    /// factor is undefined there.
    pub fn lift_point(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut p = x[..self.num_original].to_vec();
        for f in &self.factors {
            let v = f.definition.eval(&p).ok()?;
            p.push(v);
        }
        Some(p)
    }

    /// Envelope cuts of every factor over its argument bounds, plus the lifted
    /// rows, with univariate tangents at the interval ends, midpoint, and the
    /// argument values at `points`.
    pub fn envelope_cuts(&self, model: &Model, points: &[Vec<f64>]) -> Vec<LinearCut> {
        let lifted: Vec<Vec<f64>> = points.iter().filter_map(|p| self.lift_point(p)).collect();
        let mut cuts = Vec::new();
        for f in &self.factors {
            if f.arg_bounds.iter().any(|b| !b.is_finite()) {
                continue;
            }
            let src = format!("{}:{}", op_name(f.op), f.aux);
            match f.op.uni() {
                None => product_cuts(model, f, &src, &mut cuts),
                Some(u) => {
                    let args: Vec<f64> = lifted.iter().map(|p| f.args[0].eval(p)).collect();
                    univariate_cuts(model, f, u, &args, &src, &mut cuts);
                }
            }
        }
        for r in &self.rows {
            cuts.push(form_cut(
                model,
                &r.form,
                None,
                CutKind::Envelope,
                format!("lifted:{}", r.name),
            ));
        }
        cuts.retain(|c| c.is_finite());
        cuts
    }
}

fn op_name(op: FactorOp) -> &'static str {
    match op {
        FactorOp::Product => "mul",
        FactorOp::Pow(_) => "pow",
        FactorOp::Exp => "exp",
        FactorOp::Log => "log",
        FactorOp::Sqrt => "sqrt",
        FactorOp::Recip => "inv",
    }
}

/// `sum_k w_k * form_k + sum t <= rhs` with the forms' constants moved right.
fn combo_cut(
    model: &Model,
    parts: &[(f64, &LinearForm)],
    extra: &[(VarId, f64)],
    rhs: f64,
    source: String,
) -> LinearCut {
    let mut terms: Vec<(VarId, f64)> = extra.to_vec();
    let mut rhs = rhs;
    for (w, form) in parts {
        rhs -= w * form.constant;
        terms.extend(form.coeffs.iter().map(|(v, c)| (*v, w * c)));
    }
    LinearCut::from_terms(model, terms, rhs, CutKind::Envelope, source)
}

fn form_cut(model: &Model, form: &LinearForm, t: Option<VarId>, kind: CutKind, source: String) -> LinearCut {
    let mut terms: Vec<(VarId, f64)> = form.coeffs.iter().map(|(v, c)| (*v, *c)).collect();
    if let Some(t) = t {
        terms.push((t, -1.0));
    }
    LinearCut::from_terms(model, terms, -form.constant, kind, source)
}

fn product_cuts(model: &Model, f: &Factor, src: &str, out: &mut Vec<LinearCut>) {
    let (a, b) = (&f.args[0], &f.args[1]);
    let (al, au, bl, bu) = (f.arg_bounds[0].lo, f.arg_bounds[0].hi, f.arg_bounds[1].lo, f.arg_bounds[1].hi);
    let z = f.aux;
    // z >= bL a + aL b - aL bL ; z >= bU a + aU b - aU bU
    out.push(combo_cut(model, &[(bl, a), (al, b)], &[(z, -1.0)], al * bl, format!("{src}:lo1")));
    out.push(combo_cut(model, &[(bu, a), (au, b)], &[(z, -1.0)], au * bu, format!("{src}:lo2")));
    // z <= bL a + aU b - aU bL ; z <= bU a + aL b - aL bU
    out.push(combo_cut(model, &[(-bl, a), (-au, b)], &[(z, 1.0)], -au * bl, format!("{src}:up1")));
    out.push(combo_cut(model, &[(-bu, a), (-al, b)], &[(z, 1.0)], -al * bu, format!("{src}:up2")));
}

fn univariate_cuts(model: &Model, f: &Factor, u: Uni, args: &[f64], src: &str, out: &mut Vec<LinearCut>) {
    let Ok(env) = Envelope::new(u, f.arg_bounds[0]) else {
        return;
    };
    let (lo, hi) = (env.lo, env.hi);
    let mut ts = vec![lo, 0.5 * (lo + hi), hi];
    ts.extend(args.iter().map(|t| t.clamp(lo, hi)));
    let a = &f.args[0];
    let z = f.aux;
    let mut seen_lo: Vec<(u64, u64)> = Vec::new();
    let mut seen_hi: Vec<(u64, u64)> = Vec::new();
    for t in ts {
        let (v, m) = env.under(t);
        let c = v - m * t;
        if v.is_finite() && m.is_finite() && !seen_lo.contains(&(m.to_bits(), c.to_bits())) {
            seen_lo.push((m.to_bits(), c.to_bits()));
            // m a + c <= z
            out.push(combo_cut(model, &[(m, a)], &[(z, -1.0)], -c, format!("{src}:lo@{t}")));
        }
        let (v, m) = env.over(t);
        let c = v - m * t;
        if v.is_finite() && m.is_finite() && !seen_hi.contains(&(m.to_bits(), c.to_bits())) {
            seen_hi.push((m.to_bits(), c.to_bits()));
            out.push(combo_cut(model, &[(-m, a)], &[(z, 1.0)], c, format!("{src}:up@{t}")));
        }
    }
}

/// Aux columns and factor definitions for `model` over `bx`.
pub fn avm_decompose(model: &Model, bx: &VarBox) -> Result<Avm> {
    Avm::build(model, bx)
}

/// Envelope cuts of the decomposition of `model` over `bx`.
pub fn convexification_cuts(model: &Model, bx: &VarBox, points: &[Vec<f64>]) -> Result<Vec<LinearCut>> {
    Ok(Avm::build(model, bx)?.envelope_cuts(model, points))
}
