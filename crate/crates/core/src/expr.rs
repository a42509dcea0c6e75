//! Expression DAGs over model variables.
//!
//! An [`Expr`] stores its nodes in topological order (children precede parents,
//! root last). Structurally identical nodes are interned on construction, so a
//! subexpression that appears twice is stored once. Nodes whose children are
//! all constants are folded.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::interval::{Interval, VarBox};
use crate::model::VarId;

pub type NodeId = u32;

#[derive(Clone, Debug)]
pub enum Node {
    Const(f64),
    Var(VarId),
    /// `constant + sum(coef * child)`
    Sum {
        terms: Vec<(NodeId, f64)>,
        constant: f64,
    },
    Product(NodeId, NodeId),
    /// Integer power with exponent >= 2 (other exponents are normalized away).
    Power(NodeId, u32),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Negate(NodeId),
    Reciprocal(NodeId),
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        use Node::*;
        match (self, other) {
            (Const(a), Const(b)) => a.to_bits() == b.to_bits(),
            (Var(a), Var(b)) => a == b,
            (
                Sum {
                    terms: ta,
                    constant: ca,
                },
                Sum {
                    terms: tb,
                    constant: cb,
                },
            ) => {
                ca.to_bits() == cb.to_bits()
                    && ta.len() == tb.len()
                    && ta
                        .iter()
                        .zip(tb)
                        .all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits())
            }
            (Product(a, b), Product(c, d)) => a == c && b == d,
            (Power(a, n), Power(b, m)) => a == b && n == m,
            (Exp(a), Exp(b))
            | (Log(a), Log(b))
            | (Sqrt(a), Sqrt(b))
            | (Negate(a), Negate(b))
            | (Reciprocal(a), Reciprocal(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Node {}

impl Hash for Node {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Node::Const(c) => c.to_bits().hash(state),
            Node::Var(v) => v.hash(state),
            Node::Sum { terms, constant } => {
                constant.to_bits().hash(state);
                for (c, w) in terms {
                    c.hash(state);
                    w.to_bits().hash(state);
                }
            }
            Node::Product(a, b) => {
                a.hash(state);
                b.hash(state);
            }
            Node::Power(a, n) => {
                a.hash(state);
                n.hash(state);
            }
            Node::Exp(a) | Node::Log(a) | Node::Sqrt(a) | Node::Negate(a) | Node::Reciprocal(a) => {
                a.hash(state)
            }
        }
    }
}

impl Node {
    pub fn children(&self) -> Vec<NodeId> {
        match self {
            Node::Const(_) | Node::Var(_) => vec![],
            Node::Sum { terms, .. } => terms.iter().map(|t| t.0).collect(),
            Node::Product(a, b) => vec![*a, *b],
            Node::Power(a, _)
            | Node::Exp(a)
            | Node::Log(a)
            | Node::Sqrt(a)
            | Node::Negate(a)
            | Node::Reciprocal(a) => vec![*a],
        }
    }

    fn map_children(&self, f: impl Fn(NodeId) -> NodeId) -> Node {
        match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(v) => Node::Var(*v),
            Node::Sum { terms, constant } => Node::Sum {
                terms: terms.iter().map(|&(c, w)| (f(c), w)).collect(),
                constant: *constant,
            },
            Node::Product(a, b) => Node::Product(f(*a), f(*b)),
            Node::Power(a, n) => Node::Power(f(*a), *n),
            Node::Exp(a) => Node::Exp(f(*a)),
            Node::Log(a) => Node::Log(f(*a)),
            Node::Sqrt(a) => Node::Sqrt(f(*a)),
            Node::Negate(a) => Node::Negate(f(*a)),
            Node::Reciprocal(a) => Node::Reciprocal(f(*a)),
        }
    }
}

/// Leaf of an affine decomposition: a model variable or a nonlinear node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Var(VarId),
    Node(NodeId),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearForm {
    pub coeffs: BTreeMap<VarId, f64>,
    pub constant: f64,
}

impl LinearForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .coeffs
                .iter()
                .map(|(v, c)| c * x[v.index()])
                .sum::<f64>()
    }
}

#[derive(Clone)]
pub struct Expr {
    nodes: Vec<Node>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

struct Builder {
    nodes: Vec<Node>,
    index: HashMap<Node, NodeId>,
}

impl Builder {
    fn from_expr(e: Expr) -> Self {
        let index = e
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as NodeId))
            .collect();
        Builder {
            nodes: e.nodes,
            index,
        }
    }

    fn empty() -> Self {
        Builder {
            nodes: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn const_of(&self, id: NodeId) -> Option<f64> {
        match self.nodes[id as usize] {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    fn intern(&mut self, node: Node) -> NodeId {
        let node = self.fold(node);
        match self.index.entry(node) {
            Entry::Occupied(o) => *o.get(),
            Entry::Vacant(v) => {
                let id = self.nodes.len() as NodeId;
                self.nodes.push(v.key().clone());
                v.insert(id);
                id
            }
        }
    }

    fn fold(&self, node: Node) -> Node {
        let children = node.children();
        if children.is_empty() || !children.iter().all(|&c| self.const_of(c).is_some()) {
            return node;
        }
        let vals: Vec<f64> = (0..self.nodes.len())
            .map(|i| self.const_of(i as NodeId).unwrap_or(f64::NAN))
            .collect();
        match eval_node(&node, &vals) {
            Ok(v) if v.is_finite() => Node::Const(v),
            _ => node,
        }
    }

    fn append(&mut self, e: &Expr) -> NodeId {
        let mut map = Vec::with_capacity(e.nodes.len());
        for n in &e.nodes {
            let mapped = n.map_children(|c| map[c as usize]);
            map.push(self.intern(mapped));
        }
        *map.last().expect("expression has a root")
    }

    fn finish(mut self, root: NodeId) -> Expr {
        if root as usize + 1 == self.nodes.len() {
            return Expr { nodes: self.nodes };
        }
        // root is not last: keep only the sub-DAG reachable from root.
        let sub = Expr {
            nodes: std::mem::take(&mut self.nodes),
        };
        sub.subexpr(root)
    }
}

fn eval_node(node: &Node, vals: &[f64]) -> Result<f64> {
    let v = |i: &NodeId| vals[*i as usize];
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(_) => unreachable!("variables are evaluated by the caller"),
        Node::Sum { terms, constant } => constant + terms.iter().map(|(c, w)| w * v(c)).sum::<f64>(),
        Node::Product(a, b) => v(a) * v(b),
        Node::Power(a, n) => v(a).powi(*n as i32),
        Node::Exp(a) => v(a).exp(),
        Node::Log(a) => {
            let x = v(a);
            if x <= 0.0 {
                return Err(Error::Domain { op: "log", value: x });
            }
            x.ln()
        }
        Node::Sqrt(a) => {
            let x = v(a);
            if x < 0.0 {
                return Err(Error::Domain { op: "sqrt", value: x });
            }
            x.sqrt()
        }
        Node::Negate(a) => -v(a),
        Node::Reciprocal(a) => {
            let x = v(a);
            if x == 0.0 {
                return Err(Error::Domain {
                    op: "reciprocal",
                    value: x,
                });
            }
            1.0 / x
        }
    })
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr {
            nodes: vec![Node::Const(c)],
        }
    }

    pub fn var(id: VarId) -> Expr {
        Expr {
            nodes: vec![Node::Var(id)],
        }
    }

    /// `constant + sum(coef * expr)`.
    pub fn sum_of(terms: Vec<(Expr, f64)>, constant: f64) -> Expr {
        let mut b = Builder::empty();
        let mut merged: Vec<(NodeId, f64)> = Vec::with_capacity(terms.len());
        for (e, w) in &terms {
            let id = b.append(e);
            match merged.iter_mut().find(|t| t.0 == id) {
                Some(t) => t.1 += w,
                None => merged.push((id, *w)),
            }
        }
        if merged.is_empty() {
            return Expr::constant(constant);
        }
        let root = b.intern(Node::Sum {
            terms: merged,
            constant,
        });
        b.finish(root)
    }

    /// Affine expression over variables.
    pub fn linear(coeffs: &[(VarId, f64)], constant: f64) -> Expr {
        Expr::sum_of(
            coeffs.iter().map(|&(v, c)| (Expr::var(v), c)).collect(),
            constant,
        )
    }

    fn binary(a: Expr, b: &Expr, f: impl FnOnce(NodeId, NodeId) -> Node) -> Expr {
        let mut bld = Builder::from_expr(a);
        let ra = bld.nodes.len() as NodeId - 1;
        let rb = bld.append(b);
        let root = bld.intern(f(ra, rb));
        bld.finish(root)
    }

    fn unary(self, f: impl FnOnce(NodeId) -> Node) -> Expr {
        let mut bld = Builder::from_expr(self);
        let r = bld.nodes.len() as NodeId - 1;
        let root = bld.intern(f(r));
        bld.finish(root)
    }

    pub fn powi(self, n: i32) -> Expr {
        match n {
            0 => Expr::constant(1.0),
            1 => self,
            n if n < 0 => self.powi(-n).recip(),
            n => self.unary(|r| Node::Power(r, n as u32)),
        }
    }

    pub fn exp(self) -> Expr {
        self.unary(Node::Exp)
    }

    pub fn ln(self) -> Expr {
        self.unary(Node::Log)
    }

    pub fn sqrt(self) -> Expr {
        self.unary(Node::Sqrt)
    }

    pub fn recip(self) -> Expr {
        self.unary(Node::Reciprocal)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        (self.nodes.len() - 1) as NodeId
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.nodes.last() {
            Some(Node::Const(c)) => Some(*c),
            _ => None,
        }
    }

    /// Sub-DAG rooted at `node`, re-indexed.
    pub fn subexpr(&self, node: NodeId) -> Expr {
        let mut keep = vec![false; self.nodes.len()];
        keep[node as usize] = true;
        for i in (0..=node as usize).rev() {
            if keep[i] {
                for c in self.nodes[i].children() {
                    keep[c as usize] = true;
                }
            }
        }
        let mut map = vec![u32::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for i in 0..=node as usize {
            if keep[i] {
                map[i] = nodes.len() as NodeId;
                nodes.push(self.nodes[i].map_children(|c| map[c as usize]));
            }
        }
        Expr { nodes }
    }

    /// Point evaluation; `vals` receives every node value (caller-owned scratch).
    pub fn eval_into(&self, x: &[f64], vals: &mut Vec<f64>) -> Result<f64> {
        vals.clear();
        for node in &self.nodes {
            let v = match node {
                Node::Var(id) => x[id.index()],
                other => eval_node(other, vals)?,
            };
            vals.push(v);
        }
        Ok(*vals.last().unwrap())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut vals = Vec::with_capacity(self.nodes.len());
        self.eval_into(x, &mut vals)
    }

    /// Reverse-mode gradient. `grad` is overwritten with zeros first; returns the value.
    pub fn gradient_into(
        &self,
        x: &[f64],
        grad: &mut [f64],
        vals: &mut Vec<f64>,
        adj: &mut Vec<f64>,
    ) -> Result<f64> {
        let value = self.eval_into(x, vals)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        adj.clear();
        adj.resize(self.nodes.len(), 0.0);
        *adj.last_mut().unwrap() = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let v = |j: &NodeId| vals[*j as usize];
            match &self.nodes[i] {
                Node::Const(_) => {}
                Node::Var(id) => grad[id.index()] += a,
                Node::Sum { terms, .. } => {
                    for (c, w) in terms {
                        adj[*c as usize] += a * w;
                    }
                }
                Node::Product(l, r) => {
                    adj[*l as usize] += a * v(r);
                    adj[*r as usize] += a * v(l);
                }
                Node::Power(c, n) => {
                    adj[*c as usize] += a * (*n as f64) * v(c).powi(*n as i32 - 1);
                }
                Node::Exp(c) => adj[*c as usize] += a * vals[i],
                Node::Log(c) => adj[*c as usize] += a / v(c),
                Node::Sqrt(c) => {
                    if vals[i] == 0.0 {
                        return Err(Error::Domain {
                            op: "sqrt derivative",
                            value: 0.0,
                        });
                    }
                    adj[*c as usize] += a * 0.5 / vals[i];
                }
                Node::Negate(c) => adj[*c as usize] -= a,
                Node::Reciprocal(c) => adj[*c as usize] -= a * vals[i] * vals[i],
            }
        }
        Ok(value)
    }

    /// Dense gradient with one entry per variable of the point.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g, &mut Vec::new(), &mut Vec::new())?;
        Ok(g)
    }

    /// Natural interval extension; `out` receives every node enclosure.
    pub fn interval_eval_into(&self, bx: &VarBox, out: &mut Vec<Interval>) -> Result<Interval> {
        out.clear();
        for node in &self.nodes {
            let iv = interval_node(node, out, bx)?;
            out.push(iv);
        }
        Ok(*out.last().unwrap())
    }

    pub fn interval_eval(&self, bx: &VarBox) -> Result<Interval> {
        self.interval_eval_into(bx, &mut Vec::with_capacity(self.nodes.len()))
    }

    /// True for nodes that are not affine in their children.
    pub fn is_nonlinear_node(&self, id: NodeId) -> bool {
        match &self.nodes[id as usize] {
            Node::Const(_) | Node::Var(_) | Node::Sum { .. } | Node::Negate(_) => false,
            Node::Product(a, b) => {
                !matches!(self.node(*a), Node::Const(_)) && !matches!(self.node(*b), Node::Const(_))
            }
            _ => true,
        }
    }

    /// Affine decomposition of `node` over variables and nonlinear nodes.
    pub fn affine_decompose(&self, node: NodeId) -> (BTreeMap<Atom, f64>, f64) {
        let mut coeffs = BTreeMap::new();
        let mut constant = 0.0;
        self.affine_rec(node, 1.0, &mut coeffs, &mut constant);
        coeffs.retain(|_, c| *c != 0.0);
        (coeffs, constant)
    }

    fn affine_rec(&self, id: NodeId, w: f64, out: &mut BTreeMap<Atom, f64>, k: &mut f64) {
        if self.is_nonlinear_node(id) {
            *out.entry(Atom::Node(id)).or_insert(0.0) += w;
            return;
        }
        match &self.nodes[id as usize] {
            Node::Const(c) => *k += w * c,
            Node::Var(v) => *out.entry(Atom::Var(*v)).or_insert(0.0) += w,
            Node::Sum { terms, constant } => {
                *k += w * constant;
                for (c, cw) in terms {
                    self.affine_rec(*c, w * cw, out, k);
                }
            }
            Node::Negate(c) => self.affine_rec(*c, -w, out, k),
            Node::Product(a, b) => match (self.node(*a), self.node(*b)) {
                (Node::Const(c), _) => self.affine_rec(*b, w * c, out, k),
                (_, Node::Const(c)) => self.affine_rec(*a, w * c, out, k),
                _ => unreachable!(),
            },
            _ => unreachable!(),
        }
    }

    /// `Some` when the whole expression is affine in the variables.
    pub fn linear_form(&self) -> Option<LinearForm> {
        let (atoms, constant) = self.affine_decompose(self.root());
        let mut coeffs = BTreeMap::new();
        for (a, c) in atoms {
            match a {
                Atom::Var(v) => {
                    coeffs.insert(v, c);
                }
                Atom::Node(_) => return None,
            }
        }
        Some(LinearForm { coeffs, constant })
    }

    pub fn is_linear(&self) -> bool {
        self.linear_form().is_some()
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Var(v) => Some(*v),
                _ => None,
            })
            .collect()
    }

    /// Variables reachable from some nonlinear node.
    pub fn nonlinear_variables(&self) -> BTreeSet<VarId> {
        let mut mark = vec![false; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            if self.is_nonlinear_node(i as NodeId) {
                mark[i] = true;
            }
            if mark[i] {
                for c in self.nodes[i].children() {
                    mark[c as usize] = true;
                }
            }
        }
        self.nodes
            .iter()
            .zip(&mark)
            .filter_map(|(n, m)| match n {
                Node::Var(v) if *m => Some(*v),
                _ => None,
            })
            .collect()
    }

    pub fn max_var_index(&self) -> Option<usize> {
        self.variables().iter().map(|v| v.index()).max()
    }

    /// Renames variables through `map`.
    pub fn remap_vars(&self, map: impl Fn(VarId) -> VarId) -> Expr {
        let mut b = Builder::empty();
        let mut ids = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let mapped = match n {
                Node::Var(v) => Node::Var(map(*v)),
                other => other.map_children(|c| ids[c as usize]),
            };
            ids.push(b.intern(mapped));
        }
        b.finish(*ids.last().unwrap())
    }

    /// Replaces each variable for which `sub` returns an expression.
    pub fn substitute(&self, sub: &dyn Fn(VarId) -> Option<Expr>) -> Expr {
        let mut b = Builder::empty();
        let mut ids: Vec<NodeId> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let id = match n {
                Node::Var(v) => match sub(*v) {
                    Some(e) => b.append(&e),
                    None => b.intern(Node::Var(*v)),
                },
                other => b.intern(other.map_children(|c| ids[c as usize])),
            };
            ids.push(id);
        }
        b.finish(*ids.last().unwrap())
    }

    fn fmt_node(&self, id: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.nodes[id as usize] {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(v) => write!(f, "v{}", v.index()),
            Node::Sum { terms, constant } => {
                write!(f, "(")?;
                for (i, (c, w)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    if *w != 1.0 {
                        write!(f, "{w}*")?;
                    }
                    self.fmt_node(*c, f)?;
                }
                if *constant != 0.0 {
                    write!(f, " + {constant}")?;
                }
                write!(f, ")")
            }
            Node::Product(a, b) => {
                self.fmt_node(*a, f)?;
                write!(f, "*")?;
                self.fmt_node(*b, f)
            }
            Node::Power(a, n) => {
                self.fmt_node(*a, f)?;
                write!(f, "^{n}")
            }
            Node::Exp(a) => self.fmt_call("exp", *a, f),
            Node::Log(a) => self.fmt_call("log", *a, f),
            Node::Sqrt(a) => self.fmt_call("sqrt", *a, f),
            Node::Negate(a) => {
                write!(f, "-")?;
                self.fmt_node(*a, f)
            }
            Node::Reciprocal(a) => {
                write!(f, "1/")?;
                self.fmt_node(*a, f)
            }
        }
    }

    fn fmt_call(&self, name: &str, a: NodeId, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{name}(")?;
        self.fmt_node(a, f)?;
        write!(f, ")")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_node(self.root(), f)
    }
}

fn interval_node(node: &Node, ivs: &[Interval], bx: &VarBox) -> Result<Interval> {
    let iv = |i: &NodeId| ivs[*i as usize];
    Ok(match node {
        Node::Const(c) => Interval::point(*c),
        Node::Var(v) => bx[*v],
        Node::Sum { terms, constant } => {
            let mut acc = Interval::point(*constant);
            for (c, w) in terms {
                acc = acc.add(&iv(c).scale(*w));
            }
            acc
        }
        Node::Product(a, b) => {
            if a == b {
                iv(a).powi(2)
            } else {
                iv(a).mul(&iv(b))
            }
        }
        Node::Power(a, n) => iv(a).powi(*n),
        Node::Exp(a) => iv(a).exp(),
        Node::Log(a) => iv(a).ln().ok_or(Error::EmptyDomain {
            op: "log",
            interval: iv(a),
        })?,
        Node::Sqrt(a) => iv(a).sqrt().ok_or(Error::EmptyDomain {
            op: "sqrt",
            interval: iv(a),
        })?,
        Node::Negate(a) => iv(a).neg(),
        Node::Reciprocal(a) => iv(a).recip().ok_or(Error::EmptyDomain {
            op: "reciprocal",
            interval: iv(a),
        })?,
    })
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::binary(self, &rhs, |a, b| Node::Sum {
            terms: if a == b {
                vec![(a, 2.0)]
            } else {
                vec![(a, 1.0), (b, 1.0)]
            },
            constant: 0.0,
        })
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::binary(self, &rhs, |a, b| {
            if a == b {
                Node::Const(0.0)
            } else {
                Node::Sum {
                    terms: vec![(a, 1.0), (b, -1.0)],
                    constant: 0.0,
                }
            }
        })
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::binary(self, &rhs, Node::Product)
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        self * rhs.recip()
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.unary(Node::Negate)
    }
}

impl Add<f64> for Expr {
    type Output = Expr;
    fn add(self, c: f64) -> Expr {
        self.unary(|r| Node::Sum {
            terms: vec![(r, 1.0)],
            constant: c,
        })
    }
}

impl Sub<f64> for Expr {
    type Output = Expr;
    fn sub(self, c: f64) -> Expr {
        self + (-c)
    }
}

impl Mul<f64> for Expr {
    type Output = Expr;
    fn mul(self, c: f64) -> Expr {
        self.unary(|r| Node::Sum {
            terms: vec![(r, c)],
            constant: 0.0,
        })
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, e: Expr) -> Expr {
        e * self
    }
}
