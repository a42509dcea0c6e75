//! Model files: JSON with tagged expression trees.
//!
//! ```json
//! {"name": "demo",
//!  "variables": [{"name": "x", "domain": "continuous", "lb": 0, "ub": "inf"}],
//!  "objective": {"op": "pow", "args": [{"op": "var", "name": "x"}], "exponent": 2},
//!  "constraints": [{"expr": {"op": "var", "name": "x"}, "sense": "<=", "rhs": 3}]}
//! ```
//!
//! Operators: `add`, `mul` (n-ary), `pow` (integer `exponent`), `exp`, `log`,
//! `sqrt`, `neg`, `inv`, `var` (`name`), `const` (`value`). Infinite bounds are
//! the strings `"inf"` / `"-inf"`. The optional `"convex": true` declares the
//! model convex.

use std::collections::HashMap;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::expr::{Expr, Node, NodeId};
use crate::model::{Model, ModelBuilder, Sense, VarDomain, VarId};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

fn parse_bound(v: Option<&Value>, default: f64, what: &str) -> Result<f64> {
    match v {
        None | Some(Value::Null) => Ok(default),
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| invalid(format!("bad {what}"))),
        Some(Value::String(s)) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(invalid(format!("bad {what} `{other}`"))),
        },
        Some(other) => Err(invalid(format!("bad {what} `{other}`"))),
    }
}

fn bound_json(v: f64) -> Value {
    if v == f64::INFINITY {
        json!("inf")
    } else if v == f64::NEG_INFINITY {
        json!("-inf")
    } else {
        json!(v)
    }
}

fn args<'a>(obj: &'a Map<String, Value>, op: &str) -> Result<&'a Vec<Value>> {
    obj.get("args")
        .and_then(Value::as_array)
        .ok_or_else(|| invalid(format!("`{op}` node needs an `args` array")))
}

fn single_arg(obj: &Map<String, Value>, op: &str, names: &HashMap<String, VarId>) -> Result<Expr> {
    let a = args(obj, op)?;
    if a.len() != 1 {
        return Err(invalid(format!("`{op}` takes one argument, got {}", a.len())));
    }
    parse_expr(&a[0], names)
}

pub fn parse_expr(v: &Value, names: &HashMap<String, VarId>) -> Result<Expr> {
    let obj = v
        .as_object()
        .ok_or_else(|| invalid(format!("expression node must be an object, got {v}")))?;
    let op = obj
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("expression node without `op`"))?;
    match op {
        "const" => obj
            .get("value")
            .and_then(Value::as_f64)
            .map(Expr::constant)
            .ok_or_else(|| invalid("`const` needs a numeric `value`")),
        "var" => {
            let name = obj
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| invalid("`var` needs a `name`"))?;
            names
                .get(name)
                .map(|&id| Expr::var(id))
                .ok_or_else(|| invalid(format!("unknown variable `{name}`")))
        }
        "add" => {
            let terms = args(obj, op)?
                .iter()
                .map(|a| parse_expr(a, names).map(|e| (e, 1.0)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Expr::sum_of(terms, 0.0))
        }
        "mul" => {
            let mut it = args(obj, op)?.iter();
            let first = it.next().ok_or_else(|| invalid("`mul` needs arguments"))?;
            let mut acc = parse_expr(first, names)?;
            for a in it {
                acc = acc * parse_expr(a, names)?;
            }
            Ok(acc)
        }
        "pow" => {
            let base = single_arg(obj, op, names)?;
            let n = obj
                .get("exponent")
                .and_then(Value::as_i64)
                .ok_or_else(|| invalid("`pow` needs an integer `exponent`"))?;
            Ok(base.powi(n as i32))
        }
        "exp" => Ok(single_arg(obj, op, names)?.exp()),
        "log" => Ok(single_arg(obj, op, names)?.ln()),
        "sqrt" => Ok(single_arg(obj, op, names)?.sqrt()),
        "neg" => Ok(-single_arg(obj, op, names)?),
        "inv" => Ok(single_arg(obj, op, names)?.recip()),
        other => Err(invalid(format!("unknown operator `{other}`"))),
    }
}

pub fn parse_model(text: &str) -> Result<Model> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = root.as_object().ok_or_else(|| invalid("top level must be an object"))?;
    let name = obj.get("name").and_then(Value::as_str).unwrap_or("model");
    let mut b = ModelBuilder::new(name);
    let mut names = HashMap::new();
    let vars = obj
        .get("variables")
        .and_then(Value::as_array)
        .ok_or_else(|| invalid("missing `variables` array"))?;
    for v in vars {
        let vname = v
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| invalid("variable without `name`"))?;
        let domain = match v.get("domain").and_then(Value::as_str).unwrap_or("continuous") {
            "continuous" => VarDomain::Continuous,
            "integer" => VarDomain::Integer,
            "binary" => VarDomain::Binary,
            other => return Err(invalid(format!("unknown domain `{other}`"))),
        };
        let (dl, du) = match domain {
            VarDomain::Binary => (0.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let lb = parse_bound(v.get("lb"), dl, "lb")?;
        let ub = parse_bound(v.get("ub"), du, "ub")?;
        if names.contains_key(vname) {
            return Err(invalid(format!("duplicate variable `{vname}`")));
        }
        let id = b.add_var(vname, domain, lb, ub);
        names.insert(vname.to_string(), id);
    }
    if let Some(o) = obj.get("objective") {
        b.minimize(parse_expr(o, &names)?);
    }
    if let Some(rows) = obj.get("constraints") {
        let rows = rows
            .as_array()
            .ok_or_else(|| invalid("`constraints` must be an array"))?;
        for (i, r) in rows.iter().enumerate() {
            let expr = parse_expr(
                r.get("expr")
                    .ok_or_else(|| invalid(format!("constraint {i} without `expr`")))?,
                &names,
            )?;
            let rhs = r.get("rhs").and_then(Value::as_f64).unwrap_or(0.0);
            let (body, sense) = match r.get("sense").and_then(Value::as_str).unwrap_or("<=") {
                "<=" => (expr - rhs, Sense::Leq),
                ">=" => (Expr::constant(rhs) - expr, Sense::Leq),
                "=" | "==" => (expr - rhs, Sense::Eq),
                other => return Err(invalid(format!("unknown sense `{other}`"))),
            };
            let rname = r
                .get("name")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("c{i}"));
            b.named_constraint(rname, body, sense);
        }
    }
    if obj.get("convex").and_then(Value::as_bool).unwrap_or(false) {
        b.declare_convex();
    }
    b.build()
}

fn node_json(e: &Expr, id: NodeId, model: &Model) -> Value {
    let sub = |c: NodeId| node_json(e, c, model);
    match e.node(id) {
        Node::Const(c) => json!({"op": "const", "value": c}),
        Node::Var(v) => json!({"op": "var", "name": model.var(*v).name}),
        Node::Sum { terms, constant } => {
            let mut a: Vec<Value> = terms
                .iter()
                .map(|&(c, w)| {
                    if w == 1.0 {
                        sub(c)
                    } else {
                        json!({"op": "mul", "args": [{"op": "const", "value": w}, sub(c)]})
                    }
                })
                .collect();
            if *constant != 0.0 {
                a.push(json!({"op": "const", "value": constant}));
            }
            json!({"op": "add", "args": a})
        }
        Node::Product(a, b) => json!({"op": "mul", "args": [sub(*a), sub(*b)]}),
        Node::Power(a, n) => json!({"op": "pow", "args": [sub(*a)], "exponent": n}),
        Node::Exp(a) => json!({"op": "exp", "args": [sub(*a)]}),
        Node::Log(a) => json!({"op": "log", "args": [sub(*a)]}),
        Node::Sqrt(a) => json!({"op": "sqrt", "args": [sub(*a)]}),
        Node::Negate(a) => json!({"op": "neg", "args": [sub(*a)]}),
        Node::Reciprocal(a) => json!({"op": "inv", "args": [sub(*a)]}),
    }
}

pub fn expr_to_json(e: &Expr, model: &Model) -> Value {
    node_json(e, e.root(), model)
}

/// Serializes a built model. Split equality rows are written as two `<=` rows.
pub fn model_to_json(model: &Model) -> Value {
    let vars: Vec<Value> = model
        .variables
        .iter()
        .map(|v| {
            let domain = match v.domain {
                VarDomain::Continuous => "continuous",
                VarDomain::Integer => "integer",
                VarDomain::Binary => "binary",
            };
            json!({"name": v.name, "domain": domain, "lb": bound_json(v.lower), "ub": bound_json(v.upper)})
        })
        .collect();
    let rows: Vec<Value> = model
        .constraints
        .iter()
        .map(|c| json!({"name": c.name, "expr": expr_to_json(&c.body, model), "sense": "<=", "rhs": 0.0}))
        .collect();
    let mut out = json!({
        "name": model.name,
        "variables": vars,
        "objective": expr_to_json(&model.objective, model),
        "constraints": rows,
    });
    if model.convexity == crate::model::Convexity::DeclaredConvex {
        out["convex"] = json!(true);
    }
    out
}
