use crate::model::{Model, VarId};
use crate::relax::{affine_underestimator, CutKind, LinearCut};

/// Linearizations of every nonlinear row at `point`.
///
/// With `convex_mode` these are first-order Taylor cuts; otherwise affine
/// McCormick underestimators over the model's box, valid without convexity.
/// Row `objective_row` (the epigraph row `f - mu <= 0`) yields objective cuts.
/// Rows whose derivative or relaxation is undefined at `point` are skipped.
pub fn oa_cuts(model: &Model, objective_row: Option<usize>, point: &[f64], convex_mode: bool) -> Vec<LinearCut> {
    let bx = model.bounds();
    let mut out = Vec::new();
    for (j, c) in model.constraints.iter().enumerate() {
        if c.is_linear {
            continue;
        }
        let kind = if Some(j) == objective_row {
            CutKind::OAObjective
        } else {
            CutKind::OAConstraint
        };
        let (terms, rhs): (Vec<(VarId, f64)>, f64) = if convex_mode {
            let grad = match c.body.gradient(point) {
                Ok(g) => g,
                Err(e) => {
                    log::warn!("no cut for row `{}`: {e}", c.name);
                    continue;
                }
            };
            let value = c.body.eval(point).expect("value exists where the gradient does");
            let rhs = grad.iter().zip(point).map(|(g, p)| g * p).sum::<f64>() - value;
            let terms = grad
                .iter()
                .enumerate()
                .map(|(i, g)| (VarId(i as u32), *g))
                .collect();
            (terms, rhs)
        } else {
            match affine_underestimator(&c.body, &bx, point) {
                Ok(est) => (est.coeffs.into_iter().collect(), -est.constant),
                Err(e) => {
                    log::warn!("no estimator for row `{}`: {e}", c.name);
                    continue;
                }
            }
        };
        let source = format!("oa:{}", c.name);
        let cut = LinearCut::from_terms(model, terms, rhs, kind, &source);
        if cut.is_finite() {
            out.push(cut);
        }
    }
    out
}
