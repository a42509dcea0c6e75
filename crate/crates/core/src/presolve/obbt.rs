//! Bound tightening by optimizing each variable over a linear relaxation.

use crate::error::Result;
use crate::interval::{Interval, VarBox};
use crate::lp::{LinearProgram, LpStatus, Row, Simplex};
use crate::model::{Model, VarId};
use crate::relax::LinearCut;

use super::fbbt::{round_integers, Tightening};

/// Linear rows of `model`, the cuts, and `bx` as one LP. Columns beyond the
/// model's variables come from `bx` (auxiliary columns of lifted cuts).
pub fn relaxation_lp(model: &Model, cuts: &[LinearCut], bx: &VarBox) -> LinearProgram {
    let mut lp = LinearProgram::new(bx.clone());
    for c in model.constraints.iter().filter(|c| c.is_linear) {
        let Some(form) = c.body.linear_form() else { continue };
        let coeffs = form.coeffs.iter().map(|(v, a)| (v.index(), *a)).collect();
        lp.add_row(Row::le(coeffs, -form.constant));
    }
    for cut in cuts {
        if cut.max_var_index().map_or(true, |i| i < bx.len()) {
            lp.add_cut(cut);
        }
    }
    lp
}

/// Variables that occur inside a nonlinear term of the objective or a row.
pub fn nonlinear_targets(model: &Model) -> Vec<VarId> {
    let mut set = model.objective.nonlinear_variables();
    for c in model.nonlinear_rows() {
        set.extend(c.body.nonlinear_variables());
    }
    set.into_iter().collect()
}

const WIDEN: f64 = 1e-9;

/// Minimizes and maximizes each target over the relaxation of `bx`; bounds
/// only ever shrink. `bx` may be a lifted box when `cuts` mention auxiliary
/// columns. Returns the tightened box and the number of LPs solved.
pub fn obbt(model: &Model, cuts: &[LinearCut], bx: &VarBox, targets: &[VarId]) -> Result<(Tightening, usize)> {
    let lp = relaxation_lp(model, cuts, bx);
    let mut simplex = Simplex::new(&lp);
    let mut lp_count = 1;
    match simplex.solve()? {
        LpStatus::Infeasible => return Ok((Tightening::ProvenInfeasible, lp_count)),
        LpStatus::Optimal | LpStatus::Unbounded => {}
    }
    let mut out = bx.clone();
    let mut obj = vec![0.0; lp.num_cols];
    for &v in targets {
        let j = v.index();
        for dir in [1.0, -1.0] {
            obj[j] = dir;
            simplex.set_objective(&obj);
            lp_count += 1;
            let status = simplex.solve();
            obj[j] = 0.0;
            match status {
                Ok(LpStatus::Optimal) => {
                    let val = simplex.primal_values()[j];
                    let slack = WIDEN * (1.0 + val.abs());
                    let cur = out[j];
                    let next = if dir > 0.0 {
                        Interval::checked(cur.lo.max(val - slack), cur.hi)
                    } else {
                        Interval::checked(cur.lo, cur.hi.min(val + slack))
                    };
                    // a crossing means the LP disagrees with the box by more
                    // than its tolerance; keep the box
                    if let Some(iv) = next {
                        out[j] = iv;
                    }
                }
                Ok(LpStatus::Infeasible) => return Ok((Tightening::ProvenInfeasible, lp_count)),
                Ok(LpStatus::Unbounded) | Err(_) => {
                    // the basis may be unusable after a failure
                    simplex = Simplex::new(&lp);
                }
            }
        }
    }
    let mut original = out.clone();
    original.truncate(model.num_vars());
    if !round_integers(model, &mut original) {
        return Ok((Tightening::ProvenInfeasible, lp_count));
    }
    for i in 0..model.num_vars() {
        out[i] = original[i];
    }
    Ok((Tightening::Tightened(out), lp_count))
}
