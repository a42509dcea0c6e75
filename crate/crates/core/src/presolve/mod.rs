//! Domain reduction: FBBT, OBBT and the presolve pipeline run before the
//! outer-approximation loop starts.

mod fbbt;
mod obbt;

pub use fbbt::{fbbt, fbbt_traced, FbbtOptions, Tightening};
pub use obbt::{nonlinear_targets, obbt, relaxation_lp};

use std::io::Write;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::interval::VarBox;
use crate::model::{Model, VarId};
use crate::relax::{Avm, LinearCut};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresolveStatus {
    Tightened,
    ProvenInfeasible,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PresolveStats {
    pub passes: usize,
    pub lp_count: usize,
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct PresolveResult {
    /// Tightened bounds over the model's own variables.
    pub tightened: VarBox,
    /// Envelope cuts and lifted rows over the final box.
    pub cuts: Vec<LinearCut>,
    /// Decomposition the cuts refer to.
    pub avm: Avm,
    pub status: PresolveStatus,
    pub stats: PresolveStats,
}

impl PresolveResult {
    pub fn is_infeasible(&self) -> bool {
        self.status == PresolveStatus::ProvenInfeasible
    }

    /// Tightened box extended with the auxiliary column bounds.
    pub fn lifted_box(&self) -> VarBox {
        self.avm.lifted_box(&self.tightened)
    }
}

#[derive(Default)]
pub struct PresolveOptions {
    pub fbbt: FbbtOptions,
    pub obbt: bool,
    /// OBBT targets; `None` means the variables in nonlinear terms.
    pub targets: Option<Vec<VarId>>,
    /// JSON lines per FBBT pass.
    pub trace: Option<Box<dyn Write>>,
}

impl PresolveOptions {
    pub fn new() -> Self {
        PresolveOptions {
            obbt: true,
            ..Default::default()
        }
    }
}

/// FBBT, then envelope cuts on the tightened box, then OBBT over the cut LP,
/// then one more FBBT pass; cuts are rebuilt on the final box.
pub fn presolve(model: &Model, opts: &mut PresolveOptions) -> Result<PresolveResult> {
    let start = Instant::now();
    let mut stats = PresolveStats::default();
    let original = model.bounds();
    let infeasible = |bx: VarBox, mut stats: PresolveStats| {
        stats.wall_time = start.elapsed();
        Ok(PresolveResult {
            avm: Avm::build_partial(model, &bx),
            tightened: bx,
            cuts: Vec::new(),
            status: PresolveStatus::ProvenInfeasible,
            stats,
        })
    };

    let trace = opts.trace.as_mut().map(|w| w.as_mut() as &mut dyn Write);
    let (t, passes) = fbbt_traced(model, &original, opts.fbbt, trace);
    stats.passes += passes;
    let Some(mut bx) = t.into_box() else {
        return infeasible(original, stats);
    };

    if opts.obbt {
        let avm = Avm::build_partial(model, &bx);
        let cuts = avm.envelope_cuts(model, &[]);
        let targets = opts.targets.clone().unwrap_or_else(|| nonlinear_targets(model));
        if !targets.is_empty() {
            let (t, count) = obbt(model, &cuts, &avm.lifted_box(&bx), &targets)?;
            stats.lp_count += count;
            match t.into_box() {
                Some(mut lifted) => {
                    lifted.truncate(model.num_vars());
                    bx = lifted;
                }
                None => return infeasible(bx, stats),
            }
        }
        let one = FbbtOptions {
            max_passes: 1,
            ..opts.fbbt
        };
        let trace = opts.trace.as_mut().map(|w| w.as_mut() as &mut dyn Write);
        let (t, passes) = fbbt_traced(model, &bx, one, trace);
        stats.passes += passes;
        match t.into_box() {
            Some(b) => bx = b,
            None => return infeasible(bx, stats),
        }
    }

    let avm = Avm::build_partial(model, &bx);
    let cuts = avm.envelope_cuts(model, &[]);
    stats.wall_time = start.elapsed();
    Ok(PresolveResult {
        tightened: bx,
        cuts,
        avm,
        status: PresolveStatus::Tightened,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::interval::Interval;
    use crate::model::ModelBuilder;

    #[test]
    fn linear_model_has_no_cuts() {
        let mut b = ModelBuilder::new("lin");
        let x = b.continuous("x", 0.0, 10.0);
        let y = b.continuous("y", 2.0, 10.0);
        b.minimize(Expr::var(x)).leq(Expr::var(x) + Expr::var(y), 5.0);
        let m = b.build().unwrap();
        let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
        assert_eq!(r.status, PresolveStatus::Tightened);
        assert!(r.cuts.is_empty());
        assert_eq!(r.tightened[x], Interval::new(0.0, 3.0));
    }

    #[test]
    fn bilinear_unit_box_planes() {
        let mut b = ModelBuilder::new("bil");
        let x = b.continuous("x", 0.0, 1.0);
        let y = b.continuous("y", 0.0, 1.0);
        b.minimize(Expr::var(x) * Expr::var(y));
        let m = b.build().unwrap();
        let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
        let planes: Vec<_> = r.cuts.iter().filter(|c| c.source.contains(":lo") || c.source.contains(":up")).collect();
        assert_eq!(planes.len(), 4);
        assert_eq!(r.avm.num_aux(), 1);
    }

    #[test]
    fn infeasible_short_circuits() {
        let mut b = ModelBuilder::new("inf");
        let x = b.continuous("x", -1.0, 1.0);
        b.minimize(Expr::var(x)).geq(Expr::var(x).powi(2), 4.0);
        let m = b.build().unwrap();
        let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
        assert!(r.is_infeasible());
        assert!(r.cuts.is_empty());
    }
}
