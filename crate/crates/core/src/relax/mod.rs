//! Convex relaxations: McCormick propagation, affine estimators, and the
//! auxiliary-variable envelope cut pool.

mod avm;
mod cuts;
mod mccormick;

pub use avm::{avm_decompose, convexification_cuts, Avm, Factor, FactorOp, LiftedRow};
pub use cuts::{affine_overestimator, affine_underestimator, no_good_cut, AffineEstimator, CutKind, LinearCut};
pub use mccormick::{check_finite, mccormick_eval, McCormickValue};
