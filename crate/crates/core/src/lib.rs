//! Outer-approximation and LP/NLP-based branch-and-bound solvers for
//! mixed-integer nonlinear programs, with convexification cuts and bound
//! tightening applied when the algorithms start.

pub mod error;
pub mod expr;
pub mod interval;
pub mod json;
pub mod lp;
pub mod model;
pub mod nlp;
pub mod oa;
pub mod presolve;
pub mod relax;
pub mod testing;

pub use error::{Error, Result};
pub use expr::Expr;
pub use interval::{Interval, VarBox};
pub use model::{Assignment, Convexity, FeasibilityNorm, Model, ModelBuilder, Point, Sense, VarDomain, VarId};
