//! McCormick relaxations with subgradient propagation.
//!
//! Each node carries an enclosure, a convex underestimator value `cv`, a
//! concave overestimator value `cc`, and subgradients of both at the
//! evaluation point. Univariate nodes use the composition rule
//! `cv = u(mid(cv_c, cc_c, x_min))`, `cc = o(mid(cv_c, cc_c, x_max))` where `u`/`o`
//! are the convex/concave envelopes of the function over the child's enclosure.
//! Products use the bilinear envelopes composed with the factor relaxations.

use crate::error::{Error, Result};
use crate::expr::{Expr, Node};
use crate::interval::{Interval, VarBox};
use crate::model::VarId;

#[derive(Clone, Debug, PartialEq)]
pub struct McCormickValue {
    pub iv: Interval,
    pub cv: f64,
    pub cc: f64,
    pub cv_sub: Vec<f64>,
    pub cc_sub: Vec<f64>,
}

impl McCormickValue {
    fn constant(c: f64, n: usize) -> Self {
        McCormickValue {
            iv: Interval::point(c),
            cv: c,
            cc: c,
            cv_sub: vec![0.0; n],
            cc_sub: vec![0.0; n],
        }
    }

    /// Value at `q` of the affine underestimator built at `point`.
    pub fn under_at(&self, point: &[f64], q: &[f64]) -> f64 {
        self.cv + dot_diff(&self.cv_sub, q, point)
    }

    /// Value at `q` of the affine overestimator built at `point`.
    pub fn over_at(&self, point: &[f64], q: &[f64]) -> f64 {
        self.cc + dot_diff(&self.cc_sub, q, point)
    }
}

fn dot_diff(s: &[f64], q: &[f64], p: &[f64]) -> f64 {
    s.iter()
        .zip(q.iter().zip(p))
        .map(|(si, (qi, pi))| si * (qi - pi))
        .sum()
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    if a == 0.0 {
        return;
    }
    for (o, xi) in out.iter_mut().zip(x) {
        *o += a * xi;
    }
}

fn scaled(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

/// A univariate function restricted to an interval, with its convex
/// underestimator `u` and concave overestimator `o`.
pub(crate) struct Envelope {
    pub lo: f64,
    pub hi: f64,
    kind: EnvKind,
}

#[derive(Clone, Copy)]
enum EnvKind {
    /// convex function; `argmin` is where it is smallest on the interval
    Convex { f: Uni, argmin: f64 },
    Concave { f: Uni, argmax: f64 },
    /// odd power on an interval straddling zero
    OddMixed { n: u32, under_tangent: f64, over_tangent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Uni {
    Pow(u32),
    Exp,
    Log,
    Sqrt,
    Recip,
}

impl Uni {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Uni::Pow(n) => x.powi(n as i32),
            Uni::Exp => x.exp(),
            Uni::Log => x.ln(),
            Uni::Sqrt => x.max(0.0).sqrt(),
            Uni::Recip => 1.0 / x,
        }
    }

    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Uni::Pow(n) => n as f64 * x.powi(n as i32 - 1),
            Uni::Exp => x.exp(),
            Uni::Log => 1.0 / x,
            Uni::Sqrt => 0.5 / x.max(0.0).sqrt(),
            Uni::Recip => -1.0 / (x * x),
        }
    }
}

/// Root in (0, 1) of `(n-1) t^n + n t^(n-1) - 1`; the tangency ratio of the
/// convex envelope of an odd power on `[-1, u]`.
fn odd_tangent_ratio(n: u32) -> f64 {
    let f = |t: f64| (n - 1) as f64 * t.powi(n as i32) + n as f64 * t.powi(n as i32 - 1) - 1.0;
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

impl Envelope {
    /// Envelope of `f` over `dom`, or an error if it is unbounded there.
    pub fn new(f: Uni, dom: Interval) -> Result<Envelope> {
        let (lo, hi) = (dom.lo, dom.hi);
        let unbounded = || Error::UnboundedBox(format!("argument interval {dom}"));
        if !dom.is_finite() {
            return Err(unbounded());
        }
        let kind = match f {
            Uni::Pow(n) if n % 2 == 0 => EnvKind::Convex {
                f,
                argmin: dom.clamp(0.0),
            },
            Uni::Pow(n) => {
                if lo >= 0.0 {
                    EnvKind::Convex { f, argmin: lo }
                } else if hi <= 0.0 {
                    EnvKind::Concave { f, argmax: hi }
                } else {
                    let t = odd_tangent_ratio(n);
                    EnvKind::OddMixed {
                        n,
                        under_tangent: -lo * t,
                        over_tangent: -hi * t,
                    }
                }
            }
            Uni::Exp => EnvKind::Convex { f, argmin: lo },
            Uni::Log => {
                if lo <= 0.0 {
                    return Err(unbounded());
                }
                EnvKind::Concave { f, argmax: hi }
            }
            Uni::Sqrt => {
                if hi < 0.0 {
                    return Err(Error::EmptyDomain {
                        op: "sqrt",
                        interval: dom,
                    });
                }
                return Ok(Envelope {
                    lo: lo.max(0.0),
                    hi,
                    kind: EnvKind::Concave { f, argmax: hi },
                });
            }
            Uni::Recip => {
                if lo > 0.0 {
                    EnvKind::Convex { f, argmin: hi }
                } else if hi < 0.0 {
                    EnvKind::Concave { f, argmax: lo }
                } else {
                    return Err(unbounded());
                }
            }
        };
        Ok(Envelope { lo, hi, kind })
    }

    fn secant(&self, f: Uni, x: f64) -> (f64, f64) {
        let (fl, fh) = (f.value(self.lo), f.value(self.hi));
        if self.hi == self.lo {
            return (fl, 0.0);
        }
        let m = (fh - fl) / (self.hi - self.lo);
        (fl + m * (x - self.lo), m)
    }

    /// Convex underestimator and its slope at `x`.
    pub fn under(&self, x: f64) -> (f64, f64) {
        match self.kind {
            EnvKind::Convex { f, .. } => (f.value(x), f.deriv(x)),
            EnvKind::Concave { f, .. } => self.secant(f, x),
            EnvKind::OddMixed { n, under_tangent: c, .. } => {
                let f = Uni::Pow(n);
                if c >= self.hi {
                    self.secant(f, x)
                } else if x >= c {
                    (f.value(x), f.deriv(x))
                } else {
                    let m = f.deriv(c);
                    (f.value(c) + m * (x - c), m)
                }
            }
        }
    }

    /// Concave overestimator and its slope at `x`.
    pub fn over(&self, x: f64) -> (f64, f64) {
        match self.kind {
            EnvKind::Convex { f, .. } => self.secant(f, x),
            EnvKind::Concave { f, .. } => (f.value(x), f.deriv(x)),
            EnvKind::OddMixed { n, over_tangent: d, .. } => {
                let f = Uni::Pow(n);
                if d <= self.lo {
                    self.secant(f, x)
                } else if x <= d {
                    (f.value(x), f.deriv(x))
                } else {
                    let m = f.deriv(d);
                    (f.value(d) + m * (x - d), m)
                }
            }
        }
    }

    fn argmin_under(&self) -> f64 {
        match self.kind {
            EnvKind::Convex { argmin, .. } => argmin,
            EnvKind::Concave { f, .. } => {
                if f.value(self.lo) <= f.value(self.hi) {
                    self.lo
                } else {
                    self.hi
                }
            }
            EnvKind::OddMixed { .. } => self.lo,
        }
    }

    fn argmax_over(&self) -> f64 {
        match self.kind {
            EnvKind::Concave { argmax, .. } => argmax,
            EnvKind::Convex { f, .. } => {
                if f.value(self.hi) >= f.value(self.lo) {
                    self.hi
                } else {
                    self.lo
                }
            }
            EnvKind::OddMixed { .. } => self.hi,
        }
    }
}

/// `mid(a, b, c)` for `a <= b`; returns the value and which input it came from.
fn mid(a: f64, b: f64, c: f64) -> (f64, u8) {
    if c <= a {
        (a, 0)
    } else if c >= b {
        (b, 1)
    } else {
        (c, 2)
    }
}

fn compose(child: &McCormickValue, env: &Envelope, iv: Interval, n: usize) -> McCormickValue {
    let (cv_c, cc_c) = (child.cv.max(env.lo), child.cc.min(env.hi).max(child.cv.max(env.lo)));
    let (xm, which) = mid(cv_c, cc_c, env.argmin_under());
    let (cv, slope) = env.under(xm);
    let cv_sub = match which {
        0 => scaled(slope, &child.cv_sub),
        1 => scaled(slope, &child.cc_sub),
        _ => vec![0.0; n],
    };
    let (xm, which) = mid(cv_c, cc_c, env.argmax_over());
    let (cc, slope) = env.over(xm);
    let cc_sub = match which {
        0 => scaled(slope, &child.cv_sub),
        1 => scaled(slope, &child.cc_sub),
        _ => vec![0.0; n],
    };
    finish(McCormickValue {
        iv,
        cv,
        cc,
        cv_sub,
        cc_sub,
    })
}

/// Intersects with the enclosure and repairs non-finite slopes.
fn finish(mut m: McCormickValue) -> McCormickValue {
    if !m.cv.is_finite() || m.cv_sub.iter().any(|s| !s.is_finite()) || m.cv < m.iv.lo {
        m.cv = m.iv.lo;
        m.cv_sub.iter_mut().for_each(|s| *s = 0.0);
    }
    if !m.cc.is_finite() || m.cc_sub.iter().any(|s| !s.is_finite()) || m.cc > m.iv.hi {
        m.cc = m.iv.hi;
        m.cc_sub.iter_mut().for_each(|s| *s = 0.0);
    }
    m
}

fn product(a: &McCormickValue, b: &McCormickValue, iv: Interval, n: usize) -> McCormickValue {
    let (xl, xu, yl, yu) = (a.iv.lo, a.iv.hi, b.iv.lo, b.iv.hi);
    // k * x over [cv, cc]: smallest at cv for k >= 0, at cc otherwise.
    let low = |k: f64, m: &McCormickValue| -> (f64, Vec<f64>) {
        if k >= 0.0 {
            (k * m.cv, scaled(k, &m.cv_sub))
        } else {
            (k * m.cc, scaled(k, &m.cc_sub))
        }
    };
    let high = |k: f64, m: &McCormickValue| -> (f64, Vec<f64>) {
        if k >= 0.0 {
            (k * m.cc, scaled(k, &m.cc_sub))
        } else {
            (k * m.cv, scaled(k, &m.cv_sub))
        }
    };
    let plane = |(v1, s1): (f64, Vec<f64>), (v2, mut s2): (f64, Vec<f64>), c: f64| {
        axpy(&mut s2, 1.0, &s1);
        (v1 + v2 - c, s2)
    };
    let a1 = plane(low(yl, a), low(xl, b), xl * yl);
    let a2 = plane(low(yu, a), low(xu, b), xu * yu);
    let (cv, cv_sub) = if a2.0 > a1.0 { a2 } else { a1 };
    let b1 = plane(high(yu, a), high(xl, b), xl * yu);
    let b2 = plane(high(yl, a), high(xu, b), xu * yl);
    let (cc, cc_sub) = if b2.0 < b1.0 { b2 } else { b1 };
    let _ = n;
    finish(McCormickValue {
        iv,
        cv,
        cc,
        cv_sub,
        cc_sub,
    })
}

/// McCormick relaxation of `expr` over `bx`, evaluated at `point`.
pub fn mccormick_eval(expr: &Expr, bx: &VarBox, point: &[f64]) -> Result<McCormickValue> {
    let n = point.len();
    let mut vals: Vec<McCormickValue> = Vec::with_capacity(expr.nodes().len());
    for node in expr.nodes() {
        let v = |i: &u32| &vals[*i as usize];
        let m = match node {
            Node::Const(c) => McCormickValue::constant(*c, n),
            Node::Var(id) => {
                let iv = bx[*id];
                if !iv.is_finite() {
                    return Err(Error::UnboundedBox(id.to_string()));
                }
                let mut e = vec![0.0; n];
                e[id.index()] = 1.0;
                let x = iv.clamp(point[id.index()]);
                McCormickValue {
                    iv,
                    cv: x,
                    cc: x,
                    cv_sub: e.clone(),
                    cc_sub: e,
                }
            }
            Node::Sum { terms, constant } => {
                let mut out = McCormickValue::constant(*constant, n);
                for (c, w) in terms {
                    let ch = v(c);
                    out.iv = out.iv.add(&ch.iv.scale(*w));
                    if *w >= 0.0 {
                        out.cv += w * ch.cv;
                        out.cc += w * ch.cc;
                        axpy(&mut out.cv_sub, *w, &ch.cv_sub);
                        axpy(&mut out.cc_sub, *w, &ch.cc_sub);
                    } else {
                        out.cv += w * ch.cc;
                        out.cc += w * ch.cv;
                        axpy(&mut out.cv_sub, *w, &ch.cc_sub);
                        axpy(&mut out.cc_sub, *w, &ch.cv_sub);
                    }
                }
                out
            }
            Node::Negate(c) => {
                let ch = v(c);
                McCormickValue {
                    iv: ch.iv.neg(),
                    cv: -ch.cc,
                    cc: -ch.cv,
                    cv_sub: scaled(-1.0, &ch.cc_sub),
                    cc_sub: scaled(-1.0, &ch.cv_sub),
                }
            }
            Node::Product(a, b) if a == b => {
                let ch = v(a);
                let iv = ch.iv.powi(2);
                compose(ch, &Envelope::new(Uni::Pow(2), ch.iv)?, iv, n)
            }
            Node::Product(a, b) => {
                let (ca, cb) = (v(a), v(b));
                let iv = ca.iv.mul(&cb.iv);
                product(ca, cb, iv, n)
            }
            Node::Power(a, k) => {
                let ch = v(a);
                compose(ch, &Envelope::new(Uni::Pow(*k), ch.iv)?, ch.iv.powi(*k), n)
            }
            Node::Exp(a) => {
                let ch = v(a);
                compose(ch, &Envelope::new(Uni::Exp, ch.iv)?, ch.iv.exp(), n)
            }
            Node::Log(a) => {
                let ch = v(a);
                let iv = ch.iv.ln().ok_or(Error::EmptyDomain {
                    op: "log",
                    interval: ch.iv,
                })?;
                compose(ch, &Envelope::new(Uni::Log, ch.iv)?, iv, n)
            }
            Node::Sqrt(a) => {
                let ch = v(a);
                let iv = ch.iv.sqrt().ok_or(Error::EmptyDomain {
                    op: "sqrt",
                    interval: ch.iv,
                })?;
                compose(ch, &Envelope::new(Uni::Sqrt, ch.iv)?, iv, n)
            }
            Node::Reciprocal(a) => {
                let ch = v(a);
                let iv = ch.iv.recip().ok_or(Error::EmptyDomain {
                    op: "reciprocal",
                    interval: ch.iv,
                })?;
                compose(ch, &Envelope::new(Uni::Recip, ch.iv)?, iv, n)
            }
        };
        if !m.iv.is_finite() {
            return Err(Error::UnboundedBox(format!("intermediate enclosure {}", m.iv)));
        }
        vals.push(m);
    }
    Ok(vals.pop().expect("nonempty expression"))
}

/// Variables of `expr` that must have finite bounds for relaxation.
pub fn check_finite(expr: &Expr, bx: &VarBox) -> Result<()> {
    for v in expr.variables() {
        if !bx[v].is_finite() {
            return Err(Error::UnboundedBox(VarId::to_string(&v)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit2() -> VarBox {
        VarBox::new(vec![Interval::new(0.0, 1.0); 2])
    }

    #[test]
    fn bilinear_on_unit_square() {
        let e = Expr::var(VarId(0)) * Expr::var(VarId(1));
        let m = mccormick_eval(&e, &unit2(), &[0.5, 0.5]).unwrap();
        assert_eq!(m.cv, 0.0);
        assert_eq!(m.cc, 0.5);
    }

    #[test]
    fn square_uses_function_and_secant() {
        let e = Expr::var(VarId(0)).powi(2);
        let bx = VarBox::new(vec![Interval::new(0.0, 2.0)]);
        let m = mccormick_eval(&e, &bx, &[1.0]).unwrap();
        assert_eq!(m.cv, 1.0);
        assert_eq!(m.cc, 2.0);
        assert_eq!(m.cv_sub, vec![2.0]);
        assert_eq!(m.cc_sub, vec![2.0]);
    }

    #[test]
    fn odd_power_envelope_is_valid() {
        let e = Expr::var(VarId(0)).powi(3);
        let bx = VarBox::new(vec![Interval::new(-1.0, 2.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p: f64 = rng.gen_range(-1.0..=2.0);
            let m = mccormick_eval(&e, &bx, &[p]).unwrap();
            for _ in 0..20 {
                let q: f64 = rng.gen_range(-1.0..=2.0);
                let f = q.powi(3);
                assert!(m.under_at(&[p], &[q]) <= f + 1e-9);
                assert!(m.over_at(&[p], &[q]) >= f - 1e-9);
            }
        }
        assert!((odd_tangent_ratio(3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unbounded_variable_is_rejected() {
        let e = Expr::var(VarId(0)).exp();
        let bx = VarBox::new(vec![Interval::new(0.0, f64::INFINITY)]);
        assert!(matches!(mccormick_eval(&e, &bx, &[0.0]), Err(Error::UnboundedBox(_))));
    }

    #[test]
    fn log_needs_positive_interval() {
        let e = Expr::var(VarId(0)).ln();
        let bx = VarBox::new(vec![Interval::new(-2.0, -1.0)]);
        assert!(matches!(mccormick_eval(&e, &bx, &[-1.5]), Err(Error::EmptyDomain { .. })));
    }
}
