//! Closed real intervals with outward-rounded arithmetic, and per-variable boxes.
//!
//! Rational operations use error-free transformations (two-sum, fma residuals)
//! so an endpoint is only widened when the floating-point result was inexact.
//! Transcendental functions are widened by one ulp unconditionally.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::model::VarId;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

pub(crate) fn add_dn(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_finite() && e < 0.0 {
        s.next_down()
    } else {
        s
    }
}

pub(crate) fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_finite() && e > 0.0 {
        s.next_up()
    } else {
        s
    }
}

pub(crate) fn mul_dn(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if p.is_finite() && a.mul_add(b, -p) < 0.0 {
        p.next_down()
    } else {
        p
    }
}

pub(crate) fn mul_up(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if p.is_finite() && a.mul_add(b, -p) > 0.0 {
        p.next_up()
    } else {
        p
    }
}

/// Sign of `a - q*b`, the residual of a rounded quotient `q = a / b`.
fn div_residual_sign(a: f64, b: f64, q: f64) -> f64 {
    // a/b > q  <=>  (a - q*b)/b > 0
    let r = (-q).mul_add(b, a);
    if b > 0.0 {
        r
    } else {
        -r
    }
}

pub(crate) fn div_dn(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let q = a / b;
    if q.is_finite() && b.is_finite() && div_residual_sign(a, b, q) < 0.0 {
        q.next_down()
    } else {
        q
    }
}

pub(crate) fn div_up(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let q = a / b;
    if q.is_finite() && b.is_finite() && div_residual_sign(a, b, q) > 0.0 {
        q.next_up()
    } else {
        q
    }
}

fn sqrt_dn(a: f64) -> f64 {
    let r = a.sqrt();
    if r.is_finite() && r > 0.0 && (-r).mul_add(r, a) < 0.0 {
        r.next_down()
    } else {
        r
    }
}

fn sqrt_up(a: f64) -> f64 {
    let r = a.sqrt();
    if r.is_finite() && (-r).mul_add(r, a) > 0.0 {
        r.next_up()
    } else {
        r
    }
}

fn ulp_dn(x: f64) -> f64 {
    if x.is_finite() {
        x.next_down()
    } else {
        x
    }
}

fn ulp_up(x: f64) -> f64 {
    if x.is_finite() {
        x.next_up()
    } else {
        x
    }
}

fn powi_dn(x: f64, n: u32) -> f64 {
    // x >= 0 assumed
    let mut acc = 1.0;
    for _ in 0..n {
        acc = mul_dn(acc, x);
    }
    acc
}

fn powi_up(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..n {
        acc = mul_up(acc, x);
    }
    acc
}

/// A nonempty closed interval `[lo, hi]`, endpoints possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Interval {
    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "invalid interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Returns `None` when `lo > hi` or either endpoint is NaN.
    pub fn checked(lo: f64, hi: f64) -> Option<Self> {
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => 0.5 * self.lo + 0.5 * self.hi,
            (true, false) => self.lo.max(0.0),
            (false, true) => self.hi.min(0.0),
            (false, false) => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::checked(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    /// Largest magnitude of any member.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval::new(add_dn(self.lo, o.lo), add_up(self.hi, o.hi))
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval::new(add_dn(self.lo, -o.hi), add_up(self.hi, -o.lo))
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn add_scalar(&self, c: f64) -> Interval {
        Interval::new(add_dn(self.lo, c), add_up(self.hi, c))
    }

    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval::new(mul_dn(self.lo, c), mul_up(self.hi, c))
        } else {
            Interval::new(mul_dn(self.hi, c), mul_up(self.lo, c))
        }
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        let lo = mul_dn(a, c).min(mul_dn(a, d)).min(mul_dn(b, c)).min(mul_dn(b, d));
        let hi = mul_up(a, c).max(mul_up(a, d)).max(mul_up(b, c)).max(mul_up(b, d));
        Interval::new(lo, hi)
    }

    /// Natural extension of `x^n` for `n >= 0`.
    pub fn powi(&self, n: u32) -> Interval {
        if n == 0 {
            return Interval::point(1.0);
        }
        if n % 2 == 1 {
            let lo = if self.lo >= 0.0 {
                powi_dn(self.lo, n)
            } else {
                -powi_up(-self.lo, n)
            };
            let hi = if self.hi >= 0.0 {
                powi_up(self.hi, n)
            } else {
                -powi_dn(-self.hi, n)
            };
            Interval::new(lo, hi)
        } else if self.lo >= 0.0 {
            Interval::new(powi_dn(self.lo, n), powi_up(self.hi, n))
        } else if self.hi <= 0.0 {
            Interval::new(powi_dn(-self.hi, n), powi_up(-self.lo, n))
        } else {
            Interval::new(0.0, powi_up(self.mag(), n))
        }
    }

    pub fn exp(&self) -> Interval {
        let lo = ulp_dn(self.lo.exp()).max(0.0);
        Interval::new(lo, ulp_up(self.hi.exp()))
    }

    /// Natural log restricted to the positive part; `None` if `hi <= 0`.
    pub fn ln(&self) -> Option<Interval> {
        if self.hi <= 0.0 {
            return None;
        }
        let lo = if self.lo <= 0.0 {
            f64::NEG_INFINITY
        } else {
            ulp_dn(self.lo.ln())
        };
        Some(Interval::new(lo, ulp_up(self.hi.ln())))
    }

    /// Square root restricted to the nonnegative part; `None` if `hi < 0`.
    pub fn sqrt(&self) -> Option<Interval> {
        if self.hi < 0.0 {
            return None;
        }
        Some(Interval::new(sqrt_dn(self.lo.max(0.0)), sqrt_up(self.hi)))
    }

    /// `1/x` over the interval; `None` for the degenerate `[0,0]`.
    pub fn recip(&self) -> Option<Interval> {
        let (l, u) = (self.lo, self.hi);
        if l == 0.0 && u == 0.0 {
            return None;
        }
        Some(if l > 0.0 || u < 0.0 {
            Interval::new(div_dn(1.0, u), div_up(1.0, l))
        } else if l == 0.0 {
            Interval::new(div_dn(1.0, u), f64::INFINITY)
        } else if u == 0.0 {
            Interval::new(f64::NEG_INFINITY, div_up(1.0, l))
        } else {
            Interval::ENTIRE
        })
    }

    /// Quotient `self / y` for `y` not containing zero.
    fn div_nonzero(&self, y: &Interval) -> Interval {
        let (a, b, c, d) = (self.lo, self.hi, y.lo, y.hi);
        let lo = div_dn(a, c).min(div_dn(a, d)).min(div_dn(b, c)).min(div_dn(b, d));
        let hi = div_up(a, c).max(div_up(a, d)).max(div_up(b, c)).max(div_up(b, d));
        Interval::new(lo, hi)
    }

    /// Pieces of `{r / y : r in self, y in y, y != 0}` as at most two intervals.
    pub fn extended_div(&self, y: &Interval) -> Vec<Interval> {
        if !y.contains_zero() {
            return vec![self.div_nonzero(y)];
        }
        if self.contains_zero() {
            return vec![Interval::ENTIRE];
        }
        if y.lo == 0.0 && y.hi == 0.0 {
            return vec![];
        }
        let mut out = Vec::with_capacity(2);
        if self.hi < 0.0 {
            if y.lo < 0.0 {
                out.push(Interval::new(div_dn(self.hi, y.lo), f64::INFINITY));
            }
            if y.hi > 0.0 {
                out.push(Interval::new(f64::NEG_INFINITY, div_up(self.hi, y.hi)));
            }
        } else {
            if y.lo < 0.0 {
                out.push(Interval::new(f64::NEG_INFINITY, div_up(self.lo, y.lo)));
            }
            if y.hi > 0.0 {
                out.push(Interval::new(div_dn(self.lo, y.hi), f64::INFINITY));
            }
        }
        out
    }

    /// Hull of `{x in within : x * y in self for some y in y}` (over-approximated).
    pub fn div_relation(&self, y: &Interval, within: &Interval) -> Option<Interval> {
        let mut hull: Option<Interval> = None;
        for piece in self.extended_div(y) {
            if let Some(p) = piece.intersect(within) {
                hull = Some(match hull {
                    Some(h) => h.hull(&p),
                    None => p,
                });
            }
        }
        hull
    }

    /// Inverse image of `x^n in self` intersected with `within`.
    pub fn powi_inverse(&self, n: u32, within: &Interval) -> Option<Interval> {
        debug_assert!(n >= 1);
        if n == 1 {
            return self.intersect(within);
        }
        let root_dn = |v: f64| -> f64 {
            if v.is_infinite() {
                return v;
            }
            let r = v.powf(1.0 / n as f64);
            ulp_dn(r).max(0.0)
        };
        let root_up = |v: f64| -> f64 {
            if v.is_infinite() {
                return v;
            }
            let r = v.powf(1.0 / n as f64);
            // exact roots (e.g. sqrt(4)) stay exact
            if powi_dn(r, n) == v && powi_up(r, n) == v {
                r
            } else {
                ulp_up(r)
            }
        };
        let root_dn_exact = |v: f64| -> f64 {
            if v.is_infinite() {
                return v;
            }
            let r = v.powf(1.0 / n as f64);
            if powi_dn(r, n) == v && powi_up(r, n) == v {
                r
            } else {
                root_dn(v)
            }
        };
        if n % 2 == 1 {
            let signed_root_dn = |v: f64| {
                if v >= 0.0 {
                    root_dn_exact(v)
                } else {
                    -root_up(-v)
                }
            };
            let signed_root_up = |v: f64| {
                if v >= 0.0 {
                    root_up(v)
                } else {
                    -root_dn_exact(-v)
                }
            };
            return Interval::new(signed_root_dn(self.lo), signed_root_up(self.hi))
                .intersect(within);
        }
        if self.hi < 0.0 {
            return None;
        }
        let outer = root_up(self.hi);
        if self.lo <= 0.0 {
            return Interval::new(-outer, outer).intersect(within);
        }
        let inner = root_dn_exact(self.lo);
        let neg = Interval::new(-outer, -inner).intersect(within);
        let pos = Interval::new(inner, outer).intersect(within);
        match (neg, pos) {
            (Some(a), Some(b)) => Some(a.hull(&b)),
            (a, b) => a.or(b),
        }
    }

    /// Rounds the endpoints inward to integers; `None` if no integer remains.
    pub fn round_inward(&self, tol: f64) -> Option<Interval> {
        let lo = if self.lo.is_finite() {
            (self.lo - tol).ceil()
        } else {
            self.lo
        };
        let hi = if self.hi.is_finite() {
            (self.hi + tol).floor()
        } else {
            self.hi
        };
        Interval::checked(lo, hi)
    }
}

/// Per-variable interval bounds, indexed by [`VarId`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarBox {
    bounds: Vec<Interval>,
}

impl VarBox {
    pub fn new(bounds: Vec<Interval>) -> Self {
        VarBox { bounds }
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interval> {
        self.bounds.iter()
    }

    pub fn as_slice(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn push(&mut self, iv: Interval) {
        self.bounds.push(iv);
    }

    pub fn is_subset_of(&self, other: &VarBox) -> bool {
        self.len() == other.len()
            && self
                .bounds
                .iter()
                .zip(&other.bounds)
                .all(|(a, b)| a.is_subset_of(b))
    }

    pub fn contains_point(&self, p: &[f64], tol: f64) -> bool {
        self.bounds
            .iter()
            .zip(p)
            .all(|(iv, &v)| iv.lo - tol <= v && v <= iv.hi + tol)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.bounds.iter().map(Interval::mid).collect()
    }

    /// Start point for local solves: the midpoint of narrow intervals and the
    /// point nearest zero in wide ones.
    pub fn start_point(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|iv| if iv.width() <= 1e4 { iv.mid() } else { iv.clamp(0.0) })
            .collect()
    }

    pub fn project(&self, p: &mut [f64]) {
        for (v, iv) in p.iter_mut().zip(&self.bounds) {
            *v = iv.clamp(*v);
        }
    }

    pub fn truncate(&mut self, n: usize) {
        self.bounds.truncate(n);
    }
}

impl Index<VarId> for VarBox {
    type Output = Interval;
    fn index(&self, id: VarId) -> &Interval {
        &self.bounds[id.index()]
    }
}

impl IndexMut<VarId> for VarBox {
    fn index_mut(&mut self, id: VarId) -> &mut Interval {
        &mut self.bounds[id.index()]
    }
}

impl Index<usize> for VarBox {
    type Output = Interval;
    fn index(&self, i: usize) -> &Interval {
        &self.bounds[i]
    }
}

impl IndexMut<usize> for VarBox {
    fn index_mut(&mut self, i: usize) -> &mut Interval {
        &mut self.bounds[i]
    }
}
