//! Projected limited-memory BFGS on a box.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum InnerStatus {
    Converged,
    /// No acceptable step along the projected direction.
    Stalled,
    IterationLimit,
    /// Objective undefined at the start point.
    BadStart,
}

#[derive(Clone, Debug)]
pub(crate) struct Inner {
    pub status: InnerStatus,
    pub iterations: usize,
}

const MEMORY: usize = 8;

/// Infinity norm of the projected gradient step `P(x - g) - x`.
pub(crate) fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| ((xi - gi).clamp(lo[i], hi[i]) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Minimizes `fg` over `[lo, hi]` starting at `x` (projected first). `fg`
/// writes the gradient and returns the value, or `None` outside its domain.
pub(crate) fn minimize_box<F>(mut fg: F, x: &mut Vec<f64>, lo: &[f64], hi: &[f64], tol: f64, max_iter: usize) -> Inner
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let n = x.len();
    for i in 0..n {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
    let mut g = vec![0.0; n];
    let Some(mut f) = fg(x, &mut g).filter(|f| f.is_finite()) else {
        return Inner {
            status: InnerStatus::BadStart,
            iterations: 0,
        };
    };
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut gn = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut free = vec![true; n];
    for it in 0..max_iter {
        let pg = projected_gradient_norm(x, &g, lo, hi);
        if pg <= tol {
            return Inner {
                status: InnerStatus::Converged,
                iterations: it,
            };
        }
        for i in 0..n {
            let at_lo = x[i] <= lo[i] && g[i] > 0.0;
            let at_hi = x[i] >= hi[i] && g[i] < 0.0;
            free[i] = !(at_lo || at_hi || lo[i] == hi[i]);
            d[i] = if free[i] { -g[i] } else { 0.0 };
        }
        let steepest_norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !mem.is_empty() {
            // two-loop recursion on the free subspace
            let mut alphas = Vec::with_capacity(mem.len());
            for (s, y, rho) in mem.iter().rev() {
                let a = rho * free.iter().zip(s).zip(&d).filter(|((f, _), _)| **f).map(|((_, s), d)| s * d).sum::<f64>();
                for i in 0..n {
                    if free[i] {
                        d[i] -= a * y[i];
                    }
                }
                alphas.push(a);
            }
            let (s, y, _) = mem.back().unwrap();
            let gamma = dot(s, y) / dot(y, y);
            for v in d.iter_mut() {
                *v *= gamma;
            }
            for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
                let b = rho * free.iter().zip(y).zip(&d).filter(|((f, _), _)| **f).map(|((_, y), d)| y * d).sum::<f64>();
                for i in 0..n {
                    if free[i] {
                        d[i] += (a - b) * s[i];
                    }
                }
            }
        }
        let slope = dot(&g, &d);
        if !(slope < 0.0) || d.iter().any(|v| !v.is_finite()) {
            mem.clear();
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }
        let mut alpha = if mem.is_empty() { (1.0 / steepest_norm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = (x[i] + alpha * d[i]).clamp(lo[i], hi[i]);
            }
            let decrease: f64 = g.iter().zip(xn.iter().zip(x.iter())).map(|(gi, (a, b))| gi * (a - b)).sum();
            if xn == *x {
                break;
            }
            if let Some(fv) = fg(&xn, &mut gn).filter(|v| v.is_finite()) {
                if fv <= f + 1e-4 * decrease {
                    accepted = Some(fv);
                    break;
                }
            }
            alpha *= 0.5;
        }
        if let (Some(mut best), true) = (accepted, mem.is_empty()) {
            // no curvature yet: extend the step while the decrease keeps up
            let mut trial = xn.clone();
            let mut gt = vec![0.0; n];
            for _ in 0..60 {
                alpha *= 2.0;
                for i in 0..n {
                    trial[i] = (x[i] + alpha * d[i]).clamp(lo[i], hi[i]);
                }
                if trial == xn {
                    break;
                }
                let decrease: f64 = g.iter().zip(trial.iter().zip(x.iter())).map(|(gi, (a, b))| gi * (a - b)).sum();
                match fg(&trial, &mut gt).filter(|v| v.is_finite()) {
                    Some(fv) if fv < best && fv <= f + 1e-4 * decrease => {
                        best = fv;
                        xn.copy_from_slice(&trial);
                        gn.copy_from_slice(&gt);
                    }
                    _ => break,
                }
            }
            accepted = Some(best);
        }
        let Some(fv) = accepted else {
            if !mem.is_empty() {
                mem.clear();
                continue;
            }
            return Inner {
                status: InnerStatus::Stalled,
                iterations: it,
            };
        };
        let s: Vec<f64> = xn.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if mem.len() == MEMORY {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        f = fv;
    }
    Inner {
        status: InnerStatus::IterationLimit,
        iterations: max_iter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let fg = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        let mut x = vec![-1.2, 1.0];
        let r = minimize_box(fg, &mut x, &[-5.0; 2], &[5.0; 2], 1e-10, 1000);
        assert_eq!(r.status, InnerStatus::Converged);
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn active_bound() {
        // min (x-3)^2 + (y+1)^2 on [0,2]^2 -> (2, 0)
        let fg = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 2.0 * (x[1] + 1.0);
            Some((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2))
        };
        let mut x = vec![1.0, 1.0];
        let r = minimize_box(fg, &mut x, &[0.0; 2], &[2.0; 2], 1e-12, 100);
        assert_eq!(r.status, InnerStatus::Converged);
        assert_eq!(x, vec![2.0, 0.0]);
    }
}
