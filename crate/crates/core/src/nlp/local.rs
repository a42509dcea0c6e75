//! Local solver: augmented Lagrangian outer loop over box-constrained
//! quasi-Newton minimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bfgs::{minimize_box, projected_gradient_norm, InnerStatus};
use super::{NlpOptions, NlpSolution, NlpStatus};
use crate::error::{Error, Result};
use crate::model::{Model, Point};

struct Evaluator<'a> {
    model: &'a Model,
    vals: Vec<f64>,
    adj: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a Model) -> Self {
        Evaluator {
            model,
            vals: Vec::new(),
            adj: Vec::new(),
            grad: vec![0.0; model.num_vars()],
        }
    }

    fn rows(&mut self, x: &[f64]) -> Option<Vec<f64>> {
        self.model
            .constraints
            .iter()
            .map(|c| c.body.eval_into(x, &mut self.vals).ok())
            .collect()
    }

    /// Augmented Lagrangian value and gradient.
    fn lagrangian(&mut self, x: &[f64], lam: &[f64], rho: f64, out: &mut [f64]) -> Option<f64> {
        let mut v = self.model.objective.gradient_into(x, out, &mut self.vals, &mut self.adj).ok()?;
        for (j, c) in self.model.constraints.iter().enumerate() {
            let g = c.body.eval_into(x, &mut self.vals).ok()?;
            let shifted = lam[j] + rho * g;
            if shifted > 0.0 {
                c.body.gradient_into(x, &mut self.grad, &mut self.vals, &mut self.adj).ok()?;
                for (o, gi) in out.iter_mut().zip(&self.grad) {
                    *o += shifted * gi;
                }
                v += (shifted * shifted - lam[j] * lam[j]) / (2.0 * rho);
            } else {
                v -= lam[j] * lam[j] / (2.0 * rho);
            }
        }
        Some(v)
    }

    /// Sum of squared row violations.
    fn infeasibility(&mut self, x: &[f64], out: &mut [f64]) -> Option<f64> {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut v = 0.0;
        for c in &self.model.constraints {
            let g = c.body.eval_into(x, &mut self.vals).ok()?;
            if g > 0.0 {
                c.body.gradient_into(x, &mut self.grad, &mut self.vals, &mut self.adj).ok()?;
                for (o, gi) in out.iter_mut().zip(&self.grad) {
                    *o += 2.0 * g * gi;
                }
                v += g * g;
            }
        }
        Some(v)
    }

    /// Scaled stationarity and complementarity residual for multipliers `lam`.
    fn kkt(&mut self, x: &[f64], lam: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
        let n = x.len();
        let mut gl = vec![0.0; n];
        self.model.objective.gradient_into(x, &mut gl, &mut self.vals, &mut self.adj).ok()?;
        let scale = gl.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut compl = 0.0f64;
        for (j, c) in self.model.constraints.iter().enumerate() {
            if lam[j] == 0.0 {
                continue;
            }
            let g = c.body.gradient_into(x, &mut self.grad, &mut self.vals, &mut self.adj).ok()?;
            for (o, gi) in gl.iter_mut().zip(&self.grad) {
                *o += lam[j] * gi;
            }
            compl = compl.max((lam[j] * g).abs());
        }
        Some(projected_gradient_norm(x, &gl, lo, hi).max(compl) / scale)
    }
}

fn max_violation(rows: &[f64]) -> f64 {
    rows.iter().fold(0.0, |m, &g| m.max(g))
}

/// Local solve from `start`, plus `opts.multistart` perturbed restarts.
pub fn solve_local(model: &Model, start: &[f64], opts: &NlpOptions) -> Result<NlpSolution> {
    if let Some(v) = model.discrete_vars().find(|&v| model.var(v).lower != model.var(v).upper) {
        return Err(Error::InvalidModel(format!(
            "local solve needs fixed discrete variables, `{}` is free",
            model.var(v).name
        )));
    }
    if start.len() != model.num_vars() {
        return Err(Error::InvalidModel(format!(
            "start has {} entries for {} variables",
            start.len(),
            model.num_vars()
        )));
    }
    let mut best = solve_from(model, start, opts);
    if opts.multistart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.multistart {
            let p: Vec<f64> = model
                .variables
                .iter()
                .zip(start)
                .map(|(v, &s)| {
                    let r = 1.0 + s.abs();
                    let (a, b) = ((s - r).max(v.lower), (s + r).min(v.upper));
                    if a < b {
                        rng.gen_range(a..=b)
                    } else {
                        a
                    }
                })
                .collect();
            let cand = solve_from(model, &p, opts);
            let better = match (cand.status, best.status) {
                (NlpStatus::LocalOptimal, NlpStatus::LocalOptimal) => cand.objective < best.objective,
                (NlpStatus::LocalOptimal, _) => true,
                (NlpStatus::Infeasible, NlpStatus::Failed) => true,
                _ => false,
            };
            if better {
                best = cand;
            }
        }
    }
    Ok(best)
}

fn solve_from(model: &Model, start: &[f64], opts: &NlpOptions) -> NlpSolution {
    let n = model.num_vars();
    let m = model.constraints.len();
    let lo: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let hi: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let mut ev = Evaluator::new(model);
    let mut x: Vec<f64> = start.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect();
    if ev.rows(&x).is_none() || model.objective.eval(&x).is_err() {
        let mid: Vec<f64> = (0..n)
            .map(|i| match (lo[i].is_finite(), hi[i].is_finite()) {
                (true, true) => 0.5 * (lo[i] + hi[i]),
                (true, false) => lo[i] + 1.0,
                (false, true) => hi[i] - 1.0,
                (false, false) => 0.0,
            })
            .collect();
        x = mid;
    }
    let mut lam = vec![0.0; m];
    let mut rho = 10.0;
    let mut prev_viol = f64::INFINITY;
    let mut iterations = 0;
    let mut restarted = false;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let omega = (1e-2 * 0.1f64.powi(outer as i32)).max(0.1 * opts.kkttol);
        let mut buf_lam = lam.clone();
        let inner = minimize_box(
            |p, g| ev.lagrangian(p, &buf_lam, rho, g),
            &mut x,
            &lo,
            &hi,
            omega,
            opts.max_inner,
        );
        iterations += inner.iterations;
        if inner.status == InnerStatus::BadStart {
            return failed(model, x, iterations);
        }
        let Some(rows) = ev.rows(&x) else {
            return failed(model, x, iterations);
        };
        for j in 0..m {
            buf_lam[j] = (lam[j] + rho * rows[j]).max(0.0);
        }
        lam = buf_lam;
        let viol = max_violation(&rows);
        let kkt = ev.kkt(&x, &lam, &lo, &hi).unwrap_or(f64::INFINITY);
        if viol <= opts.feastol && kkt <= opts.kkttol {
            let objective = model.objective_value(&x).unwrap_or(f64::NAN);
            return NlpSolution {
                status: NlpStatus::LocalOptimal,
                point: Point(x),
                objective,
                kkt_residual: kkt,
                bound: f64::NEG_INFINITY,
                multipliers: lam,
                iterations,
            };
        }
        if viol > opts.feastol && viol > 0.25 * prev_viol {
            rho = (rho * 10.0).min(1e12);
        }
        prev_viol = viol;
        let hopeless = viol > opts.feastol && rho >= 1e8;
        if hopeless || outer == opts.max_outer {
            if viol <= opts.feastol || restarted {
                break;
            }
            // feasibility phase
            let feas = minimize_box(|p, g| ev.infeasibility(p, g), &mut x, &lo, &hi, 1e-14, opts.max_inner * 4);
            iterations += feas.iterations;
            let viol = ev.rows(&x).map_or(f64::INFINITY, |r| max_violation(&r));
            if viol > opts.feastol {
                let status = match feas.status {
                    InnerStatus::Converged | InnerStatus::Stalled => NlpStatus::Infeasible,
                    _ => NlpStatus::Failed,
                };
                return NlpSolution {
                    status,
                    objective: f64::NAN,
                    point: Point(x),
                    kkt_residual: f64::INFINITY,
                    bound: f64::NEG_INFINITY,
                    multipliers: lam,
                    iterations,
                };
            }
            restarted = true;
            lam.iter_mut().for_each(|l| *l = 0.0);
            rho = 10.0;
            prev_viol = f64::INFINITY;
            outer = 0;
        }
    }
    failed(model, x, iterations)
}

fn failed(model: &Model, x: Vec<f64>, iterations: usize) -> NlpSolution {
    let objective = model.objective_value(&x).unwrap_or(f64::NAN);
    NlpSolution {
        status: NlpStatus::Failed,
        point: Point(x),
        objective,
        kkt_residual: f64::INFINITY,
        bound: f64::NEG_INFINITY,
        multipliers: Vec::new(),
        iterations,
    }
}
