use std::collections::HashSet;

use minlp_core::expr::Expr;
use minlp_core::oa::{solve, solve_subproblem, Algorithm, SolveResult, SolveStatus, SolverOptions, SubStatus, SubproblemScale};
use minlp_core::{Assignment, Model, ModelBuilder, VarId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Facility-style instance: `x_i` may be positive only when its binary is
/// on, total output must reach `demand`, cost is quadratic plus fixed
/// charges.
#[derive(Clone, Debug)]
struct Facility {
    q: Vec<f64>,
    t: Vec<f64>,
    u: Vec<f64>,
    link: Vec<usize>,
    d: Vec<f64>,
    demand: f64,
}

impl Facility {
    fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..3.0)).collect();
        let total: f64 = u.iter().sum();
        Facility {
            q: (0..n).map(|_| rng.gen_range(0.3..2.0)).collect(),
            t: u.iter().map(|&h| rng.gen_range(0.0..h)).collect(),
            link: (0..n).map(|i| if i < m { i } else { rng.gen_range(0..m) }).collect(),
            d: (0..m).map(|_| rng.gen_range(0.1..2.0)).collect(),
            demand: rng.gen_range(0.2..0.8) * total,
            u,
        }
    }

    fn model(&self) -> Model {
        let mut b = ModelBuilder::new("facility");
        let n = self.q.len();
        let xs: Vec<VarId> = (0..n).map(|i| b.continuous(format!("x{i}"), 0.0, self.u[i])).collect();
        let ys: Vec<VarId> = (0..self.d.len()).map(|j| b.binary(format!("y{j}"))).collect();
        let mut obj = Expr::linear(&ys.iter().zip(&self.d).map(|(&y, &d)| (y, d)).collect::<Vec<_>>(), 0.0);
        for i in 0..n {
            obj = obj + self.q[i] * (Expr::var(xs[i]) - self.t[i]).powi(2);
            b.leq(Expr::var(xs[i]) - self.u[i] * Expr::var(ys[self.link[i]]), 0.0);
        }
        b.minimize(obj);
        let sum = xs.iter().fold(Expr::constant(0.0), |acc, &x| acc + Expr::var(x));
        b.geq(sum, self.demand).declare_convex();
        b.build().unwrap()
    }

    /// Exact optimum for one assignment: the KKT conditions give
    /// `x_i = clamp(t_i + lambda / 2 q_i)`, with `lambda` found by bisection.
    fn fixed_optimum(&self, y: &[bool]) -> Option<(f64, Vec<f64>)> {
        let hi: Vec<f64> = (0..self.q.len()).map(|i| if y[self.link[i]] { self.u[i] } else { 0.0 }).collect();
        if hi.iter().sum::<f64>() < self.demand - 1e-12 {
            return None;
        }
        let x_at = |lam: f64| -> Vec<f64> {
            (0..self.q.len())
                .map(|i| (self.t[i] + lam / (2.0 * self.q[i])).clamp(0.0, hi[i]))
                .collect()
        };
        let mut x = x_at(0.0);
        if x.iter().sum::<f64>() < self.demand {
            let (mut a, mut b) = (0.0, 1e3);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if x_at(mid).iter().sum::<f64>() < self.demand {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            x = x_at(b);
        }
        let mut v: f64 = (0..self.q.len()).map(|i| self.q[i] * (x[i] - self.t[i]).powi(2)).sum();
        v += y.iter().zip(&self.d).filter(|(on, _)| **on).map(|(_, d)| d).sum::<f64>();
        Some((v, x))
    }

    fn oracle(&self) -> Option<(f64, Vec<f64>)> {
        let m = self.d.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..(1u32 << m) {
            let y: Vec<bool> = (0..m).map(|j| mask >> j & 1 == 1).collect();
            if let Some((v, x)) = self.fixed_optimum(&y) {
                if best.as_ref().map_or(true, |b| v < b.0) {
                    let p = x.into_iter().chain(y.iter().map(|&b| f64::from(u8::from(b)))).collect();
                    best = Some((v, p));
                }
            }
        }
        best
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5f64.max(1e-3 * b.abs())
}

fn bounds_monotone(r: &SolveResult) -> bool {
    r.log.windows(2).all(|w| w[1].lb >= w[0].lb && w[1].ub <= w[0].ub)
}

fn configs() -> Vec<SolverOptions> {
    let mut out = Vec::new();
    for alg in [Algorithm::OA, Algorithm::LpNlpBB] {
        out.push(SolverOptions::new(alg));
        for scale in [SubproblemScale::Reduced, SubproblemScale::Complete] {
            out.push(SolverOptions {
                convexify: true,
                subproblem_scale: scale,
                ..SolverOptions::new(alg)
            });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convex_runs_match_the_oracle(seed in 0u64..10_000) {
        let f = Facility::random(seed);
        let m = f.model();
        let (best, point) = f.oracle().expect("all-on assignment is feasible");
        let f_star = m.objective_value(&point).unwrap();
        prop_assert!((f_star - best).abs() < 1e-9);
        for opts in configs() {
            let r = solve(&m, &opts).unwrap();
            prop_assert_eq!(r.status, SolveStatus::Optimal, "{}", opts.label());
            prop_assert!(close(r.objective, best), "{} {} vs {}", opts.label(), r.objective, best);
            prop_assert!(r.bounds.lb <= best + 1e-5f64.max(1e-3 * best.abs()));
            prop_assert!(bounds_monotone(&r), "{}", opts.label());
            // the oracle optimum, with mu at its objective, satisfies every cut
            // over the model's own columns
            let mut lifted = point.clone();
            lifted.push(f_star);
            for c in r.cuts.iter().filter(|c| c.max_var_index().map_or(true, |k| k < lifted.len())) {
                prop_assert!(c.violation(&lifted) <= 1e-6 * (1.0 + c.rhs.abs()), "{} cut {:?}", opts.label(), c);
            }
        }
    }

    #[test]
    fn convexify_never_lowers_the_first_bound(seed in 0u64..10_000) {
        let m = Facility::random(seed).model();
        let plain = solve(&m, &SolverOptions::new(Algorithm::OA)).unwrap();
        let conv = solve(&m, &SolverOptions { convexify: true, ..SolverOptions::new(Algorithm::OA) }).unwrap();
        prop_assert!(conv.first_lb >= plain.first_lb - 1e-9, "{} < {}", conv.first_lb, plain.first_lb);
    }

    #[test]
    fn subproblem_scales_agree(seed in 0u64..10_000, mask in 0u32..8) {
        let f = Facility::random(seed);
        let m = f.model();
        let n = f.q.len();
        let y = Assignment::new((0..f.d.len()).map(|j| (VarId((n + j) as u32), i64::from(mask >> j & 1))));
        let mut values = Vec::new();
        for scale in [SubproblemScale::Reduced, SubproblemScale::Complete] {
            let opts = SolverOptions { convexify: true, subproblem_scale: scale, ..SolverOptions::new(Algorithm::OA) };
            values.push(solve_subproblem(&m, &opts, &y).unwrap());
        }
        prop_assert_eq!(values[0].0, values[1].0);
        let on: Vec<bool> = (0..f.d.len()).map(|j| mask >> j & 1 == 1).collect();
        match f.fixed_optimum(&on) {
            Some((v, _)) => {
                let (a, b) = (values[0].1.unwrap(), values[1].1.unwrap());
                prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
                prop_assert!((a - v).abs() <= 1e-6, "{a} vs oracle {v}");
            }
            None => prop_assert_eq!(values[0].0, SubStatus::Infeasible),
        }
    }
}

#[test]
fn single_tree_solves_at_most_one_subproblem_per_assignment() {
    for seed in 0..20 {
        let m = Facility::random(seed).model();
        let r = solve(&m, &SolverOptions::new(Algorithm::LpNlpBB)).unwrap();
        let distinct: HashSet<u64> = r.log.iter().map(|l| l.assignment_hash).collect();
        assert!(r.nlp_solves <= distinct.len().max(1), "seed {seed}");
    }
}

fn bilinear(seed: u64) -> (Model, f64) {
    // min -c x z + d y + q (x - t)^2  s.t.  x + z <= 1 + y,  x, z in [0, 1]
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, d, q, t) = (rng.gen_range(0.5..2.0), rng.gen_range(0.1..1.0), rng.gen_range(0.0..0.5), rng.gen_range(0.0..1.0));
    let mut b = ModelBuilder::new("bil");
    let x = b.continuous("x", 0.0, 1.0);
    let z = b.continuous("z", 0.0, 1.0);
    let y = b.binary("y");
    b.minimize(-c * (Expr::var(x) * Expr::var(z)) + d * Expr::var(y) + q * (Expr::var(x) - t).powi(2))
        .leq(Expr::var(x) + Expr::var(z) - Expr::var(y), 1.0);
    let m = b.build().unwrap();
    // grid oracle
    let k = 2000;
    let mut best = f64::INFINITY;
    for yv in [0.0, 1.0] {
        for i in 0..=k {
            let xv = i as f64 / k as f64;
            // z enters linearly with a negative coefficient: push it to its cap
            let zv = (1.0 + yv - xv).min(1.0);
            best = best.min(m.objective_value(&[xv, zv, yv]).unwrap());
        }
    }
    (m, best)
}

#[test]
fn global_variants_on_bilinear_instances() {
    for seed in 0..12 {
        let (m, grid) = bilinear(seed);
        for alg in [Algorithm::GOA, Algorithm::GLpNlpBB] {
            for convexify in [false, true] {
                let opts = SolverOptions { convexify, ..SolverOptions::new(alg) };
                let r = solve(&m, &opts).unwrap();
                assert_eq!(r.status, SolveStatus::Optimal, "seed {seed} {}", opts.label());
                assert!(r.certified);
                // the grid is a restriction, so its value bounds the optimum from above
                assert!(r.objective <= grid + 1e-6, "seed {seed} {}: {} > {grid}", opts.label(), r.objective);
                assert!(r.objective >= grid - 1e-3, "seed {seed} {}: {} << {grid}", opts.label(), r.objective);
                assert!(bounds_monotone(&r));
                let subs: Vec<u64> = r.log.iter().filter(|l| l.subproblem != SubStatus::None).map(|l| l.assignment_hash).collect();
                let distinct: HashSet<u64> = subs.iter().copied().collect();
                assert_eq!(distinct.len(), subs.len(), "repeated assignment, seed {seed}");
            }
        }
    }
}

#[test]
fn worked_bilinear_example() {
    let mut b = ModelBuilder::new("bil");
    let x = b.continuous("x", 0.0, 1.0);
    let z = b.continuous("z", 0.0, 1.0);
    let y = b.binary("y");
    b.minimize(-(Expr::var(x) * Expr::var(z)) + Expr::var(y))
        .leq(Expr::var(x) + Expr::var(z) - Expr::var(y), 1.0);
    let m = b.build().unwrap();
    for alg in [Algorithm::GOA, Algorithm::GLpNlpBB] {
        let r = solve(&m, &SolverOptions::new(alg)).unwrap();
        assert!((r.objective + 0.25).abs() < 1e-5);
        let p = r.incumbent.unwrap();
        assert!((p[0] - 0.5).abs() < 1e-3 && (p[1] - 0.5).abs() < 1e-3 && p[2] == 0.0);
    }
}

#[test]
fn convex_instance_under_global_variant() {
    for seed in 0..6 {
        let m = Facility::random(seed).model();
        let oa = solve(&m, &SolverOptions::new(Algorithm::OA)).unwrap();
        let goa = solve(&m, &SolverOptions::new(Algorithm::GOA)).unwrap();
        assert!(close(goa.objective, oa.objective), "seed {seed}: {} vs {}", goa.objective, oa.objective);
    }
}

#[test]
fn infeasible_model() {
    let mut b = ModelBuilder::new("inf");
    let x = b.continuous("x", 0.0, 1.0);
    let y = b.binary("y");
    b.minimize(Expr::var(x).powi(2) + Expr::var(y))
        .geq(Expr::var(x) + Expr::var(y), 2.5)
        .declare_convex();
    let m = b.build().unwrap();
    for alg in [Algorithm::OA, Algorithm::LpNlpBB, Algorithm::GOA, Algorithm::GLpNlpBB] {
        for convexify in [false, true] {
            let r = solve(&m, &SolverOptions { convexify, ..SolverOptions::new(alg) }).unwrap();
            assert_eq!(r.status, SolveStatus::Infeasible, "{alg:?} {convexify}");
            assert!(r.incumbent.is_none());
        }
    }
}

#[test]
fn trace_has_one_row_per_iteration() {
    let m = Facility::random(7).model();
    let r = solve(&m, &SolverOptions::new(Algorithm::OA)).unwrap();
    let mut out = Vec::new();
    r.write_trace(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,lb,ub,gap,y_assignment_hash,subproblem_status,cuts_total,time_s"));
    assert_eq!(lines.count(), r.log.len());
    let mut cuts = Vec::new();
    r.write_cuts(&mut cuts).unwrap();
    assert_eq!(String::from_utf8(cuts).unwrap().lines().count(), r.cuts.len());
}
