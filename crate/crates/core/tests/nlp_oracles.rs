use minlp_core::expr::Expr;
use minlp_core::nlp::{solve_global, solve_local, NlpOptions, NlpStatus};
use minlp_core::{Model, ModelBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: usize = 1500;

/// Best feasible grid value and the grid spacing.
fn grid_min(m: &Model) -> (f64, f64) {
    let (a, b) = (m.variables[0].bounds(), m.variables[1].bounds());
    let h = a.width().max(b.width()) / GRID as f64;
    let mut best = f64::INFINITY;
    for i in 0..=GRID {
        for j in 0..=GRID {
            let p = [a.lo + a.width() * i as f64 / GRID as f64, b.lo + b.width() * j as f64 / GRID as f64];
            if m.max_violation(&p) <= 0.0 {
                best = best.min(m.objective_value(&p).unwrap());
            }
        }
    }
    (best, h)
}

fn convex_instance(rng: &mut ChaCha8Rng) -> Model {
    let mut b = ModelBuilder::new("cvx");
    let x = b.continuous("x", -2.0, 2.0);
    let y = b.continuous("y", -2.0, 2.0);
    let (cx, cy) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let (dx, dy) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    b.minimize(
        rng.gen_range(0.5..2.0) * (Expr::var(x) - cx).powi(2)
            + rng.gen_range(0.5..2.0) * (Expr::var(y) - cy).powi(2)
            + rng.gen_range(-1.0..1.0) * Expr::var(x),
    )
    .leq((Expr::var(x) - dx).powi(2) + (Expr::var(y) - dy).powi(2), rng.gen_range(0.5..1.5))
    .leq(Expr::var(x) + rng.gen_range(-1.0..1.0) * Expr::var(y), rng.gen_range(0.0..1.0))
    .leq((0.5 * Expr::var(x)).exp() - Expr::var(y), 2.0);
    b.build().unwrap()
}

fn nonconvex_instance(rng: &mut ChaCha8Rng) -> Model {
    let mut b = ModelBuilder::new("ncvx");
    let x = b.continuous("x", -1.0, 2.0);
    let y = b.continuous("y", -1.0, 2.0);
    let q = rng.gen_range(-2.0..2.0);
    b.minimize(
        q * Expr::var(x) * Expr::var(y) + rng.gen_range(-1.0..1.0) * Expr::var(x).powi(2)
            + rng.gen_range(-1.0..1.0) * Expr::var(y)
            + 0.3 * Expr::var(x).powi(4),
    )
    .leq(Expr::var(x) * Expr::var(y), rng.gen_range(0.5..2.0))
    .geq(Expr::var(x) + Expr::var(y), rng.gen_range(-1.0..0.5));
    b.build().unwrap()
}

fn fd_gradient(e: &Expr, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[i] += h;
            b[i] -= h;
            (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h)
        })
        .collect()
}

#[test]
fn local_solutions_on_convex_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..25 {
        let m = convex_instance(&mut rng);
        let s = solve_local(&m, &[0.0, 0.0], &NlpOptions::default()).unwrap();
        let (g, h) = grid_min(&m);
        assert_eq!(s.status, NlpStatus::LocalOptimal, "instance {k}");
        assert!(m.max_violation(&s.point) <= 1e-7 && m.bound_violation(&s.point) == 0.0);
        assert!(s.objective <= g + 1e-7, "instance {k}: {} vs grid {g}", s.objective);
        assert!(s.objective >= g - 50.0 * h, "instance {k}: {} vs grid {g}", s.objective);

        // stationarity recomputed with finite differences
        let x = &s.point;
        let mut gl = fd_gradient(&m.objective, x);
        let scale = gl.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (j, c) in m.constraints.iter().enumerate() {
            let gj = fd_gradient(&c.body, x);
            for (o, v) in gl.iter_mut().zip(gj) {
                *o += s.multipliers[j] * v;
            }
        }
        for (i, v) in m.variables.iter().enumerate() {
            let step = (x[i] - gl[i]).clamp(v.lower, v.upper) - x[i];
            assert!(step.abs() / scale <= 1e-5, "instance {k}: residual {step}");
        }
    }
}

#[test]
fn global_sandwich_on_nonconvex_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..15 {
        let m = nonconvex_instance(&mut rng);
        let s = solve_global(&m, &NlpOptions::default()).unwrap();
        let (g, h) = grid_min(&m);
        assert_eq!(s.status, NlpStatus::GlobalOptimal, "instance {k}");
        assert!(s.bound <= g + 1e-9, "instance {k}: bound {} above grid {g}", s.bound);
        assert!(s.objective <= g + 1e-6, "instance {k}: {} worse than grid {g}", s.objective);
        assert!(s.objective >= g - 50.0 * h);
    }
}

#[test]
fn convex_local_matches_global() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let m = convex_instance(&mut rng);
        let l = solve_local(&m, &[0.0, 0.0], &NlpOptions::default()).unwrap();
        let g = solve_global(&m, &NlpOptions::default()).unwrap();
        assert!((l.objective - g.objective).abs() <= 1e-5 * (1.0 + l.objective.abs()));
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = nonconvex_instance(&mut rng);
    let opts = NlpOptions {
        multistart: 5,
        ..Default::default()
    };
    let a = solve_local(&m, &[0.3, 0.1], &opts).unwrap();
    let b = solve_local(&m, &[0.3, 0.1], &opts).unwrap();
    assert_eq!(a.point, b.point);
    assert_eq!(a.iterations, b.iterations);
    let a = solve_global(&m, &NlpOptions::default()).unwrap();
    let b = solve_global(&m, &NlpOptions::default()).unwrap();
    assert_eq!(a.point, b.point);
    assert_eq!(a.bound.to_bits(), b.bound.to_bits());
}
