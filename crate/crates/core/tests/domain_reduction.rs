use minlp_core::expr::Expr;
use minlp_core::presolve::{fbbt, obbt, presolve, FbbtOptions, PresolveOptions, PresolveResult};
use minlp_core::testing::{random_box, random_expr, random_point};
use minlp_core::{Interval, Model, ModelBuilder, VarBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two continuous variables and one integer, two random nonlinear rows with
/// right-hand sides at sampled quantiles, so the feasible set has interior.
fn random_model(rng: &mut ChaCha8Rng, quantile: f64) -> Model {
    let bx = random_box(rng, 3);
    let mut b = ModelBuilder::new("rand");
    let x0 = b.continuous("x0", bx[0].lo, bx[0].hi);
    let x1 = b.continuous("x1", bx[1].lo, bx[1].hi);
    let k = b.integer("k", bx[2].lo.floor(), bx[2].lo.floor() + 3.0);
    let int_box = VarBox::new(vec![bx[0], bx[1], Interval::new(bx[2].lo.floor(), bx[2].lo.floor() + 3.0)]);
    b.minimize(random_expr(rng, &int_box, 2) + Expr::var(x0));
    for _ in 0..2 {
        let e = random_expr(rng, &int_box, 3);
        let mut vals: Vec<f64> = (0..200).filter_map(|_| e.eval(&sample(rng, &int_box)).ok()).collect();
        vals.sort_by(f64::total_cmp);
        let rhs = vals[((vals.len() - 1) as f64 * quantile) as usize];
        b.leq(e, rhs);
    }
    b.leq(Expr::var(x0) + Expr::var(x1) - Expr::var(k), bx[0].hi + bx[1].hi - bx[2].lo.floor() - 0.5);
    b.build().unwrap()
}

fn sample(rng: &mut ChaCha8Rng, bx: &VarBox) -> Vec<f64> {
    let mut p = random_point(rng, bx);
    p[2] = rng.gen_range(bx[2].lo as i64..=bx[2].hi as i64) as f64;
    p
}

fn check_sound(m: &Model, r: &PresolveResult, rng: &mut ChaCha8Rng, want: usize) -> usize {
    let bx = m.bounds();
    let mut found = 0;
    for _ in 0..want * 200 {
        let p = sample(rng, &bx);
        if !m.is_feasible(&p, 0.0) {
            continue;
        }
        found += 1;
        assert!(!r.is_infeasible(), "{}: feasible {p:?} but presolve proved infeasibility", m.name);
        assert!(r.tightened.contains_point(&p, 0.0), "{p:?} outside {:?}", r.tightened);
        let lifted = r.avm.lift_point(&p).unwrap();
        for c in &r.cuts {
            assert!(c.is_satisfied(&lifted, 1e-9), "{c} cuts off {p:?}");
        }
        if found == want {
            break;
        }
    }
    found
}

#[test]
fn presolve_never_excludes_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut checked = 0;
    for _ in 0..12 {
        let m = random_model(&mut rng, 0.6);
        let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
        if check_sound(&m, &r, &mut rng, 10_000) == 10_000 {
            checked += 1;
        }
    }
    assert!(checked >= 6, "only {checked} instances had enough feasible samples");
}

#[test]
fn infeasibility_certificates_hold_on_a_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut proven = 0;
    for _ in 0..60 {
        let m = random_model(&mut rng, 0.02);
        let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
        if !r.is_infeasible() {
            continue;
        }
        proven += 1;
        let bx = m.bounds();
        for k in bx[2].lo as i64..=bx[2].hi as i64 {
            for i in 0..=60 {
                for j in 0..=60 {
                    let p = [
                        bx[0].lo + bx[0].width() * i as f64 / 60.0,
                        bx[1].lo + bx[1].width() * j as f64 / 60.0,
                        k as f64,
                    ];
                    assert!(!m.is_feasible(&p, 0.0), "grid point {p:?} is feasible");
                }
            }
        }
    }
    assert!(proven > 0);
}

#[test]
fn presolve_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..30 {
        let m = random_model(&mut rng, 0.5);
        let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
        if r.is_infeasible() {
            continue;
        }
        assert!(r.tightened.is_subset_of(&m.bounds()));
        let again = presolve(&m.with_bounds(&r.tightened), &mut PresolveOptions::new()).unwrap();
        assert!(again.tightened.is_subset_of(&r.tightened));
    }
}

#[test]
fn bilinear_planes_valid_on_unit_box() {
    let mut b = ModelBuilder::new("bil");
    let x = b.continuous("x", 0.0, 1.0);
    let y = b.continuous("y", 0.0, 1.0);
    b.minimize(Expr::var(x) * Expr::var(y)).geq(Expr::var(x) + Expr::var(y), 0.5);
    let m = b.build().unwrap();
    let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bx = m.bounds();
    let mut found = 0;
    while found < 10_000 {
        let p = random_point(&mut rng, &bx);
        if !m.is_feasible(&p, 0.0) {
            continue;
        }
        found += 1;
        let lifted = r.avm.lift_point(&p).unwrap();
        assert!(r.cuts.iter().all(|c| c.is_satisfied(&lifted, 1e-12)));
    }
    assert_eq!(r.cuts.len(), 4);
}

#[test]
fn obbt_keeps_a_known_optimum() {
    // min (x-1.7)^2 + (y-0.3)^2 s.t. x + y <= 2, x*y >= 0.5; optimum found by
    // a fine grid, which must survive tightening
    let mut b = ModelBuilder::new("keep");
    let x = b.continuous("x", 0.0, 4.0);
    let y = b.continuous("y", 0.0, 4.0);
    b.minimize((Expr::var(x) - 1.7).powi(2) + (Expr::var(y) - 0.3).powi(2))
        .leq(Expr::var(x) + Expr::var(y), 2.0)
        .geq(Expr::var(x) * Expr::var(y), 0.5);
    let m = b.build().unwrap();
    let mut best = (f64::INFINITY, [0.0; 2]);
    for i in 0..=800 {
        for j in 0..=800 {
            let p = [4.0 * i as f64 / 800.0, 4.0 * j as f64 / 800.0];
            if m.is_feasible(&p, 0.0) {
                let f = m.objective_value(&p).unwrap();
                if f < best.0 {
                    best = (f, p);
                }
            }
        }
    }
    let t = fbbt(&m, &m.bounds(), FbbtOptions::default()).0.into_box().unwrap();
    let r = presolve(&m, &mut PresolveOptions::new()).unwrap();
    let (o, _) = obbt(&m, &r.cuts, &r.lifted_box(), &[x, y]).unwrap();
    let o = o.into_box().unwrap();
    assert!(t.contains_point(&best.1, 0.0));
    assert!(r.tightened.contains_point(&best.1, 0.0));
    assert!(o[x].contains(best.1[0]) && o[y].contains(best.1[1]));
    // the bilinear row forces both variables away from zero
    assert!(r.tightened[x].lo > 0.0 && r.tightened[y].lo > 0.0);
}
