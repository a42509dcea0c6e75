use minlp_core::expr::Expr;
use minlp_core::relax::{affine_overestimator, affine_underestimator, mccormick_eval, Avm};
use minlp_core::testing::{random_box, random_expr, random_point, random_subbox};
use minlp_core::{ModelBuilder, VarId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tol(v: f64) -> f64 {
    1e-7 * (1.0 + v.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn sandwich_and_subgradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let bx = random_box(&mut rng, n);
        let e = random_expr(&mut rng, &bx, 4);
        let p = random_point(&mut rng, &bx);
        let m = mccormick_eval(&e, &bx, &p).unwrap();
        let f = e.eval(&p).unwrap();
        prop_assert!(m.iv.lo <= m.cv && m.cv <= f + tol(f) && f <= m.cc + tol(f) && m.cc <= m.iv.hi,
            "{e}: iv={} cv={} f={} cc={}", m.iv, m.cv, f, m.cc);
        for _ in 0..50 {
            let q = random_point(&mut rng, &bx);
            let fq = e.eval(&q).unwrap();
            prop_assert!(m.under_at(&p, &q) <= fq + tol(fq), "{e} under at {q:?}");
            prop_assert!(m.over_at(&p, &q) >= fq - tol(fq), "{e} over at {q:?}");
        }
    }

    #[test]
    fn shrinking_the_box_never_loosens(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bx = random_box(&mut rng, 2);
        let e = random_expr(&mut rng, &bx, 3);
        let p = random_point(&mut rng, &bx);
        let inner = random_subbox(&mut rng, &bx, &p);
        let outer = mccormick_eval(&e, &bx, &p).unwrap();
        let tight = mccormick_eval(&e, &inner, &p).unwrap();
        prop_assert!(tight.cv >= outer.cv - tol(outer.cv), "{e}: cv {} -> {}", outer.cv, tight.cv);
        prop_assert!(tight.cc <= outer.cc + tol(outer.cc), "{e}: cc {} -> {}", outer.cc, tight.cc);
    }

    #[test]
    fn affine_estimators_are_valid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bx = random_box(&mut rng, 2);
        let e = random_expr(&mut rng, &bx, 3);
        let p = random_point(&mut rng, &bx);
        let lo = affine_underestimator(&e, &bx, &p).unwrap();
        let hi = affine_overestimator(&e, &bx, &p).unwrap();
        for _ in 0..50 {
            let q = random_point(&mut rng, &bx);
            let fq = e.eval(&q).unwrap();
            prop_assert!(lo.eval(&q) <= fq + tol(fq));
            prop_assert!(hi.eval(&q) >= fq - tol(fq));
        }
    }

    #[test]
    fn envelope_cuts_hold_on_the_factor_graph(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bx = random_box(&mut rng, 2);
        let mut b = ModelBuilder::new("cuts");
        for (i, iv) in bx.iter().enumerate() {
            b.continuous(format!("x{i}"), iv.lo, iv.hi);
        }
        let obj = random_expr(&mut rng, &bx, 3);
        let row = random_expr(&mut rng, &bx, 3);
        b.minimize(obj);
        b.leq(row.clone(), 0.0);
        let m = b.build().unwrap();
        let avm = Avm::build(&m, &bx).unwrap();
        let pts: Vec<Vec<f64>> = (0..3).map(|_| random_point(&mut rng, &bx)).collect();
        let cuts = avm.envelope_cuts(&m, &pts);
        for _ in 0..200 {
            let q = random_point(&mut rng, &bx);
            let lifted = avm.lift_point(&q).unwrap();
            let feasible = row.eval(&q).unwrap() <= 0.0;
            for c in &cuts {
                if c.source.starts_with("lifted") && !feasible {
                    continue;
                }
                prop_assert!(c.is_satisfied(&lifted, 1e-7), "{c} at {q:?}");
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let bx = random_box(&mut rng, 3);
        let e = random_expr(&mut rng, &bx, 4);
        let p = random_point(&mut rng, &bx);
        let g = e.gradient(&p).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let (fa, fb) = match (e.eval(&a), e.eval(&b)) {
                (Ok(fa), Ok(fb)) => (fa, fb),
                _ => continue,
            };
            let fd = (fa - fb) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "{e} d/dx{i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn interval_eval_encloses_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let bx = random_box(&mut rng, 3);
        let e = random_expr(&mut rng, &bx, 4);
        let iv = e.interval_eval(&bx).unwrap();
        for _ in 0..1000 {
            let p = random_point(&mut rng, &bx);
            let v = e.eval(&p).unwrap();
            assert!(iv.contains(v), "{e}: {v} outside {iv}");
        }
    }
}

#[test]
fn bilinear_example() {
    let e = Expr::var(VarId(0)) * Expr::var(VarId(1));
    let bx = minlp_core::VarBox::new(vec![minlp_core::Interval::new(0.0, 1.0); 2]);
    let m = mccormick_eval(&e, &bx, &[0.5, 0.5]).unwrap();
    assert_eq!((m.cv, m.cc), (0.0, 0.5));
}
