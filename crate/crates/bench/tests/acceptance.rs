//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (visible without `--nocapture`) and then asserts.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use minlp_bench::bench::{Config, RunSettings};
use minlp_bench::instance::{read_instance, InstanceData, InstanceKind};
use minlp_bench::oracle::OracleValue;
use minlp_bench::suite::{bundled_dir, read_manifest, read_oracles, MANIFEST_FILE, ORACLE_FILE};
use minlp_core::expr::Expr;
use minlp_core::lp::{solve_lp, solve_milp, LinearProgram, LpStatus, MilpOptions, MilpStatus, Row};
use minlp_core::oa::{solve, solve_subproblem, Algorithm, SolveResult, SolveStatus, SubStatus, SubproblemScale};
use minlp_core::presolve::{fbbt, obbt, presolve, FbbtOptions, PresolveOptions, Tightening};
use minlp_core::relax::{mccormick_eval, no_good_cut};
use minlp_core::testing::{milp_brute_force, random_box, random_expr, random_lp, random_point, vertex_oracle};
use minlp_core::{Assignment, Interval, Model, ModelBuilder, VarBox, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(topic: &str, ok: bool, detail: String) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{} {topic}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{topic}: {detail}");
}

fn within(a: f64, b: f64) -> bool {
    (a - b).abs() <= f64::max(1e-5, 1e-3 * b.abs())
}

struct Instance {
    name: String,
    model: Model,
    data: InstanceData,
    oracle: OracleValue,
}

fn load(kind: InstanceKind) -> Vec<Instance> {
    let dir: PathBuf = bundled_dir(kind);
    let oracles = read_oracles(&dir.join(ORACLE_FILE)).expect("bundled oracle file");
    read_manifest(&dir.join(MANIFEST_FILE))
        .expect("bundled manifest")
        .into_iter()
        .map(|p| {
            let (model, data) = read_instance(&p).expect("bundled instance");
            let data = data.expect("generator data");
            let oracle = oracles[&data.name].clone();
            Instance {
                name: data.name.clone(),
                model,
                data,
                oracle,
            }
        })
        .collect()
}

struct Suite {
    instances: Vec<Instance>,
    /// Runs per configuration label, in instance order.
    runs: BTreeMap<String, Vec<SolveResult>>,
    /// Wall time of the plain configurations together.
    plain_time_s: f64,
}

fn settings() -> RunSettings {
    RunSettings {
        time_limit: Some(300.0),
        ..RunSettings::default()
    }
}

fn run_suite(kind: InstanceKind, configs: &[Config], plain: &[Algorithm]) -> Suite {
    let instances = load(kind);
    let mut runs = BTreeMap::new();
    let mut plain_time_s = 0.0;
    for c in configs {
        let opts = c.options(&settings());
        let start = Instant::now();
        let rs: Vec<SolveResult> = instances
            .iter()
            .map(|i| solve(&i.model, &opts).unwrap_or_else(|e| panic!("{} {}: {e}", i.name, c.label())))
            .collect();
        if !c.convexify && plain.contains(&c.algorithm) {
            plain_time_s += start.elapsed().as_secs_f64();
        }
        runs.insert(c.label(), rs);
    }
    Suite {
        instances,
        runs,
        plain_time_s,
    }
}

fn convex() -> &'static Suite {
    static S: OnceLock<Suite> = OnceLock::new();
    S.get_or_init(|| {
        let configs = [
            Config::new(Algorithm::OA),
            Config::new(Algorithm::LpNlpBB),
            Config::convexified(Algorithm::OA, SubproblemScale::Reduced),
            Config::convexified(Algorithm::OA, SubproblemScale::Complete),
            Config::convexified(Algorithm::LpNlpBB, SubproblemScale::Reduced),
        ];
        run_suite(InstanceKind::Convex, &configs, &[Algorithm::OA, Algorithm::LpNlpBB])
    })
}

fn nonconvex() -> &'static Suite {
    static S: OnceLock<Suite> = OnceLock::new();
    S.get_or_init(|| {
        let configs = [
            Config::new(Algorithm::GOA),
            Config::new(Algorithm::GLpNlpBB),
            Config::convexified(Algorithm::GOA, SubproblemScale::Reduced),
            Config::convexified(Algorithm::GLpNlpBB, SubproblemScale::Complete),
        ];
        run_suite(InstanceKind::Nonconvex, &configs, &[Algorithm::GOA, Algorithm::GLpNlpBB])
    })
}

/// Instances whose run under `label` is not optimal within tolerance of the
/// oracle (and, when `certified`, not certified).
fn oracle_misses(s: &Suite, label: &str, certified: bool) -> Vec<String> {
    s.instances
        .iter()
        .zip(&s.runs[label])
        .filter(|(i, r)| {
            r.status != SolveStatus::Optimal || !within(r.objective, i.oracle.value) || (certified && !r.certified)
        })
        .map(|(i, r)| format!("{} {label} {:?} {} vs {}", i.name, r.status, r.objective, i.oracle.value))
        .collect()
}

#[test]
fn convex_suite_matches_enumeration_oracle() {
    let s = convex();
    let mut misses = oracle_misses(s, "OA", false);
    misses.extend(oracle_misses(s, "LP/NLP-B&B", false));
    let ok = s.instances.len() >= 30 && misses.is_empty() && s.plain_time_s <= 300.0;
    report(
        "convex oracle",
        ok,
        format!(
            "{} instances, {} misses {:?}, OA + LP/NLP-B&B wall time {:.2} s",
            s.instances.len(),
            misses.len(),
            misses,
            s.plain_time_s
        ),
    );
}

#[test]
fn nonconvex_suite_matches_enumeration_oracle() {
    let s = nonconvex();
    let mut misses = oracle_misses(s, "GOA", true);
    misses.extend(oracle_misses(s, "GLP/NLP-B&B", true));
    let ok = s.instances.len() >= 20 && misses.is_empty();
    report(
        "nonconvex oracle",
        ok,
        format!("{} instances, {} misses {:?}, certified global optima", s.instances.len(), misses.len(), misses),
    );
}

#[test]
fn algorithms_agree() {
    let mut bad = Vec::new();
    let mut pairs = 0;
    for (s, a, b) in [(convex(), "OA", "LP/NLP-B&B"), (nonconvex(), "GOA", "GLP/NLP-B&B")] {
        for (k, i) in s.instances.iter().enumerate() {
            let (x, y) = (s.runs[a][k].objective, s.runs[b][k].objective);
            pairs += 1;
            if !((x - y).abs() <= f64::max(1e-5, 1e-3 * x.abs().max(y.abs()))) {
                bad.push(format!("{}: {a} {x} vs {b} {y}", i.name));
            }
        }
    }
    report("cross-algorithm agreement", bad.is_empty(), format!("{pairs} pairs, disagreements {bad:?}"));
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

#[test]
fn initialization_cuts_dominate() {
    let mut bad = Vec::new();
    for (s, plain, conv) in [
        (convex(), "OA", "C-OA(r)"),
        (convex(), "OA", "C-OA(c)"),
        (convex(), "LP/NLP-B&B", "C-LP/NLP-B&B(r)"),
        (nonconvex(), "GOA", "C-GOA(r)"),
        (nonconvex(), "GLP/NLP-B&B", "C-GLP/NLP-B&B(c)"),
    ] {
        for (k, i) in s.instances.iter().enumerate() {
            let (p, c) = (s.runs[plain][k].first_lb, s.runs[conv][k].first_lb);
            if c < p - 1e-9 {
                bad.push(format!("{}: {conv} {c} < {plain} {p}", i.name));
            }
        }
    }
    let s = convex();
    let iters = |label: &str| median(s.runs[label].iter().map(|r| r.nlp_solves).collect());
    let (m_oa, m_c) = (iters("OA"), iters("C-OA(r)"));
    report(
        "initialization-cut dominance",
        bad.is_empty() && m_c <= m_oa,
        format!("first_lb violations {bad:?}; median NLP solves C-OA(r) {m_c} vs OA {m_oa}"),
    );
}

fn random_assignment(rng: &mut ChaCha8Rng, m: &Model) -> Assignment {
    Assignment::new(m.discrete_vars().map(|v| (v, rng.gen_range(0..=1))))
}

#[test]
fn subproblem_scales_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let suites = [(load(InstanceKind::Convex), Algorithm::OA), (load(InstanceKind::Nonconvex), Algorithm::GOA)];
    let mut bad = Vec::new();
    let mut optimal = 0;
    for k in 0..100 {
        // one pair in five from the nonconvex suite
        let (insts, alg) = &suites[usize::from(k % 5 == 4)];
        let inst = &insts[rng.gen_range(0..insts.len())];
        let y = random_assignment(&mut rng, &inst.model);
        let opts = |scale| Config::convexified(*alg, scale).options(&settings());
        let r = solve_subproblem(&inst.model, &opts(SubproblemScale::Reduced), &y).unwrap();
        let c = solve_subproblem(&inst.model, &opts(SubproblemScale::Complete), &y).unwrap();
        let agree = match (r, c) {
            ((SubStatus::Optimal, Some(a)), (SubStatus::Optimal, Some(b))) => {
                optimal += 1;
                (a - b).abs() <= 1e-6 * (1.0 + a.abs())
            }
            ((sa, _), (sb, _)) => sa == sb,
        };
        if !agree {
            bad.push(format!("{} y={:x}: {r:?} vs {c:?}", inst.name, y.stable_hash()));
        }
    }
    report(
        "subproblem scale redundancy",
        bad.is_empty(),
        format!("100 pairs, {optimal} optimal on both scales, mismatches {bad:?}"),
    );
}

/// Uniform rejection sampling of feasible points of a suite instance.
fn check_presolve_sampling(inst: &Instance, rng: &mut ChaCha8Rng, want: usize) -> Result<usize, String> {
    let r = presolve(&inst.model, &mut PresolveOptions::new()).map_err(|e| e.to_string())?;
    let bx = inst.model.bounds();
    let n = inst.data.n_cont();
    let mut found = 0;
    for _ in 0..want * 400 {
        let mut p = random_point(rng, &bx);
        for v in &mut p[n..] {
            *v = rng.gen_range(0..=1) as f64;
        }
        if !inst.model.is_feasible(&p, 0.0) {
            continue;
        }
        found += 1;
        if r.is_infeasible() || !r.tightened.contains_point(&p, 0.0) {
            return Err(format!("{}: {p:?} outside the tightened box", inst.name));
        }
        let lifted = r.avm.lift_point(&p).ok_or_else(|| format!("{}: cannot lift {p:?}", inst.name))?;
        if let Some(c) = r.cuts.iter().find(|c| !c.is_satisfied(&lifted, 1e-9)) {
            return Err(format!("{}: {c} cuts off {p:?}", inst.name));
        }
        if found == want {
            break;
        }
    }
    Ok(found)
}

fn fbbt_examples() -> Vec<String> {
    let mut bad = Vec::new();
    let run = |m: &Model, passes: Option<usize>| {
        let mut o = FbbtOptions::default();
        if let Some(p) = passes {
            o.max_passes = p;
        }
        fbbt(m, &m.bounds(), o).0
    };
    let mut b = ModelBuilder::new("linear");
    let x = b.continuous("x", 0.0, 10.0);
    let y = b.continuous("y", 2.0, 10.0);
    b.minimize(Expr::var(x)).leq(Expr::var(x) + Expr::var(y), 5.0);
    let m = b.build().unwrap();
    let t = run(&m, None).into_box().unwrap();
    if t[x] != Interval::new(0.0, 3.0) || t[y] != Interval::new(2.0, 5.0) {
        bad.push(format!("linear: {t:?}"));
    }

    let mut b = ModelBuilder::new("square");
    let x = b.continuous("x", -10.0, 10.0);
    b.minimize(Expr::var(x)).leq(Expr::var(x).powi(2) - 4.0, 0.0);
    let m = b.build().unwrap();
    let t = run(&m, None).into_box().unwrap();
    if t[x] != Interval::new(-2.0, 2.0) {
        bad.push(format!("square: {t:?}"));
    }

    let mut b = ModelBuilder::new("empty");
    let x = b.continuous("x", -10.0, 10.0);
    b.minimize(Expr::var(x)).geq(Expr::var(x), 3.0).leq(Expr::var(x), 1.0);
    let m = b.build().unwrap();
    if run(&m, None) != Tightening::ProvenInfeasible {
        bad.push("contradiction not proven infeasible".into());
    }

    let mut b = ModelBuilder::new("chain");
    let x = b.continuous("x", -10.0, 10.0);
    let y = b.continuous("y", -10.0, 10.0);
    b.minimize(Expr::var(x))
        .leq(Expr::var(x) - Expr::var(y), 0.0)
        .leq(Expr::var(y) - Expr::var(x), 0.0)
        .leq(Expr::var(y), 2.0)
        .geq(Expr::var(x), 0.0);
    let m = b.build().unwrap();
    let t = run(&m, Some(2)).into_box().unwrap();
    if t[x] != Interval::new(0.0, 2.0) || t[y] != Interval::new(0.0, 2.0) {
        bad.push(format!("chain after 2 passes: {t:?}"));
    }

    let mut b = ModelBuilder::new("obbt");
    let x = b.continuous("x", 0.0, 10.0);
    let y = b.continuous("y", 0.0, 10.0);
    b.minimize(Expr::var(x))
        .leq(Expr::var(x) + Expr::var(y), 5.0)
        .leq(Expr::var(x) - Expr::var(y), 1.0);
    let m = b.build().unwrap();
    let (t, _) = obbt(&m, &[], &m.bounds(), &[x]).unwrap();
    match t.into_box() {
        Some(t) if (t[x].hi - 3.0).abs() <= 1e-8 && t[x].lo == 0.0 => {}
        other => bad.push(format!("obbt: {other:?}")),
    }
    bad
}

#[test]
fn domain_reduction_is_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut errors = Vec::new();
    let mut full = 0;
    let mut checked = 0;
    for kind in [InstanceKind::Convex, InstanceKind::Nonconvex] {
        for inst in load(kind).iter().step_by(3) {
            checked += 1;
            match check_presolve_sampling(inst, &mut rng, 10_000) {
                Ok(n) if n == 10_000 => full += 1,
                Ok(n) => errors.push(format!("{}: only {n} feasible samples", inst.name)),
                Err(e) => errors.push(e),
            }
        }
    }
    let hand = fbbt_examples();
    report(
        "domain-reduction soundness",
        errors.is_empty() && hand.is_empty(),
        format!("{full}/{checked} instances with 10^4 feasible samples each, errors {errors:?}; hand-worked examples {hand:?}"),
    );
}

#[test]
fn relaxations_sandwich_the_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tol = |v: f64| 1e-7 * (1.0 + v.abs());
    let mut bad = Vec::new();
    for t in 0..1000 {
        let bx = random_box(&mut rng, 3);
        let e = random_expr(&mut rng, &bx, 4);
        let p = random_point(&mut rng, &bx);
        let m = mccormick_eval(&e, &bx, &p).unwrap();
        let f = e.eval(&p).unwrap();
        if !(m.cv <= f + tol(f) && f <= m.cc + tol(f)) {
            bad.push(format!("triple {t}: {e} cv {} f {f} cc {}", m.cv, m.cc));
            continue;
        }
        for _ in 0..100 {
            let q = random_point(&mut rng, &bx);
            let fq = e.eval(&q).unwrap();
            if m.under_at(&p, &q) > fq + tol(fq) || m.over_at(&p, &q) < fq - tol(fq) {
                bad.push(format!("triple {t}: {e} estimator invalid at {q:?}"));
                break;
            }
        }
    }
    let unit = VarBox::new(vec![Interval::new(0.0, 1.0); 2]);
    let bil = mccormick_eval(&(Expr::var(VarId(0)) * Expr::var(VarId(1))), &unit, &[0.5, 0.5]).unwrap();
    let ok = bad.is_empty() && (bil.cv, bil.cc) == (0.0, 0.5);
    report(
        "relaxation sandwich",
        ok,
        format!("1000 triples x 100 points, failures {bad:?}; bilinear cv {} cc {}", bil.cv, bil.cc),
    );
}

fn fd_check(e: &Expr, p: &[f64]) -> bool {
    let g = e.gradient(p).unwrap();
    (0..p.len()).all(|i| {
        let h = 1e-6 * (1.0 + p[i].abs());
        let (mut a, mut b) = (p.to_vec(), p.to_vec());
        a[i] += h;
        b[i] -= h;
        match (e.eval(&a), e.eval(&b)) {
            (Ok(fa), Ok(fb)) => ((fa - fb) / (2.0 * h) - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()),
            _ => true,
        }
    })
}

#[test]
fn kernels_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut bad = Vec::new();

    let mut lp = LinearProgram::new(minlp_core::lp::nonnegative(2));
    lp.objective = vec![-1.0, -1.0];
    lp.add_row(Row::le(vec![(0, 1.0), (1, 2.0)], 4.0));
    lp.add_row(Row::le(vec![(0, 3.0), (1, 1.0)], 6.0));
    let sol = solve_lp(&lp, 1e-9).unwrap();
    if sol.status != LpStatus::Optimal || (sol.objective + 2.8).abs() > 1e-9 {
        bad.push(format!("worked LP: {:?} {}", sol.status, sol.objective));
    }
    let mut lps = 0;
    for t in 0..400 {
        let m = rng.gen_range(1..=5);
        let lp = random_lp(&mut rng, 2 + t % 2, m);
        let sol = solve_lp(&lp, 1e-9).unwrap();
        lps += 1;
        let ok = match vertex_oracle(&lp) {
            Some(v) => sol.status == LpStatus::Optimal && (sol.objective - v).abs() <= 1e-9 * (1.0 + v.abs()),
            None => sol.status == LpStatus::Infeasible,
        };
        if !ok {
            bad.push(format!("LP {t}: {:?} {}", sol.status, sol.objective));
        }
    }

    let mut milps = 0;
    for t in 0..150 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=4);
        let mut lp = random_lp(&mut rng, n, m);
        let ints: Vec<usize> = (0..rng.gen_range(1..=n)).collect();
        let points: f64 = ints.iter().map(|&j| lp.bounds[j].width() + 1.0).product();
        if points > 4096.0 {
            for &j in &ints {
                lp.bounds[j] = Interval::new(0.0, 3.0);
            }
        }
        milps += 1;
        let r = solve_milp(&lp, &ints, None, MilpOptions::default()).unwrap();
        let ok = match milp_brute_force(&lp, &ints) {
            Some(v) => r.status == MilpStatus::Optimal && (r.objective - v).abs() <= 1e-7 * (1.0 + v.abs()),
            None => r.status == MilpStatus::Infeasible,
        };
        if !ok {
            bad.push(format!("MILP {t}: {:?} {}", r.status, r.objective));
        }
    }

    let mut grads = 0;
    for _ in 0..300 {
        let bx = random_box(&mut rng, 3);
        let e = random_expr(&mut rng, &bx, 4);
        let p = random_point(&mut rng, &bx);
        grads += 1;
        if !fd_check(&e, &p) {
            bad.push(format!("gradient of {e} at {p:?}"));
        }
    }
    for inst in load(InstanceKind::Convex).iter().chain(&load(InstanceKind::Nonconvex)) {
        let p = random_point(&mut rng, &inst.model.bounds());
        for e in std::iter::once(&*inst.model.objective).chain(inst.model.constraints.iter().map(|c| &*c.body)) {
            grads += 1;
            if !fd_check(e, &p) {
                bad.push(format!("{} gradient at {p:?}", inst.name));
            }
        }
    }
    report(
        "kernel oracles",
        bad.is_empty(),
        format!("-2.8 LP, {lps} LPs, {milps} MILPs, {grads} gradients; failures {bad:?}"),
    );
}

#[test]
fn no_goods_are_exact_and_never_repeat() {
    let mut bad = Vec::new();
    for n in 1..=12usize {
        let mut b = ModelBuilder::new("bits");
        let vars: Vec<VarId> = (0..n).map(|j| b.binary(format!("y{j}"))).collect();
        b.minimize(Expr::var(vars[0]));
        let m = b.build().unwrap();
        let points: Vec<Vec<f64>> = (0..1u32 << n)
            .map(|bits| (0..n).map(|j| ((bits >> j) & 1) as f64).collect())
            .collect();
        for (k, p) in points.iter().enumerate() {
            let y = Assignment::from_point(&m, p);
            let cut = no_good_cut(&m, &y).unwrap();
            let excluded: Vec<usize> = points
                .iter()
                .enumerate()
                .filter(|(_, q)| !cut.is_satisfied(q, 1e-9))
                .map(|(j, _)| j)
                .collect();
            if excluded != [k] {
                bad.push(format!("n={n} assignment {k} excludes {excluded:?}"));
                break;
            }
        }
    }
    let mut repeats = Vec::new();
    let mut traces = 0;
    for label in ["GOA", "C-GOA(r)", "GLP/NLP-B&B", "C-GLP/NLP-B&B(c)"] {
        for (inst, r) in nonconvex().instances.iter().zip(&nonconvex().runs[label]) {
            traces += 1;
            let mut seen = HashSet::new();
            for l in r.log.iter().filter(|l| l.subproblem != SubStatus::None) {
                if l.subproblem == SubStatus::Repeated || !seen.insert(l.assignment_hash) {
                    repeats.push(format!("{} {label} iteration {}", inst.name, l.iteration));
                }
            }
        }
    }
    report(
        "no-good exactness",
        bad.is_empty() && repeats.is_empty(),
        format!("all assignments for n <= 12: {bad:?}; {traces} global traces, repeats {repeats:?}"),
    );
}

#[test]
fn bounds_are_monotone() {
    let mut bad = Vec::new();
    let mut logs = 0;
    for s in [convex(), nonconvex()] {
        for (label, rs) in &s.runs {
            for (inst, r) in s.instances.iter().zip(rs) {
                logs += 1;
                let ok = r.log.windows(2).all(|w| w[1].lb >= w[0].lb && w[1].ub <= w[0].ub);
                if !ok {
                    bad.push(format!("{} {label}", inst.name));
                }
            }
        }
    }
    report("bound monotonicity", bad.is_empty(), format!("{logs} iteration logs, violations {bad:?}"));
}
