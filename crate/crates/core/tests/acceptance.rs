//! End-to-end acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use attractor_lab::attractor::{
    build_tracking_net_with, equicontinuity_modulus, greedy_cover, harvest_pieces, piece_distance, section_check,
    tracking_schedule, verify_tracking, PieceLibrary, TrackingNet, TrackingReport,
};
use attractor_lab::forcing::{
    builtin_force, catalog_profile, classify_force, log_times, pointwise_limit_probe, Force, ForceParams,
    ModulusTable, Probe, Symbol, DEFAULT_DELTAS,
};
use attractor_lab::nse2d::{energy_budget, NseParams, NseSystem};
use attractor_lab::phase::{strong_dist, Basis, MetricSpec, PhaseVector};
use attractor_lab::rds::{energy_identity_check, Nonlinearity, RdsParams, RdsSystem};
use attractor_lab::systems::{
    ensemble, random_initial_data, reach_sample, snapshots, translate, Evolution, Trajectory, TrajectoryPiece,
};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn run(id: usize, title: &str, budget: Option<f64>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = budget.map_or(true, |b| secs < b);
    let pass = o.pass && in_time;
    let timing = match budget {
        Some(b) => format!("{secs:.1} s of {b:.0} s"),
        None => format!("{secs:.1} s"),
    };
    say(&format!(
        "criterion {id} {:<4} {title}: {} ({timing})",
        if pass { "PASS" } else { "FAIL" },
        o.detail
    ));
    pass
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn rds_end(dt: f64, u0: &PhaseVector) -> PhaseVector {
    let sys = chafee_infante_system(dt, 0.04, None);
    sys.integrate(u0, 0.0, 1.0).unwrap().last().clone()
}

fn nse_end(dt: f64, u0: &PhaseVector) -> PhaseVector {
    let sys = nse_system("quasiperiodic", 5.0, 0.5, dt, 0.01);
    sys.integrate(u0, 0.0, 1.0).unwrap().last().clone()
}

fn criterion_1() -> Outcome {
    // shear flow: sin(y) profile, |κ|² = 1, ν = 1
    let params = NseParams { nu: 1.0, dt: 1e-3, modes: 16, ..NseParams::default() };
    let basis = params.basis();
    let shear = catalog_profile(&basis, 1).unwrap().scaled(3.0);
    let sys = NseSystem::new(params, Symbol::zero(basis), 0.5).unwrap();
    let end = sys.integrate(&shear, 0.0, 1.0).unwrap().last().clone();
    let exact = shear.scaled((-1.0f64).exp());
    let shear_err = strong_dist(&end, &exact).unwrap() / exact.norm();

    let params = RdsParams::default();
    let basis = params.basis();
    let sys = RdsSystem::new(
        params,
        Symbol::new("heat", Force::zero(basis), Some(Nonlinearity::builtin("zero", 2.0).unwrap())),
        0.5,
    )
    .unwrap();
    let u0 = random_initial_data(&basis, 1, 1.0, 64, 11).unwrap().points[0].clone();
    let end = sys.integrate(&u0, 0.0, 1.0).unwrap().last().clone();
    let mut exact = u0.clone();
    for (m, c) in exact.coeffs_mut().iter_mut().enumerate() {
        *c *= (-params.diffusion * basis.eigenvalue(m)).exp();
    }
    let heat_err = strong_dist(&end, &exact).unwrap() / exact.norm();

    let rb = Basis::sine(PI, 64);
    let v0 = random_initial_data(&rb, 1, 1.0, 6, 5).unwrap().points[0].clone();
    let r: Vec<_> = [0.02, 0.01, 0.005].iter().map(|&dt| rds_end(dt, &v0)).collect();
    let rds_order = order(
        strong_dist(&r[0], &r[1]).unwrap(),
        strong_dist(&r[1], &r[2]).unwrap(),
    );
    let nb = Basis::fourier2d(2.0 * PI, 16);
    let w0 = random_initial_data(&nb, 1, 5.0, 4, 5).unwrap().points[0].clone();
    let n: Vec<_> = [0.01, 0.005, 0.0025].iter().map(|&dt| nse_end(dt, &w0)).collect();
    let nse_order = order(
        strong_dist(&n[0], &n[1]).unwrap(),
        strong_dist(&n[1], &n[2]).unwrap(),
    );
    let pass = shear_err < 1e-6
        && heat_err < 1e-6
        && (rds_order - 4.0).abs() <= 0.3
        && (nse_order - 4.0).abs() <= 0.3;
    Outcome {
        pass,
        detail: format!(
            "shear rel err {shear_err:.2e}, heat rel err {heat_err:.2e} (< 1e-6); order rds {rds_order:.3}, nse {nse_order:.3} (4 ± 0.3)"
        ),
    }
}

fn criterion_2() -> Outcome {
    let sys = nse_system("quasiperiodic", 5.0, 0.5, 1e-3, 1e-3);
    let basis = sys.basis();
    let init = random_initial_data(&basis, 10, 10.0, 4, 7).unwrap();
    let runs = ensemble(&sys, &init, 2.0).unwrap();
    let worst = runs
        .iter()
        .map(|u| energy_budget(u, sys.symbol(), sys.params().nu).unwrap().max_violation)
        .fold(0.0, f64::max);

    // start past the initial layer of the high sine modes
    let pre = chafee_infante_system(1e-3, 0.5, Some(5.0));
    let raw = random_initial_data(&pre.basis(), 1, 3.0, 6, 3).unwrap().points[0].clone();
    let u0 = pre.integrate(&raw, 0.0, 1.0).unwrap().last().clone();
    let residual = |dt: f64| {
        let sys = chafee_infante_system(dt, dt, Some(5.0));
        let u = sys.integrate(&u0, 0.0, 1.0).unwrap();
        energy_identity_check(&u, &sys).unwrap().max_residual
    };
    let r: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&dt| residual(dt)).collect();
    let o1 = (r[0] / r[1]).log2();
    let o2 = (r[1] / r[2]).log2();
    let pass = worst < 1e-6 && (o1 - 4.0).abs() <= 0.3 && (o2 - 4.0).abs() <= 0.3;
    Outcome {
        pass,
        detail: format!(
            "nse max violation {worst:.2e} over 10 runs (< 1e-6); rds identity residuals {:.2e}, {:.2e}, {:.2e}, orders {o1:.2}, {o2:.2} (4 ± 0.3)",
            r[0], r[1], r[2]
        ),
    }
}

/// Entry check for runs from `|u₀| = 10R`: the first sample inside
/// `{|u| ≤ R}` comes before `t̄(10R)` and the run stays inside afterwards.
fn entry_check<S: Evolution>(sys: &S, max_mode: usize, seed: u64) -> (usize, f64, f64) {
    let ball = sys.absorbing_ball();
    let r = ball.radius;
    let tbar = ball.entry_time(10.0 * r);
    let horizon = grid_ceil(tbar + 1.0, sys.sample_dt());
    let init = random_initial_data(&sys.basis(), 20, 10.0 * r, max_mode, seed).unwrap();
    let runs = ensemble(sys, &init, horizon).unwrap();
    let mut ok = 0;
    let mut latest: f64 = 0.0;
    for u in &runs {
        let norms = u.norms();
        if let Some(i) = norms.iter().position(|&n| n <= r) {
            latest = latest.max(u.time(i));
            if u.time(i) <= tbar && norms[i..].iter().all(|&n| n <= r) {
                ok += 1;
            }
        } else {
            latest = f64::INFINITY;
        }
    }
    (ok, latest, tbar)
}

fn criterion_3() -> Outcome {
    let nse = nse_system("constant", 5.0, 0.5, 1e-2, 0.05);
    let (n_ok, n_last, n_tbar) = entry_check(&nse, 4, 31);
    let rds = chafee_infante_system(1e-3, 0.01, Some(1.0));
    let (r_ok, r_last, r_tbar) = entry_check(&rds, 8, 32);
    Outcome {
        pass: n_ok == 20 && r_ok == 20,
        detail: format!(
            "nse {n_ok}/20 (latest entry {n_last:.2}, predicted {n_tbar:.2}); rds {r_ok}/20 (latest entry {r_last:.2}, predicted {r_tbar:.2})"
        ),
    }
}

struct Tracked {
    name: &'static str,
    lib: PieceLibrary,
    diam: f64,
    net: TrackingNet,
    report: TrackingReport,
    tests: Vec<Trajectory>,
    t0: f64,
    horizon: f64,
}

const T: f64 = 1.0;
const STRIDE: f64 = 0.25;

fn track<S: Evolution>(name: &'static str, sys: &S, lib_runs: usize, max_mode: usize) -> Tracked {
    let ball = sys.absorbing_ball();
    let tbar = ball.entry_time(ball.radius);
    let t0 = grid_ceil(5.0 * tbar, sys.sample_dt());
    let horizon = grid_ceil(50.0 * tbar, STRIDE);
    let init = random_initial_data(&sys.basis(), lib_runs, ball.radius, max_mode, 1).unwrap();
    let lib = harvest_pieces(sys, &init, t0, T, STRIDE, horizon).unwrap();
    let dist = lib.distance_matrix();
    let diam = dist.diameter();
    let net = build_tracking_net_with(&lib, &dist, 0.1 * diam).unwrap();
    let fresh = random_initial_data(&sys.basis(), 10, ball.radius, max_mode, 99).unwrap();
    let tests = ensemble(sys, &fresh, horizon).unwrap();
    let report = verify_tracking(&net, &tests, t0).unwrap();
    Tracked { name, lib, diam, net, report, tests, t0, horizon }
}

fn criterion_4(out: &mut Vec<Tracked>) -> Outcome {
    let ci = chafee_infante_system(1e-3, 0.01, None);
    out.push(track("chafee-infante", &ci, 8, 8));
    let nse = nse_system("quasiperiodic", 5.0, 0.5, 1e-2, 0.05);
    out.push(track("nse quasiperiodic", &nse, 4, 4));
    let pass = out
        .iter()
        .all(|t| t.report.passed == 10 && t.report.tests.len() == 10 && t.report.max_distance < t.net.epsilon());
    let detail = out
        .iter()
        .map(|t| {
            format!(
                "{} {}/10 (library {}, net {}, eps {:.3e}, worst window min {:.3e})",
                t.name,
                t.report.passed,
                t.lib.len(),
                t.net.len(),
                t.net.epsilon(),
                t.report.max_distance
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { pass, detail }
}

fn criterion_5(tracked: &[Tracked]) -> Outcome {
    let mut pass = tracked.len() == 2;
    let mut parts = Vec::new();
    for t in tracked {
        let h = t.lib.dt();
        let gaps = [0.0, h, 2.0 * h, 4.0 * h, 0.25, 0.5, 1.0];
        let th = equicontinuity_modulus(&t.lib, &gaps).unwrap();
        let ok = th.is_monotone() && th.theta[0] == 0.0 && th.theta[1] < 0.05 * t.diam;
        pass &= ok;
        parts.push(format!(
            "{} theta(0) = {:.1e}, theta(dt) = {:.3e} (< {:.3e}), nondecreasing {}",
            t.name,
            th.theta[0],
            th.theta[1],
            0.05 * t.diam,
            th.is_monotone()
        ));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn criterion_6(tracked: &[Tracked]) -> Outcome {
    let mut pass = tracked.len() == 2;
    let mut parts = Vec::new();
    for t in tracked {
        let omega = snapshots(&t.tests, t.t0, t.horizon, STRIDE).unwrap();
        let tol = 2.0 * t.net.epsilon();
        let rep = section_check(&t.lib, &[0.0, 0.5 * T, T], &omega, tol).unwrap();
        pass &= rep.pass && rep.max < tol;
        parts.push(format!("{} max Hausdorff {:.3e} (< {:.3e})", t.name, rep.max, tol));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn criterion_7() -> Outcome {
    let basis = Basis::sine(PI, 64);
    let probe = Probe::default();
    let classify = |name: &str| {
        let g = builtin_force(name, &basis, ForceParams::default()).unwrap();
        classify_force(&Symbol::new(name, g, None), &DEFAULT_DELTAS, &probe).unwrap()
    };
    let constant = classify("constant");
    let qp = classify("quasiperiodic");
    let spike = classify("spike_train");
    let spike_min = spike.defects.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let forces_ok = constant.normal
        && qp.normal
        && spike.translation_bounded
        && !spike.normal
        && spike_min >= 0.9;

    let e1 = Nonlinearity::builtin("example1", 3.0).unwrap();
    let e2 = Nonlinearity::builtin("example2", 3.0).unwrap();
    let mod_times = log_times(1e4, 32);
    let m1 = attractor_lab::forcing::equicontinuity_modulus(&e1, 1.0, &mod_times, 1e-4, 10).unwrap();
    let m2 = attractor_lab::forcing::equicontinuity_modulus(&e2, 1.0, &mod_times, 1e-4, 10).unwrap();
    let ratio = |m: &ModulusTable| m.theta[m.theta.len() - 1] / m.theta[0];

    let probe_times = log_times(1e6, 64);
    let v1: Vec<f64> = (-64..=64).map(|k| k as f64 / 64.0).collect();
    let p1 = pointwise_limit_probe(&e1, &v1, &probe_times, 1e-3).unwrap();
    let jump = p1.jump.map_or(0.0, |j| j.2);
    let v2: Vec<f64> = (-8..=8).map(|k| k as f64 * PI / 8.0).collect();
    let p2 = pointwise_limit_probe(&e2, &v2, &probe_times, 1e-3).unwrap();
    let diverges = p2.diverges_at(PI / 2.0);

    let pass = forces_ok && !m1.pass && !m2.pass && (jump - 1.0).abs() <= 0.05 && diverges == Some(true);
    Outcome {
        pass,
        detail: format!(
            "normal: constant {}, quasiperiodic {}; spike train bounded {}, normal {}, min defect {spike_min:.3} (>= 0.9); \
             example1 modulus pass {} (theta ratio {:.2}), example2 modulus pass {} (theta ratio {:.2}); \
             example1 jump {jump:.4} (1 ± 0.05); example2 diverges at pi/2 {:?}",
            constant.normal,
            qp.normal,
            spike.translation_bounded,
            spike.normal,
            m1.pass,
            ratio(&m1),
            m2.pass,
            ratio(&m2),
            diverges
        ),
    }
}

fn metric_axioms() -> (bool, usize) {
    let mut r = rng(81);
    let mut checked = 0;
    let mut ok = true;
    for basis in [Basis::sine(PI, 8), Basis::fourier2d(2.0 * PI, 3)] {
        for metric in [MetricSpec::strong(), MetricSpec::weak()] {
            for _ in 0..100 {
                let x = random_vector(basis, 2.0, &mut r);
                let y = random_vector(basis, 2.0, &mut r);
                let z = random_vector(basis, 2.0, &mut r);
                let d = |a, b| metric.dist(a, b).unwrap();
                ok &= d(&x, &x) == 0.0;
                ok &= d(&x, &y) == d(&y, &x);
                ok &= d(&x, &y) > 0.0;
                ok &= d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12;
                checked += 1;
            }
        }
    }
    (ok, checked)
}

fn semigroup_laws() -> (bool, f64) {
    let mut r = rng(82);
    let u = random_walk(Basis::sine(1.0, 3), 200, 0.1, 0.2, &mut r);
    let mut ok = true;
    for (a, b) in [(0.3, 0.5), (1.0, 2.5), (0.0, 4.0), (7.2, 0.0)] {
        let twice = translate(&translate(&u, a).unwrap(), b).unwrap();
        let once = translate(&u, a + b).unwrap();
        ok &= twice.samples() == once.samples();
    }
    let sys = chafee_infante_system(1e-3, 0.01, None);
    let a = random_initial_data(&sys.basis(), 4, 3.0, 8, 83).unwrap();
    let composed = reach_sample(&sys, &reach_sample(&sys, &a, 0.3).unwrap(), 0.2).unwrap();
    let direct = reach_sample(&sys, &a, 0.5).unwrap();
    let worst = composed
        .points
        .iter()
        .zip(&direct.points)
        .map(|(x, y)| strong_dist(x, y).unwrap() / y.norm().max(1.0))
        .fold(0.0, f64::max);
    ok &= worst < 1e-12;
    let same = reach_sample(&sys, &a, 0.0).unwrap();
    ok &= same.points == a.points;
    (ok, worst)
}

fn net_coverage() -> (bool, usize) {
    let lib = walk_library(4, 15, 84);
    let dist = lib.distance_matrix();
    let eps = 0.4 * dist.diameter();
    let net = build_tracking_net_with(&lib, &dist, eps).unwrap();
    let metric = MetricSpec::strong();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for p in lib.pieces() {
        let m = net
            .members()
            .iter()
            .map(|q| piece_distance(p, q, &metric).unwrap())
            .fold(f64::INFINITY, f64::min);
        ok &= m < 0.5 * eps;
        worst = worst.max(m);
    }
    ok &= (worst - net.coverage()).abs() <= 1e-12 * worst.max(1.0);
    (ok, lib.len())
}

fn argmin_optimality() -> (bool, usize) {
    let lib = walk_library(4, 15, 85);
    let dist = lib.distance_matrix();
    let net = build_tracking_net_with(&lib, &dist, 0.3 * dist.diameter()).unwrap();
    let mut r = rng(86);
    let u = Arc::new(random_walk(*lib.basis(), 4 * 20 + 1, lib.dt(), 0.3, &mut r));
    let sched = tracking_schedule(&net, &u, 0, 19).unwrap();
    let metric = MetricSpec::strong();
    let mut ok = sched.len() == 20;
    for e in &sched {
        let w = TrajectoryPiece::new(u.clone(), 0, e.window_start, T).unwrap();
        let d: Vec<f64> = net.members().iter().map(|m| piece_distance(&w, m, &metric).unwrap()).collect();
        let best = d.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= (d[e.index] - e.distance).abs() <= 1e-12 * best.max(1.0);
        ok &= e.distance <= best;
    }
    (ok, sched.len())
}

fn greedy_vs_exhaustive() -> (bool, usize, f64) {
    let mut ok = true;
    let mut cases = 0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..12u64 {
        let lib = walk_library(3, 5, 900 + seed);
        let dist = lib.distance_matrix();
        let n = dist.len();
        for frac in [0.1, 0.25, 0.5, 0.9] {
            let radius = frac * dist.diameter();
            let g = greedy_cover(&dist, radius);
            let covered = (0..n).all(|j| g.iter().any(|&c| dist.get(c, j) < radius));
            let m = exhaustive_min_cover(&dist, radius);
            let bound = m as f64 * (1.0 + (n as f64).ln());
            ok &= covered && g.len() >= m && g.len() as f64 <= bound;
            worst_ratio = worst_ratio.max(g.len() as f64 / m as f64);
            cases += 1;
        }
    }
    (ok, cases, worst_ratio)
}

fn criterion_8() -> Outcome {
    let (axioms, triples) = metric_axioms();
    let (semigroup, drift) = semigroup_laws();
    let (coverage, pieces) = net_coverage();
    let (argmin, windows) = argmin_optimality();
    let (greedy, cases, ratio) = greedy_vs_exhaustive();
    Outcome {
        pass: axioms && semigroup && coverage && argmin && greedy,
        detail: format!(
            "metric axioms {axioms} ({triples} triples); semigroup {semigroup} (reach drift {drift:.1e}); \
             coverage {coverage} ({pieces} pieces); argmin {argmin} ({windows} windows); \
             greedy vs exhaustive {greedy} ({cases} libraries of 15, worst ratio {ratio:.2})"
        ),
    }
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    results.push(run(1, "solver oracles", Some(30.0), criterion_1));
    results.push(run(2, "energy inequality", Some(120.0), criterion_2));
    results.push(run(3, "absorbing ball", Some(300.0), criterion_3));
    let mut tracked = Vec::new();
    results.push(run(4, "finite strong uniform tracking", Some(1200.0), || criterion_4(&mut tracked)));
    results.push(run(5, "equicontinuity", None, || criterion_5(&tracked)));
    results.push(run(6, "section property", None, || criterion_6(&tracked)));
    results.push(run(7, "classifier ground truths", Some(60.0), criterion_7));
    results.push(run(8, "structural invariants", Some(120.0), criterion_8));
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(i, _)| i + 1)
        .collect();
    say(&format!("acceptance: {}/8 criteria pass", 8 - failed.len()));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
