//! End-to-end acceptance checks. Runs without the libtest harness so that the
//! one-line verdicts always reach the output; exits non-zero if any fails.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::Mat;
use pmu_core::convex::{log_det_minorizer, trace_inverse_majorizer};
use pmu_core::placement::{SwapObjective, TraceSwap};
use pmu_core::{
    box_relax_round, local_search, min_pmu_blp, min_pmu_iterative, monte_carlo_mse, penalized,
    BlpOptions, BoxRelaxConfig, ConstraintKind, EstimationSettings, IeeeCase, LocalSearchConfig,
    MinPmuConfig, Network, ObjectiveKind, ObservabilityConstraint, PenalizedConfig, Placement,
};

type Check = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn ieee(case: IeeeCase) -> Network {
    Network::from_grid(&case.load().unwrap(), &EstimationSettings::default()).unwrap()
}

fn s_min(case: IeeeCase, kind: ConstraintKind) -> usize {
    let c = ObservabilityConstraint::for_grid(kind, &case.load().unwrap());
    min_pmu_blp(&c, &BlpOptions::default()).unwrap().s_min
}

fn table_minimums() -> Verdict {
    let start = Instant::now();
    let expected = [(10, 4), (13, 7), (17, 11), (32, 18)];
    let mut ok = true;
    let mut got = Vec::new();
    for (case, want) in IeeeCase::ALL.into_iter().zip(expected) {
        let g = case.load().unwrap();
        let mut pair = [0; 2];
        for (i, kind) in [ConstraintKind::Complete, ConstraintKind::DepthOne].into_iter().enumerate() {
            let sol = min_pmu_blp(&ObservabilityConstraint::for_grid(kind, &g), &BlpOptions::default()).unwrap();
            ok &= sol.gap == 0 && sol.proven_optimal;
            pair[i] = sol.s_min;
        }
        ok &= (pair[0], pair[1]) == want;
        got.push(format!("{}→({},{})", case.name(), pair[0], pair[1]));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(ok && secs <= 60.0, format!("{} in {secs:.2} s", got.join(" ")))
}

fn surrogate_soundness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut violation, mut touch) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(2..=8);
        let nt = rng.random_range(1..=8);
        let m = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a0 = &m * m.transpose() + Mat::identity(n, n) * 0.1;
        let terms: Vec<Mat> = (0..nt)
            .map(|_| {
                let r = rng.random_range(1..=n);
                let v = Mat::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
                &v * v.transpose()
            })
            .collect();
        let y_bar: Vec<f64> = (0..nt).map(|_| rng.random_range(0.05..3.0)).collect();
        let y: Vec<f64> = (0..nt).map(|_| rng.random_range(0.05..3.0)).collect();
        let phi = |y: &[f64]| {
            let mut p = a0.clone();
            for (a, &w) in terms.iter().zip(y) {
                p += a * w;
            }
            p
        };
        let up = trace_inverse_majorizer(&a0, &terms[..], &y_bar).unwrap();
        let lo = log_det_minorizer(&a0, &terms[..], &y_bar).unwrap();
        let tr = |y: &[f64]| phi(y).try_inverse().unwrap().trace();
        let ld = |y: &[f64]| phi(y).determinant().ln();
        violation = violation.max(tr(&y) - up.eval(&y)).max(lo.eval(&y) - ld(&y));
        touch = touch
            .max((tr(&y_bar) - up.eval(&y_bar)).abs())
            .max((ld(&y_bar) - lo.eval(&y_bar)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        violation <= 1e-9 && touch <= 1e-8 && secs <= 10.0,
        format!("max violation {violation:.1e}, max touching gap {touch:.1e}, {secs:.2} s"),
    )
}

fn majorization_descent() -> Verdict {
    let mut failures = Vec::new();
    let mut runs = 0;
    for case in [IeeeCase::Ieee30, IeeeCase::Ieee39, IeeeCase::Ieee57] {
        let net = ieee(case);
        let co = s_min(case, ConstraintKind::Complete);
        let doou = s_min(case, ConstraintKind::DepthOne);
        let plan = [
            (ConstraintKind::Complete, [co + 1, co + 3, co + 5]),
            (ConstraintKind::DepthOne, [doou + 1, doou + 3, co + 1]),
        ];
        for (kind, budgets) in plan {
            let constraint = net.constraint(kind);
            for s in budgets {
                for objective in [ObjectiveKind::Mse, ObjectiveKind::Mi] {
                    runs += 1;
                    let tag = format!("{} {} {} S={s}", case.name(), kind.name(), objective.name());
                    let report = match penalized(&net, &PenalizedConfig::new(objective, kind, s)) {
                        Ok(r) => r,
                        Err(e) => {
                            failures.push(format!("{tag}: {e}"));
                            continue;
                        }
                    };
                    let bad = common::descent_violations(&report);
                    let gt = report.iterations.last().and_then(|it| it.g_tilde).unwrap_or(f64::NAN);
                    let x = report.final_placement.x_f64();
                    let binary = report.final_placement.x.iter().map(|&v| v as usize).sum::<usize>() == s;
                    if !bad.is_empty() || gt.is_nan() || gt > 1e-6 || !binary || !constraint.is_satisfied(&x).unwrap() {
                        failures.push(format!("{tag}: {} ascents, final g̃ {gt:.1e}", bad.len()));
                    }
                }
            }
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{runs} runs, strict descent, g̃ ≤ 1e-6, binary and feasible")
        } else {
            failures.join("; ")
        },
    )
}

fn small_instance_oracles() -> Verdict {
    let start = Instant::now();
    let mut neighbor_ok = 0;
    let mut exact = 0;
    let mut gaps = Vec::new();
    let mut min_pmu_ok = true;
    for seed in 0..10u64 {
        let (g, net) = common::toy_network(10, 4, 1000 + seed);
        let f = |sub: &[usize]| common::mse_from_scratch(&g, &net.problem, sub);
        let report = local_search(&net, &LocalSearchConfig::new(ObjectiveKind::Mse, 3)).unwrap();
        let support = report.final_placement.support();
        let here = f(&support);
        let optimal_nbhd = support.iter().all(|&out| {
            (0..10).filter(|k| !support.contains(k)).all(|inn| {
                let sub: Vec<usize> = support.iter().map(|&k| if k == out { inn } else { k }).collect();
                f(&sub) >= here * (1.0 - 1e-12)
            })
        });
        neighbor_ok += usize::from(optimal_nbhd);
        let (best, _) = common::exhaustive_min(10, 3, f);
        let gap = (here - best) / best;
        if gap <= 1e-9 {
            exact += 1;
        } else {
            gaps.push(format!("seed {seed}: {gap:.2e}"));
        }

        let optima: Vec<f64> = (1..=10).map(|s| common::exhaustive_min(10, s, f).0).collect();
        for frac in [0.1, 0.4, 0.7] {
            let tol = optima[9] + frac * (optima[0] - optima[9]);
            let want = optima.iter().position(|&v| v <= tol).unwrap() + 1;
            let got = min_pmu_iterative(&net, &MinPmuConfig::new(tol)).map(|r| r.budget);
            min_pmu_ok &= got.as_ref().ok() == Some(&want);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = neighbor_ok == 10 && exact >= 8 && min_pmu_ok && secs <= 120.0;
    let mut detail = format!(
        "neighbor-optimal {neighbor_ok}/10, exhaustive optimum {exact}/10, iterative S matches enumeration: {min_pmu_ok}, {secs:.2} s"
    );
    if !gaps.is_empty() {
        detail += &format!(" (relative gaps: {})", gaps.join(", "));
    }
    verdict(pass, detail)
}

fn cross_method_ordering() -> Verdict {
    let mut ordered = true;
    let mut box_wins = 0;
    let mut points = 0;
    let mut notes = Vec::new();
    for (case, budgets) in [(IeeeCase::Ieee30, 11..=15), (IeeeCase::Ieee39, 14..=18)] {
        let net = ieee(case);
        for s in budgets {
            points += 1;
            let fe = |r: pmu_core::Result<pmu_core::RunReport>| r.unwrap().final_metrics.f_e;
            let ls = fe(local_search(&net, &LocalSearchConfig::new(ObjectiveKind::Mse, s)));
            let d1 = fe(penalized(&net, &PenalizedConfig::new(ObjectiveKind::Mse, ConstraintKind::DepthOne, s)));
            let co = fe(penalized(&net, &PenalizedConfig::new(ObjectiveKind::Mse, ConstraintKind::Complete, s)));
            let bx = fe(box_relax_round(&net, &BoxRelaxConfig::new(ObjectiveKind::Mse, s)));
            let tol = 1e-9 * co;
            if !(ls <= d1 + tol && d1 <= co + tol) {
                ordered = false;
                notes.push(format!("{} S={s}: {ls:.6e} {d1:.6e} {co:.6e}", case.name()));
            }
            if ls <= bx + tol {
                box_wins += 1;
            }
        }
    }
    let mut detail = format!("local ≤ depth-one ≤ complete at all points: {ordered}, local ≤ box {box_wins}/{points}");
    if !notes.is_empty() {
        detail += &format!(" ({})", notes.join("; "));
    }
    verdict(ordered && box_wins >= 9, detail)
}

fn monte_carlo() -> Verdict {
    let start = Instant::now();
    let net = ieee(IeeeCase::Ieee30);
    let report =
        penalized(&net, &PenalizedConfig::new(ObjectiveKind::Mse, ConstraintKind::Complete, 10)).unwrap();
    let placement = Placement::from_support(30, &report.final_placement.support()).unwrap();
    let mc = monte_carlo_mse(&net.problem, &placement, 10_000, 7).unwrap();
    let fe = report.final_metrics.f_e;
    let diff = (mc.empirical_mse - fe).abs();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        diff <= 3.0 * mc.std_error && secs <= 30.0,
        format!(
            "f_e {fe:.6e}, empirical {:.6e}, |diff| {diff:.2e} vs 3σ {:.2e}, {secs:.2} s",
            mc.empirical_mse,
            3.0 * mc.std_error
        ),
    )
}

fn linear_algebra_checks() -> Verdict {
    let g = IeeeCase::Ieee30.load().unwrap();
    let net = Network::from_grid(&g, &EstimationSettings::default()).unwrap();
    let problem = &net.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    let mut grad_err = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(0.05..0.95)).collect();
        let grad = problem.grad_f_e(&x).unwrap();
        for k in 0..30 {
            // Fourth-order central stencil.
            let h = 1e-3;
            let at = |d: f64| {
                let mut y = x.clone();
                y[k] += d;
                problem.f_e(&y).unwrap()
            };
            let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            grad_err = grad_err.max((grad[k] - fd).abs() / fd.abs());
        }
    }

    let r_theta = common::prior_covariance(problem, g.susceptance());
    let mut wood_err = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        let oracle = common::woodbury_covariance(&g, &r_theta, &x);
        let re = problem.error_covariance(&x).unwrap();
        wood_err = wood_err.max((re - oracle).norm() / r_theta.norm());
    }

    let mut swap = TraceSwap::new(problem).unwrap();
    let mut support = rand::seq::index::sample(&mut rng, 30, 10).into_vec();
    swap.reset(&support).unwrap();
    let mut swap_err = 0.0f64;
    for i in 0..100 {
        let out = support[rng.random_range(0..10)];
        let inn = loop {
            let k = rng.random_range(0..30);
            if !support.contains(&k) {
                break k;
            }
        };
        let sub: Vec<usize> = support.iter().map(|&k| if k == out { inn } else { k }).collect();
        let truth = common::mse_from_scratch(&g, problem, &sub);
        swap_err = swap_err.max((swap.eval_swap(out, inn).unwrap() - truth).abs() / truth);
        if i % 3 == 0 {
            swap.apply_swap(out, inn).unwrap();
            support = sub;
        }
    }
    verdict(
        grad_err <= 1e-5 && wood_err <= 1e-9 && swap_err <= 1e-8,
        format!(
            "gradient rel. error {grad_err:.1e}, Woodbury {wood_err:.1e} (relative to ‖ℛ_θ‖), swap {swap_err:.1e}"
        ),
    )
}

fn scalability() -> Verdict {
    let start = Instant::now();
    let net = ieee(IeeeCase::Ieee118);
    let result = penalized(&net, &PenalizedConfig::new(ObjectiveKind::Mse, ConstraintKind::Complete, 40));
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(r) => {
            let feasible = net.constraint(ConstraintKind::Complete).is_satisfied(&r.final_placement.x_f64()).unwrap();
            verdict(
                feasible && secs <= 240.0,
                format!("f_e {:.6e}, {} records, {secs:.2} s", r.final_metrics.f_e, r.iterations.len()),
            )
        }
        Err(e) => verdict(false, format!("{e} after {secs:.2} s")),
    }
}

fn main() {
    let checks: [Check; 8] = [
        ("minimum PMU counts", table_minimums),
        ("surrogate soundness", surrogate_soundness),
        ("majorization descent", majorization_descent),
        ("small-instance oracles", small_instance_oracles),
        ("cross-method ordering", cross_method_ordering),
        ("Monte Carlo consistency", monte_carlo),
        ("gradient and linear algebra", linear_algebra_checks),
        ("118-bus scalability", scalability),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("acceptance {}: {tag} {name}: {}", i + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
