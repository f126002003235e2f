//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use badr::baselines::{self, MinimaxOptions, PathOptions};
use badr::bilevel::{self, badr_gd_step, badr_sgd_step, BadrConfig, BadrState, Variant};
use badr::data::{standardize, synth_biased, train_test_split, Task};
use badr::eval::{self, accuracy, dominates, pareto_scan, ScanOptions};
use badr::metrics::{FairnessMetric, MetricKind};
use badr::models::{LossKind, LossModel};
use badr::simplex::{project_simplex, GroupWeights};
use badr::twoloop::{self, implicit_gradient, implicit_gradient_from, solve_lower, LowerOptions, OuterOptions};
use badr::Problem;
use common::*;
use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn lower() -> LowerOptions {
    LowerOptions::with_tol(1e-10)
}

fn gd_config(problem: &Problem, iters: usize) -> BadrConfig {
    let steps = bilevel::default_stepsizes(problem).unwrap();
    BadrConfig { record_every: iters, ..BadrConfig::deterministic(steps, iters) }
}

/// 1. Analytic derivatives against central differences.
fn gradient_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(101);
    let mut worst: Vec<(String, f64)> = Vec::new();
    for kind in [LossKind::Ridge, LossKind::Logistic, LossKind::Svm2] {
        let task = if kind == LossKind::Ridge { Task::Regression } else { Task::Classification };
        let (mut eg, mut eh) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let ds = random_dataset(&mut rng, task, 20, 200);
            let model = LossModel::new(kind, rng.random_range(0.01..1.0)).unwrap();
            let w = random_vec(&mut rng, ds.n_features(), 0.5);
            let raw: Vec<f64> = (0..ds.n_groups()).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            let lambda = GroupWeights::normalized(&raw.iter().map(|r| r / total).collect::<Vec<_>>()).unwrap();
            for a in 0..ds.n_groups() {
                let fd = fd_grad(|v| model.group_loss(v.view(), &ds, a).unwrap(), &w, H);
                eg = eg.max(rel_err(&model.group_grad(w.view(), &ds, a).unwrap(), &fd));
            }
            let fd = fd_grad(|v| model.scalarized_loss(v.view(), &ds, &lambda).unwrap(), &w, H);
            eg = eg.max(rel_err(&model.scalarized_grad(w.view(), &ds, &lambda).unwrap(), &fd));
            let v = random_vec(&mut rng, ds.n_features(), 1.0);
            let hv = model.scalarized_hvp(w.view(), &ds, &lambda, v.view()).unwrap();
            let gp = model.scalarized_grad((&w + &(&v * H)).view(), &ds, &lambda).unwrap();
            let gm = model.scalarized_grad((&w - &(&v * H)).view(), &ds, &lambda).unwrap();
            eh = eh.max(rel_err(&hv, &((gp - gm) / (2.0 * H))));
        }
        worst.push((format!("grad/{kind:?}"), eg));
        worst.push((format!("hvp/{kind:?}"), eh));
    }
    for kind in MetricKind::ALL {
        let task = if kind.supports(Task::Classification) { Task::Classification } else { Task::Regression };
        let model = if task == Task::Classification { LossModel::logistic(0.1) } else { LossModel::ridge(0.1) };
        let metric = FairnessMetric::of(kind);
        let mut e = 0.0f64;
        for _ in 0..20 {
            let ds = random_dataset(&mut rng, task, 20, 200);
            let w = random_vec(&mut rng, ds.n_features(), 0.5);
            let fd = fd_grad(|v| metric.value(&model, v.view(), &ds).unwrap(), &w, H);
            e = e.max(rel_err(&metric.grad(&model, w.view(), &ds).unwrap(), &fd));
        }
        worst.push((format!("metric/{}", kind.name()), e));
    }
    let elapsed = start.elapsed();
    let (name, max) = worst.iter().cloned().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    outcome(
        max <= 1e-5 && elapsed < Duration::from_secs(60),
        format!("worst rel. err {max:.2e} ({name}) <= 1e-5 over {} oracles; {:.1}s < 60s", worst.len(), elapsed.as_secs_f64()),
    )
}

/// 2. Projection against enumeration of active sets; non-expansiveness.
fn projection() -> Outcome {
    let mut rng = rng(202);
    let mut worst = 0.0f64;
    for s in 1..=4 {
        for _ in 0..1000 {
            let x: Vec<f64> = (0..s).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = project_simplex(&x);
            let q = project_by_enumeration(&x);
            let d: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(d);
        }
    }
    let mut expansive = 0;
    for _ in 0..1000 {
        let s = rng.random_range(1..=6);
        let x: Vec<f64> = (0..s).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..s).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (px, py) = (project_simplex(&x), project_simplex(&y));
        let dp: f64 = px.iter().zip(py.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dx: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dp > dx {
            expansive += 1;
        }
    }
    outcome(
        worst <= 1e-9 && expansive == 0,
        format!("max ||proj - oracle|| = {worst:.2e} <= 1e-9 on 4000 points; {expansive} expansive pairs of 1000"),
    )
}

/// 3. Implicit gradient against differences of the implicit function, and the
/// BADR lambda direction at a converged frozen-lambda run.
fn implicit() -> Outcome {
    let problem = toy(MetricKind::IndividualFairness);
    let tight = LowerOptions::with_tol(1e-12);
    let phi = |a: f64| {
        let l = GroupWeights::new(vec![a, 1.0 - a]).unwrap();
        let w = solve_lower(&problem, &l, tight, None).unwrap().w;
        problem.fairness(w.view()).unwrap()
    };
    let h = 1e-5;
    let mut worst_fd = 0.0f64;
    for a in [0.1, 0.3, 0.5, 0.8] {
        let g = implicit_gradient(&problem, &GroupWeights::new(vec![a, 1.0 - a]).unwrap(), 1e-12).unwrap().grad;
        // tangent direction (1, -1)
        let analytic = g[0] - g[1];
        let fd = (phi(a + h) - phi(a - h)) / (2.0 * h);
        worst_fd = worst_fd.max((analytic - fd).abs() / analytic.abs().max(fd.abs()));
    }

    let lambda = GroupWeights::new(vec![0.35, 0.65]).unwrap();
    let lip = problem.lipschitz_estimate().unwrap();
    let cfg = BadrConfig {
        tau: 1.0 / lip,
        rho_dual: 1.0 / lip,
        gamma: 0.0,
        clip_threshold: 1.0,
        iters: 1,
        batch: 1,
        seed: 0,
        record_every: 1,
        variant: Variant::Deterministic,
    };
    let mut s = BadrState { lambda: lambda.clone(), ..BadrState::initial(&problem) };
    let mut steps = 0;
    loop {
        let gw = problem.model.scalarized_grad(s.w.view(), &problem.data, &lambda).unwrap();
        let res = problem.fairness_grad(s.w.view()).unwrap()
            + problem.model.scalarized_hvp(s.w.view(), &problem.data, &lambda, s.v.view()).unwrap();
        if (l2(&gw) <= 1e-8 && l2(&res) <= 1e-8) || steps == 500_000 {
            break;
        }
        s = badr_gd_step(&s, &problem, &cfg).unwrap();
        steps += 1;
    }
    let cross = problem.model.cross_derivative(s.w.view(), &problem.data).unwrap();
    let direction = cross.dot(&s.v);
    let ig = implicit_gradient(&problem, &lambda, 1e-12).unwrap().grad;
    let sign_err = (&direction - &ig).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        worst_fd <= 1e-3 && sign_err <= 1e-6 && steps < 500_000,
        format!("FD rel. err {worst_fd:.2e} <= 1e-3; |gradF v - implicit grad| = {sign_err:.2e} <= 1e-6 after {steps} frozen steps"),
    )
}

/// 4. Running mean of the stationarity measure decreases as T doubles.
fn rate() -> Outcome {
    let start = Instant::now();
    let problem = toy(MetricKind::IndividualFairness);
    let total = 1600;
    let cfg = gd_config(&problem, total);
    let mut s = BadrState::initial(&problem);
    let mut errs = Vec::with_capacity(total);
    let mut warm: Option<Array1<f64>> = None;
    for _ in 0..total {
        let ig = implicit_gradient_from(&problem, &s.lambda, lower(), warm.as_ref().map(|w| w.view())).unwrap();
        let dbar = bilevel::generalized_gradient_norm(&s.lambda, ig.grad.as_slice().unwrap(), cfg.gamma);
        let dw = l2(&(&s.w - &ig.w));
        errs.push(dbar * dbar + dw * dw);
        warm = Some(ig.w);
        s = badr_gd_step(&s, &problem, &cfg).unwrap();
    }
    let mean = |t: usize| errs[..t].iter().sum::<f64>() / t as f64;
    let ratios: Vec<f64> = [200, 400, 800].iter().map(|&t| mean(2 * t) / mean(t)).collect();
    let elapsed = start.elapsed();
    outcome(
        ratios.iter().all(|r| *r <= 0.75) && elapsed < Duration::from_secs(120),
        format!(
            "mean(2T)/mean(T) = {:.3}, {:.3}, {:.3} for T = 200, 400, 800 (<= 0.75); gamma = {:.1e}; {:.1}s",
            ratios[0],
            ratios[1],
            ratios[2],
            cfg.gamma,
            elapsed.as_secs_f64()
        ),
    )
}

/// 5. Full-batch SGD equals GD; minibatch SGD lands near GD; clipped steps.
fn sgd() -> Outcome {
    let problem = toy(MetricKind::IndividualFairness);
    let base = gd_config(&problem, 500);
    let full = BadrConfig { variant: Variant::Stochastic, batch: problem.data.n_samples(), clip_threshold: 1e300, ..base.clone() };
    let mut g = BadrState::initial(&problem);
    let mut st = g.clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut identical = true;
    for _ in 0..500 {
        g = badr_gd_step(&g, &problem, &base).unwrap();
        st = badr_sgd_step(&st, &problem, &full, &mut rng).unwrap();
        identical &= g == st;
    }

    let iters = 2000;
    let gd_fit = bilevel::fit(&problem, &BadrConfig { iters, ..base.clone() }, lower()).unwrap();
    let mut worst_rel = 0.0f64;
    let mut worst_disp = 0.0f64;
    for seed in 0..5 {
        let cfg = BadrConfig {
            variant: Variant::Stochastic,
            batch: 32,
            clip_threshold: 1.0,
            seed,
            iters,
            ..base.clone()
        };
        let sgd_fit = bilevel::fit(&problem, &cfg, lower()).unwrap();
        worst_rel = worst_rel.max((sgd_fit.fairness - gd_fit.fairness).abs() / gd_fit.fairness);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = BadrState::initial(&problem);
        for _ in 0..iters {
            let next = badr_sgd_step(&s, &problem, &cfg, &mut rng).unwrap();
            let disp: f64 = next.lambda.iter().zip(s.lambda.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            worst_disp = worst_disp.max(disp / (cfg.gamma * cfg.clip_threshold));
            s = next;
        }
    }
    outcome(
        identical && worst_rel <= 0.2 && worst_disp <= 1.0,
        format!(
            "batch=n bit-identical over 500 steps: {identical}; batch=32 worst rel. fairness gap {worst_rel:.3} <= 0.2 over 5 seeds; max ||dlambda||/(gamma C) = {worst_disp:.6}"
        ),
    )
}

/// 6. Scan rows are mutually non-dominated and no strategy is dominated by
/// the scan.
fn pareto() -> Outcome {
    let mut details = Vec::new();
    let mut passed = true;
    for (label, problem) in [("ridge", ridge_toy(MetricKind::IndividualFairness)), ("logistic", toy(MetricKind::IndividualFairness))] {
        let scan = pareto_scan(&problem, ScanOptions { resolution: 201, ..ScanOptions::default() }).unwrap();
        let pts: Vec<Vec<f64>> = scan.solved().map(|(_, g, _)| g.to_vec()).collect();
        let dominated_rows = eval::dominance_flags(&pts, 1e-6).iter().filter(|f| **f).count();
        let badr_fit = bilevel::fit(&problem, &gd_config(&problem, 2000), lower()).unwrap();
        let strategies = [
            ("badr", badr_fit.w),
            ("uniform", baselines::uniform_fit(&problem, lower()).unwrap().w),
            ("balanced", baselines::balanced_fit(&problem, lower()).unwrap().w),
            ("one-group", baselines::one_group_fit(&problem, lower()).unwrap().w),
            ("minimax", baselines::minimax_fit(&problem, MinimaxOptions::default(), lower()).unwrap().w),
        ];
        let mut dominated_strategies = Vec::new();
        for (name, w) in &strategies {
            let f = problem.group_losses(w.view()).unwrap();
            if pts.iter().any(|p| dominates(p, &f, 1e-6)) {
                dominated_strategies.push(*name);
            }
        }
        passed &= pts.len() == 201 && dominated_rows == 0 && dominated_strategies.is_empty();
        details.push(format!(
            "{label}: {} rows, {dominated_rows} dominated, dominated strategies {:?}",
            pts.len(),
            dominated_strategies
        ));
    }
    outcome(passed, details.join("; "))
}

/// 7. BADR beats every baseline and is near the scan minimum on the bundled toy.
fn bundled_trend() -> Outcome {
    let mut details = Vec::new();
    let mut passed = true;
    for metric in ["if", "dm", "gv"] {
        let start = Instant::now();
        let (problem, _) = bundled_toy(metric);
        let badr = bilevel::fit(&problem, &gd_config(&problem, 2000), lower()).unwrap().fairness;
        let base = [
            baselines::uniform_fit(&problem, lower()).unwrap(),
            baselines::balanced_fit(&problem, lower()).unwrap(),
            baselines::one_group_fit(&problem, lower()).unwrap(),
            baselines::minimax_fit(&problem, MinimaxOptions::default(), lower()).unwrap(),
        ];
        let best_base = base.iter().map(|f| problem.fairness(f.w.view()).unwrap()).fold(f64::INFINITY, f64::min);
        let scan_min = pareto_scan(&problem, ScanOptions::default()).unwrap().min_fairness().unwrap();
        let elapsed = start.elapsed();
        let ok = badr <= best_base && badr <= scan_min * 1.1 && elapsed < Duration::from_secs(120);
        passed &= ok;
        details.push(format!("{metric}: badr {badr:.4e} vs best baseline {best_base:.4e}, scan min {scan_min:.4e}"));
    }
    outcome(passed, details.join("; "))
}

/// 8. Lower test unfairness than uniform weighting at similar accuracy.
fn table_trend() -> Outcome {
    let (mut fb, mut fu, mut ab, mut au) = (0.0, 0.0, 0.0, 0.0);
    let runs = 10;
    for seed in 0..runs {
        let ds = standardize(&synth_biased(&[120, 80], 4, 0.8, 100 + seed).unwrap());
        let (train, test) = train_test_split(&ds, 0.7, seed).unwrap();
        let problem =
            Problem::new(train, LossModel::logistic(1e-2), FairnessMetric::of(MetricKind::IndividualFairness)).unwrap();
        let test_problem = problem.with_data(test.clone()).unwrap();
        let badr = bilevel::fit(&problem, &gd_config(&problem, 2000), lower()).unwrap().w;
        let uni = baselines::uniform_fit(&problem, lower()).unwrap().w;
        fb += test_problem.fairness(badr.view()).unwrap() / runs as f64;
        fu += test_problem.fairness(uni.view()).unwrap() / runs as f64;
        ab += accuracy(badr.view(), &test).unwrap() / runs as f64;
        au += accuracy(uni.view(), &test).unwrap() / runs as f64;
    }
    outcome(
        fb < fu && (ab - au).abs() <= 0.02,
        format!("mean test IF badr {fb:.4} < uniform {fu:.4}; mean test accuracy {ab:.4} vs {au:.4} (|diff| <= 0.02)"),
    )
}

/// 9. Penalization yields dominated models; the scan does not.
fn penalization() -> Outcome {
    let (problem, _) = bundled_toy("if");
    let scan = pareto_scan(&problem, ScanOptions::default()).unwrap();
    let pts: Vec<Vec<f64>> = scan.solved().map(|(_, g, _)| g.to_vec()).collect();
    let scan_dominated = eval::dominance_flags(&pts, 1e-6).iter().filter(|f| **f).count();
    let path = baselines::penalized_path(&problem, &baselines::default_nu_grid(), PathOptions::default()).unwrap();
    let dominated_path = path
        .iter()
        .filter(|p| {
            let f = problem.group_losses(Array1::from(p.w.clone()).view()).unwrap();
            pts.iter().any(|q| dominates(q, &f, 1e-6))
        })
        .count();
    outcome(
        dominated_path >= 1 && scan_dominated == 0,
        format!("{dominated_path} of {} path points dominated by the scan; {scan_dominated} scan rows dominated", path.len()),
    )
}

/// 10. Frank-Wolfe, projected gradient and BADR-GD agree.
fn two_loop() -> Outcome {
    let problem = toy(MetricKind::IndividualFairness);
    let opts = OuterOptions::default();
    let fw = twoloop::frank_wolfe(&problem, opts).unwrap();
    let pg = twoloop::projected_gradient(&problem, opts).unwrap();
    let badr = bilevel::fit(&problem, &gd_config(&problem, 2000), lower()).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    let fw_pg = rel(fw.fairness, pg.fairness);
    let fw_b = rel(fw.fairness, badr.fairness);
    let pg_b = rel(pg.fairness, badr.fairness);
    outcome(
        fw_pg <= 0.05 && fw_b <= 0.1 && pg_b <= 0.1,
        format!(
            "FW {:.6e} ({} iters), PG {:.6e}, BADR {:.6e}: FW/PG gap {fw_pg:.2e} <= 0.05, vs BADR {:.2e}, {:.2e} <= 0.1",
            fw.fairness, fw.iterations, pg.fairness, badr.fairness, fw_b, pg_b
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient oracle suite", gradient_oracles),
        ("simplex projection", projection),
        ("implicit gradient", implicit),
        ("stationarity rate", rate),
        ("SGD consistency", sgd),
        ("Pareto efficiency", pareto),
        ("biased-toy trend", bundled_trend),
        ("split trend", table_trend),
        ("penalization dominated", penalization),
        ("two-loop agreement", two_loop),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {} ({:.1}s)",
            k + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
