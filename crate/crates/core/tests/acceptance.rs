//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (written past the test harness's output capture).

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use klgp::bounds::{
    bnd_a, bnd_b, bound_curve, curve_argmin, epsilon_feasible, BoundQuery, EpsilonGrid, Estimator,
};
use klgp::consensus::{
    distributed_fit_a, distributed_fit_b, network_average, run_average_consensus, ConsensusConfig,
    NetworkTopology,
};
use klgp::harness::{
    bounds_experiment, consistency_trend_experiment, sample_truth, sure_vs_oracle_experiment,
    BoundsConfig, SureStudyConfig, TrendConfig,
};
use klgp::kernel_expansion::eigen::spline_lambda;
use klgp::kernel_expansion::{Basis, EigenSystem, InputMeasure, KernelSpec, Sampling};
use klgp::linalg::logspace;
use klgp::regression::{estimate_a, estimate_b, estimate_map, Dataset, SufficientStatistics};
use klgp::seeding::rng;
use klgp::tuning::{sure_risk_a, tune_a, TuningGrid};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "\n{} criterion {n} [{name}]: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{}", line.trim_end());
}

fn spline(e: usize) -> Arc<EigenSystem> {
    Arc::new(EigenSystem::spline(e).unwrap())
}

#[test]
fn criterion_01_bnd_b_minimizer() {
    let start = Instant::now();
    let eigen = spline(100);
    let grid: Vec<usize> = (1..=100).collect();
    let rows = bound_curve(
        &eigen,
        &grid,
        10_000,
        0.05,
        0.01,
        Estimator::B,
        &EpsilonGrid::default(),
    )
    .unwrap();
    let argmin = curve_argmin(&rows);
    let elapsed = start.elapsed();
    let values: Vec<String> = rows[4..9]
        .iter()
        .map(|r| format!("E={}:{:.6}", r.e, r.bnd_normalized))
        .collect();
    report(
        1,
        "Bnd_B minimizer",
        argmin == Some(7) && elapsed < Duration::from_secs(10),
        &format!(
            "argmin_E Bnd_B = {argmin:?} (expected 7) in {:.2}s; normalized Bnd_B {}",
            elapsed.as_secs_f64(),
            values.join(" ")
        ),
    );
}

#[test]
fn criterion_02_bound_ordering() {
    let start = Instant::now();
    let cfg = BoundsConfig {
        m: 2000,
        mc_runs: 50,
        seed: 2,
        ..Default::default()
    };
    let table = bounds_experiment(&cfg).unwrap();
    let mut violations = Vec::new();
    for r in &table.rows {
        let slack = 2.0 * r.mc_se_a;
        if !(r.feasible_a && r.bnd_a + slack >= r.mc_err_a && r.mc_err_a + slack >= r.lower_bound) {
            violations.push(format!(
                "E={} bnd={:.5} mc={:.5}+-{:.5} lb={:.5}",
                r.e, r.bnd_a, r.mc_err_a, r.mc_se_a, r.lower_bound
            ));
        }
    }
    let elapsed = start.elapsed();
    let r7 = &table.rows[6];
    report(
        2,
        "bound ordering",
        violations.is_empty() && elapsed < Duration::from_secs(600),
        &format!(
            "{} of {} grid points violate Bnd_A >= MC >= lower bound (2 SE slack, 50 runs, M=2000) in {:.1}s; E=7: {:.5} >= {:.5} >= {:.5}{}",
            violations.len(),
            table.rows.len(),
            elapsed.as_secs_f64(),
            r7.bnd_a,
            r7.mc_err_a,
            r7.lower_bound,
            violations.first().map(|v| format!("; first violation {v}")).unwrap_or_default()
        ),
    );
}

#[test]
fn criterion_03_monotonicity() {
    let eigen = spline(100);
    let grid: Vec<usize> = (1..=100).collect();
    let curve = bound_curve(
        &eigen,
        &grid,
        10_000,
        0.05,
        0.01,
        Estimator::A,
        &EpsilonGrid::default(),
    )
    .unwrap();
    let e_violations = curve
        .windows(2)
        .filter(|w| !(w[1].feasible && w[0].feasible && w[1].bnd_raw <= w[0].bnd_raw))
        .count();

    let ms = [1_000, 10_000, 100_000];
    let candidates = EpsilonGrid::default().candidates();
    let (mut checked, mut bad_a, mut bad_b) = (0usize, 0usize, 0usize);
    let mut first_b = None;
    for e in 1..=100 {
        for &eps in &candidates {
            for which in [Estimator::A, Estimator::B] {
                let q0 = BoundQuery {
                    eigen: &eigen,
                    e,
                    m: ms[0],
                    alpha: 0.05,
                    sigma2: 0.01,
                };
                if !epsilon_feasible(&q0, eps, which) {
                    continue;
                }
                checked += 1;
                let values: Vec<f64> = ms
                    .iter()
                    .map(|&m| {
                        let q = BoundQuery { m, ..q0 };
                        match which {
                            Estimator::A => bnd_a(&q, eps).unwrap().value,
                            Estimator::B => bnd_b(&q, eps).unwrap().value,
                        }
                    })
                    .collect();
                if !(values[1] <= values[0] && values[2] <= values[1]) {
                    match which {
                        Estimator::A => bad_a += 1,
                        Estimator::B => {
                            bad_b += 1;
                            first_b.get_or_insert((e, eps, values));
                        }
                    }
                }
            }
        }
    }
    let example = first_b
        .map(|(e, eps, v)| {
            format!(
                "; e.g. Bnd_B at E={e}, eps={eps:.4}: {:.4e}, {:.4e}, {:.4e} for M=1e3,1e4,1e5",
                v[0], v[1], v[2]
            )
        })
        .unwrap_or_default();
    report(
        3,
        "monotonicity",
        e_violations == 0 && bad_a == 0 && bad_b == 0,
        &format!(
            "Bnd_A increases in E at {e_violations} of 99 steps; over {checked} feasible (E, eps, estimator) cases \
             Bnd_A increases in M in {bad_a}, Bnd_B in {bad_b}{example}"
        ),
    );
}

#[test]
fn criterion_04_analytic_anchors() {
    let n = 1_000_000;
    let mut sum = 0.0;
    let mut comp = 0.0;
    // ascending order of magnitude keeps the summation error negligible
    for e in (0..n).rev() {
        let y = spline_lambda(e) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let closed = spline(10).tail_sum(0);
    let spline_err = (sum - 0.5).abs();
    let mut exp_err: f64 = 0.0;
    for rate in [0.1, 0.5, 1.0, 2.0] {
        let sys = EigenSystem::exponential(20, rate).unwrap();
        for e in [0usize, 1, 5, 20] {
            let brute: f64 = (e + 1..20_000)
                .rev()
                .map(|k| (-rate * k as f64).exp())
                .sum();
            exp_err = exp_err.max((sys.tail_sum(e) - brute).abs());
        }
    }
    report(
        4,
        "analytic anchors",
        spline_err <= 1e-6 && (closed - 0.5).abs() <= 1e-12 && exp_err <= 1e-10,
        &format!(
            "spline 1e6-term sum = {sum:.9} (|diff from 0.5| = {spline_err:.2e}), tail_sum(0) = {closed}; \
             exponential closed form vs brute sum max diff {exp_err:.2e}"
        ),
    );
}

#[test]
fn criterion_05_sure_vs_oracle() {
    let start = Instant::now();
    let cfg = SureStudyConfig {
        seed: 5,
        ..Default::default()
    };
    let s = sure_vs_oracle_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    report(
        5,
        "SURE vs oracle",
        s.runs >= 100 && s.s_p >= 0.9 && s.oracle_dominates && elapsed < Duration::from_secs(900),
        &format!(
            "S_p = {:.4} (A {:.4}, B {:.4}) over {} runs at M={}, oracle <= SURE in every run: {}, {:.1}s",
            s.s_p,
            s.s_p_a,
            s.s_p_b,
            s.runs,
            cfg.m,
            s.oracle_dominates,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_06_sure_unbiasedness() {
    let e = 3;
    let m = 20;
    let sigma2: f64 = 0.1;
    let gamma = 1.0;
    let basis = Arc::new(Basis::kl_eigen(spline(e), e).unwrap());
    let mut r = rng(6);
    let xs: Vec<Vec<f64>> = (0..m).map(|_| vec![r.random::<f64>()]).collect();
    let g = basis.design(&xs);
    let a = DVector::from_vec(vec![0.8, -0.4, 0.2]);
    let mean_y = &g * &a;
    let v = g.transpose() * &g / m as f64;
    let precision = basis.precision().clone();
    let sd = sigma2.sqrt();
    let draw_z = |r: &mut klgp::seeding::Rng| -> DVector<f64> {
        let y = DVector::from_fn(m, |i, _| {
            mean_y[i] + sd * Distribution::<f64>::sample(&StandardNormal, r)
        });
        g.transpose() * y / m as f64
    };
    let system = &v + &precision * (gamma * sigma2 / m as f64);
    let chol = system.cholesky().unwrap();
    let n = 100_000;
    let mut diffs = Vec::with_capacity(n);
    let mut js = 0.0;
    for _ in 0..n {
        let z = draw_z(&mut r);
        let z_future = draw_z(&mut r);
        let stats = SufficientStatistics {
            v: v.clone(),
            z: z.clone(),
            m,
        };
        let j = sure_risk_a(&stats, &precision, sigma2, gamma).unwrap().j;
        let zhat = &v * chol.solve(&z);
        let risk = (&z_future - zhat).norm_squared();
        js += j;
        diffs.push(j - risk);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    report(
        6,
        "SURE unbiasedness",
        mean.abs() <= 3.0 * se,
        &format!(
            "mean J = {:.6e}, mean(J - |z* - z_hat|^2) = {mean:.3e} with SE {se:.3e} over {n} paired redraws",
            js / n as f64
        ),
    );
}

#[test]
fn criterion_07_estimator_equivalences() {
    // A equals B when V = I
    let basis = Arc::new(Basis::kl_eigen(spline(6), 6).unwrap());
    let mut r = rng(7);
    let mut ab_gap: f64 = 0.0;
    for _ in 0..50 {
        let stats = SufficientStatistics {
            v: DMatrix::identity(6, 6),
            z: DVector::from_fn(6, |_, _| r.random::<f64>() * 2.0 - 1.0),
            m: 100,
        };
        let gamma = r.random::<f64>() * 10.0;
        let a = estimate_a(&stats, &basis, 0.01, gamma).unwrap();
        let b = estimate_b(&stats, &basis, 0.01, gamma, 6).unwrap();
        ab_gap = ab_gap.max((&a.a_hat - &b.a_hat).amax());
    }

    // noiseless recovery at gamma = 0
    let basis5 = Arc::new(Basis::kl_eigen(spline(5), 5).unwrap());
    let truth = [0.9, -0.5, 0.3, 0.1, -0.05];
    let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![r.random::<f64>()]).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| basis5.eval(x).iter().zip(&truth).map(|(p, a)| p * a).sum())
        .collect();
    let data = Dataset::new(xs, ys, 0.0).unwrap();
    let fit = estimate_a(
        &SufficientStatistics::from_data(&data, &basis5),
        &basis5,
        0.0,
        0.0,
    )
    .unwrap();
    let recovery = fit
        .a_hat
        .iter()
        .zip(truth)
        .map(|(h, t)| (h - t).abs())
        .fold(0.0, f64::max);

    // sup distance to the MAP estimate shrinks as E grows
    let sys = spline(150);
    let t = sample_truth(&sys, 1500, 70).unwrap();
    let data =
        klgp::harness::generate_dataset(&t, &InputMeasure::unit_interval(), 200, 0.01, 71).unwrap();
    let map = estimate_map(&data, &KernelSpec::SplineFirstOrder, 1.0).unwrap();
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let map_vals: Vec<f64> = grid.iter().map(|x| map.predict(&[*x])).collect();
    let mut dists = Vec::new();
    for e in (5..=150).step_by(5) {
        let b = Arc::new(Basis::kl_eigen(sys.clone(), e).unwrap());
        let est = estimate_a(&SufficientStatistics::from_data(&data, &b), &b, 0.01, 1.0).unwrap();
        let d = grid
            .iter()
            .zip(&map_vals)
            .map(|(x, mv)| (est.predict(&[*x]) - mv).abs())
            .fold(0.0, f64::max);
        dists.push((e, d));
    }
    let increases: Vec<String> = dists
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 + 1e-9)
        .map(|w| format!("E={}->{}: {:.3e}->{:.3e}", w[0].0, w[1].0, w[0].1, w[1].1))
        .collect();
    report(
        7,
        "estimator equivalences",
        ab_gap <= 1e-12 && recovery <= 1e-10 && increases.is_empty(),
        &format!(
            "max |A - B| with V = I: {ab_gap:.1e}; noiseless recovery error {recovery:.1e}; \
             sup distance to MAP over E = 5,10,...,150 has {} increases{}; distances [{}]",
            increases.len(),
            increases
                .first()
                .map(|s| format!(" ({s})"))
                .unwrap_or_default(),
            dists
                .iter()
                .map(|(_, d)| format!("{d:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

#[test]
fn criterion_08_consensus() {
    // average preserved every round
    let n = 25;
    let topo = NetworkTopology::erdos_renyi(n, None, 8).unwrap();
    let mut r = rng(8);
    let init: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![r.random::<f64>() * 100.0, r.random::<f64>() - 0.5])
        .collect();
    let target = network_average(&init);
    let mut drift: f64 = 0.0;
    for rounds in 1..=40 {
        let cfg = ConsensusConfig {
            max_rounds: rounds,
            tolerance: 0.0,
            ..Default::default()
        };
        let run = run_average_consensus(&init, &topo, &cfg).unwrap();
        let avg = network_average(&run.states);
        drift = drift.max(
            avg.iter()
                .zip(&target)
                .map(|(a, t)| (a - t).abs())
                .fold(0.0, f64::max),
        );
    }

    // three-node path
    let path = NetworkTopology::path(3).unwrap();
    let run = run_average_consensus(
        &[vec![0.0], vec![3.0], vec![6.0]],
        &path,
        &ConsensusConfig::default(),
    )
    .unwrap();
    let path_err = run
        .states
        .iter()
        .map(|s| (s[0] - 3.0).abs())
        .fold(0.0, f64::max);

    // exact-averaging oracle against the centralized fit
    let sys = spline(10);
    let basis = Arc::new(Basis::kl_eigen(sys.clone(), 10).unwrap());
    let truth = sample_truth(&sys, 100, 80).unwrap();
    let data =
        klgp::harness::generate_dataset(&truth, &InputMeasure::unit_interval(), 30, 0.01, 81)
            .unwrap();
    let gammas = logspace(1e-3, 1e3, 20);
    let topo30 = NetworkTopology::erdos_renyi(30, None, 82).unwrap();
    let exact = distributed_fit_a(
        &data,
        &basis,
        0.01,
        &gammas,
        &topo30,
        &ConsensusConfig::exact(),
    )
    .unwrap();
    let stats = SufficientStatistics::from_data(&data, &basis);
    let best = tune_a(&stats, basis.precision(), 0.01, &gammas)
        .unwrap()
        .best;
    let central = estimate_a(&stats, &basis, 0.01, best.gamma).unwrap();
    let bitwise = exact.agents.iter().all(|a| {
        a.estimate.gamma == central.gamma && a.estimate.a_hat.as_slice() == central.a_hat.as_slice()
    });

    // payload accounting
    let iterative = ConsensusConfig {
        tolerance: 1e-10,
        ..Default::default()
    };
    let fit_a = distributed_fit_a(&data, &basis, 0.01, &gammas, &topo30, &iterative).unwrap();
    let grid = TuningGrid::new(vec![1e-3, 0.0, 1e3], vec![1, 3, 5, 10]).unwrap();
    let fit_b = distributed_fit_b(&data, &basis, 0.01, &grid, &topo30, &iterative).unwrap();
    let (sa, sb) = (&fit_a.summary, &fit_b.summary);
    let payload_ok = sa.payload_scalars_per_round == 10 * 10 + 10
        && sa.scalars_sent_per_agent == 110 * sa.rounds[0]
        && sb.payload_scalars_per_round == 10 + 3 * 4 * 10
        && sb.scalars_sent_per_agent == 10 * sb.rounds[0] + 120 * sb.rounds[1];

    report(
        8,
        "consensus",
        drift <= 1e-10 && path_err <= 1e-9 && bitwise && payload_ok,
        &format!(
            "max average drift over 40 rounds {drift:.1e}; path-3 error {path_err:.1e} after {} rounds; \
             exact-oracle fit bit-identical: {bitwise}; payload A {} (rounds {}), B {} (rounds {:?})",
            run.rounds, sa.payload_scalars_per_round, sa.rounds[0], sb.payload_scalars_per_round, sb.rounds
        ),
    );
}

#[test]
fn criterion_09_consistency_trends() {
    let start = Instant::now();
    let cfg = TrendConfig {
        seed: 9,
        ..Default::default()
    };
    let t = consistency_trend_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    let rows = &t.rows;
    let decreasing =
        |f: fn(&klgp::harness::TrendRow) -> f64| rows.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let last = rows.last().unwrap();
    let near_tail = |mean: f64, se: f64| (mean - last.tail_fixed).abs() <= 3.0 * se;
    let above_tail = |f: fn(&klgp::harness::TrendRow) -> (f64, f64)| {
        rows.iter().all(|r| {
            let (m, se) = f(r);
            m >= r.tail_fixed - 2.0 * se
        })
    };
    let a_ok = decreasing(|r| r.excess_a_mean)
        && above_tail(|r| (r.err_a_mean, r.err_a_se))
        && near_tail(last.err_a_mean, last.err_a_se);
    let b_ok = decreasing(|r| r.excess_b_mean)
        && above_tail(|r| (r.err_b_mean, r.err_b_se))
        && near_tail(last.err_b_mean, last.err_b_se);
    let sched_ok = decreasing(|r| r.err_b_schedule_mean);
    let fmt = |f: fn(&klgp::harness::TrendRow) -> f64| {
        rows.iter()
            .map(|r| format!("{:.5}", f(r)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    report(
        9,
        "consistency trends",
        a_ok && b_ok && sched_ok && elapsed < Duration::from_secs(1200),
        &format!(
            "tail_sum(5) = {:.5}; Err_A = [{}], Err_B = [{}], Err_B with E = ceil(sqrt M) = [{}] over M = {:?}, {} runs, {:.1}s",
            last.tail_fixed,
            fmt(|r| r.err_a_mean),
            fmt(|r| r.err_b_mean),
            fmt(|r| r.err_b_schedule_mean),
            cfg.m_grid,
            cfg.runs,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_10_numerical_kl_fidelity() {
    let sys = EigenSystem::numerical(
        &KernelSpec::SplineFirstOrder,
        &InputMeasure::unit_interval(),
        2000,
        5,
        10,
        Sampling::Stratified,
    )
    .unwrap();
    let rel: Vec<f64> = (0..5)
        .map(|e| (sys.lambda(e) - spline_lambda(e)).abs() / spline_lambda(e))
        .collect();
    let worst_rel = rel.iter().copied().fold(0.0, f64::max);
    let quad = InputMeasure::unit_interval().quadrature(10_000).unwrap();
    let mut gram = DMatrix::<f64>::zeros(5, 5);
    let mut buf = vec![0.0; 5];
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        sys.eval_into(p, &mut buf);
        for i in 0..5 {
            for j in 0..5 {
                gram[(i, j)] += w * buf[i] * buf[j];
            }
        }
    }
    let ortho = (gram - DMatrix::identity(5, 5)).amax();
    report(
        10,
        "numerical KL fidelity",
        worst_rel <= 0.02 && ortho <= 1e-2,
        &format!("max relative eigenvalue error (e <= 5) {worst_rel:.2e}; max |Gram - I| {ortho:.2e} (q = 2000)"),
    );
}
