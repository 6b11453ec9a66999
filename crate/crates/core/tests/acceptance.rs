//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every criterion reports even when an
//! earlier one fails; the process exits nonzero if any check fails.

mod common;

use std::time::{Duration, Instant};

use common::{circle, gaussian, markov_estimate, rng, sup_gap, true_markov, uniform, unstable_model};
use lts_core::bench::{
    run_count_sweep, run_length_sweep, summarize, trial_plant, CellSummary, ExperimentSpec, Method, SweepMode,
    TrialRecord,
};
use lts_core::control::{closed_loop_radius, hinf_norm, synthesize, verify_on_plant, FreqGrid, SynthOptions};
use lts_core::lti::{collect, generate_system, true_decomposition, GenSpec, LtiSystem};
use lts_core::numerics::{eigenvalues, norm2, singular_values, solve_dare, svd, Mat};
use lts_core::sysid::{assemble_hankel, detect_order, estimate_markov, identify, IdentConfig};
use nalgebra::DVector;
use num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// Largest distance from a planted eigenvalue to its nearest estimate.
fn eig_mismatch(planted: &[Complex64], found: &[Complex64]) -> f64 {
    if planted.len() != found.len() {
        return f64::INFINITY;
    }
    planted
        .iter()
        .map(|p| found.iter().map(|f| (p - f).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let sys = generate_system(&GenSpec::new(12, 3), 2024).unwrap();
    let t = 22;
    let data = collect(&sys, 2 * sys.d_u() * t, t, 1.0, 7).unwrap();
    let model = identify(&data, &IdentConfig::fixed(4, 8, 8, 3)).unwrap();
    let (unstable, _) = true_decomposition(&sys).unwrap();
    let planted = eigenvalues(&unstable.a).unwrap();
    let eig_err = eig_mismatch(&planted, &model.eigenvalues);
    let gap = sup_gap(&model.strictly_proper(), &unstable, &circle(512));
    let elapsed = start.elapsed();
    outcome(
        eig_err < 1e-6 && gap < 1e-6 && within(elapsed, 10.0),
        format!("eigenvalue error {eig_err:.3e}, transfer gap {gap:.3e} (tol 1e-6), {elapsed:.2?}"),
    )
}

/// Fixed plant with unstable poles 1.5, 1.2 and stable poles 0.5, 0.4, -0.3.
fn fixed_plant() -> LtiSystem {
    let poles = DVector::from_vec(vec![1.5, 1.2, 0.5, 0.4, -0.3]);
    let s = Mat::from_fn(5, 5, |i, j| if i == j { 2.0 } else { 0.3 * ((i + 2 * j) % 3) as f64 - 0.2 });
    let a = &s * Mat::from_diagonal(&poles) * s.clone().try_inverse().unwrap();
    let b = Mat::from_column_slice(5, 1, &[1.0, -0.5, 0.8, 1.0, 0.6]);
    let c = Mat::from_row_slice(1, 5, &[0.7, 1.0, -0.4, 0.9, 1.1]);
    LtiSystem::new(a, b, c, Mat::zeros(1, 1)).unwrap()
}

fn truncation_decay() -> Outcome {
    let start = Instant::now();
    let sys = fixed_plant();
    let (unstable, _) = true_decomposition(&sys).unwrap();
    let (p, q) = (6, 6);
    let lifts: Vec<usize> = (2..=16).step_by(2).collect();
    let blocks = 16 + p + q + 1;
    let full = markov_estimate(true_markov(&sys, blocks), 1);
    let part = markov_estimate(true_markov(&unstable, blocks), 1);
    let logs: Vec<f64> = lifts
        .iter()
        .map(|&m| {
            let h = assemble_hankel(&full, m, p, q).unwrap().h;
            let ht = assemble_hankel(&part, m, p, q).unwrap().h;
            norm2(&(h - ht)).ln()
        })
        .collect();
    let xs: Vec<f64> = lifts.iter().map(|&m| m as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, logs.iter().sum::<f64>() / logs.len() as f64);
    let sxy: f64 = xs.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let bound = 0.75f64.ln() + 0.1;
    let elapsed = start.elapsed();
    outcome(
        slope <= bound && within(elapsed, 30.0),
        format!("log-slope {slope:.4} (bound {bound:.4}), {elapsed:.2?}"),
    )
}

fn estimation_rate() -> Outcome {
    let start = Instant::now();
    let (m, p, q, t) = (4, 8, 8, 22);
    let (mut small, mut large) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let sys = generate_system(&GenSpec::new(12, 3), 100 + seed)
            .unwrap()
            .with_noise(0.0, 0.4)
            .unwrap();
        let truth = assemble_hankel(&markov_estimate(true_markov(&sys, t), 1), m, p, q).unwrap().h;
        let data = collect(&sys, 400, t, 1.0, 500 + seed).unwrap();
        for (count, out) in [(100, &mut small), (400, &mut large)] {
            let phi = estimate_markov(&data.first(count).unwrap()).unwrap();
            let h = assemble_hankel(&phi, m, p, q).unwrap().h;
            out.push(norm2(&(h - &truth)));
        }
    }
    let ratio = median(&mut large) / median(&mut small);
    let elapsed = start.elapsed();
    outcome(
        (0.33..=0.75).contains(&ratio) && within(elapsed, 120.0),
        format!("median error ratio M=400 vs M=100 is {ratio:.4} (want [0.33, 0.75]), {elapsed:.2?}"),
    )
}

/// Random stable system with real poles in `[-0.8, 0.8]`.
fn stable_remainder(g: &mut lts_core::seeds::Rng, order: usize) -> LtiSystem {
    let poles = uniform(g, order, 1, -0.8, 0.8);
    let s = common::well_conditioned(g, order);
    let a = &s * Mat::from_diagonal(&poles.column(0).into_owned()) * s.clone().try_inverse().unwrap();
    LtiSystem::new(a, gaussian(g, order, 1), gaussian(g, 1, order), Mat::zeros(1, 1)).unwrap()
}

fn small_gain_soundness() -> Outcome {
    let start = Instant::now();
    let opts = SynthOptions::default();
    let grid = FreqGrid::default();
    let (mut tested, mut stabilized, mut worst) = (0, 0, 0.0f64);
    let mut case = 0u64;
    while tested < 50 {
        case += 1;
        let mut g = rng(9000 + case);
        // alternate between random models and models identified from data
        let model = if case.is_multiple_of(2) {
            unstable_model(&mut g, 1 + (case as usize / 2) % 3, 1, 1)
        } else {
            let sys = generate_system(&GenSpec::new(8, 2), case).unwrap().with_noise(0.05, 0.05).unwrap();
            let data = collect(&sys, 60, 22, 1.0, case).unwrap();
            match identify(&data, &IdentConfig::fixed(4, 8, 8, 2)) {
                Ok(m) => m,
                Err(_) => continue,
            }
        };
        let Ok(ctrl) = synthesize(&model, &opts) else { continue };
        let delta = stable_remainder(&mut g, 3);
        let norm = hinf_norm(&delta, &grid).unwrap();
        let target: f64 = uniform(&mut g, 1, 1, 0.05, 0.95)[0];
        let scale = target / (ctrl.certificate * norm);
        let k = model.k;
        let mut a = Mat::zeros(k + 3, k + 3);
        a.view_mut((0, 0), (k, k)).copy_from(&model.n1);
        a.view_mut((k, k), (3, 3)).copy_from(&delta.a);
        let mut b = Mat::zeros(k + 3, 1);
        b.view_mut((0, 0), (k, 1)).copy_from(&model.b1);
        b.view_mut((k, 0), (3, 1)).copy_from(&delta.b);
        let mut c = Mat::zeros(1, k + 3);
        c.view_mut((0, 0), (1, k)).copy_from(&model.c1);
        c.view_mut((0, k), (1, 3)).copy_from(&(&delta.c * scale));
        let plant = LtiSystem::new(a, b, c, model.d_hat.clone()).unwrap();
        let radius = closed_loop_radius(&plant, &ctrl);
        tested += 1;
        worst = worst.max(radius);
        if radius < 1.0 {
            stabilized += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        stabilized == 50 && within(elapsed, 120.0),
        format!("{stabilized}/50 stabilized, worst radius {worst:.4}, {elapsed:.2?}"),
    )
}

fn cells(records: &[TrialRecord]) -> Vec<CellSummary> {
    summarize(records).unwrap()
}

fn cell_median(cells: &[CellSummary], method: Method, n: usize) -> f64 {
    cells
        .iter()
        .find(|c| c.method == method && c.n == n)
        .map(|c| c.median_cost)
        .unwrap_or(f64::INFINITY)
}

fn length_sweep() -> Outcome {
    let start = Instant::now();
    let spec = ExperimentSpec::standard(SweepMode::LengthSweep);
    let records = run_length_sweep(&spec).unwrap();
    let summary = cells(&records);
    let within_70 = |n: usize| {
        let rs: Vec<_> = records.iter().filter(|r| r.method == Method::LtsP && r.n == n).collect();
        rs.iter().filter(|r| r.cost.is_some_and(|c| c <= 70)).count() as f64 / rs.len() as f64
    };
    let fracs: Vec<f64> = spec.n_list.iter().map(|&n| within_70(n)).collect();
    let a = fracs.iter().all(|&f| f >= 0.8);
    let (l10, l40) = (cell_median(&summary, Method::LtsP, 10), cell_median(&summary, Method::LtsP, 40));
    let b = l40.is_finite() && l40 <= 1.5 * l10;
    let (h10, h40) = (
        cell_median(&summary, Method::HoKalmanFull, 10),
        cell_median(&summary, Method::HoKalmanFull, 40),
    );
    let c = h10.is_finite() && h40 >= 2.0 * h10;
    let elapsed = start.elapsed();
    outcome(
        a && b && c,
        format!(
            "(a) fraction within T<=70 {fracs:?} [{}]; (b) lts_p median T n=10 {l10}, n=40 {l40} [{}]; \
             (c) ho_kalman_full median T n=10 {h10}, n=40 {h40} [{}]; {elapsed:.2?}",
            verdict(a),
            verdict(b),
            verdict(c)
        ),
    )
}

fn count_sweep() -> Outcome {
    let start = Instant::now();
    let spec = ExperimentSpec::standard(SweepMode::CountSweep);
    let summary = cells(&run_count_sweep(&spec).unwrap());
    let (l10, l40) = (cell_median(&summary, Method::LtsP, 10), cell_median(&summary, Method::LtsP, 40));
    let h40 = cell_median(&summary, Method::HoKalmanFull, 40);
    let pass = l40.is_finite() && l40 <= 1.5 * l10 && l40 < h40;
    let elapsed = start.elapsed();
    outcome(
        pass,
        format!("lts_p median M n=10 {l10}, n=40 {l40}; ho_kalman_full median M n=40 {h40}; {elapsed:.2?}"),
    )
}

fn order_detection() -> Outcome {
    let start = Instant::now();
    let spec = ExperimentSpec::standard(SweepMode::CountSweep);
    let (t, count) = (70, 400);
    let (m, p) = (spec.m, (70 - spec.m) / 2);
    let mut hits = 0;
    let mut found = Vec::new();
    for trial in 0..30 {
        let n = [10, 20, 40][trial % 3];
        let sys = trial_plant(&spec, n, 0, trial).unwrap();
        let data = collect(&sys, count, t, spec.sigma_u, 77 + trial as u64).unwrap();
        let phi = estimate_markov(&data).unwrap();
        let h = assemble_hankel(&phi, m, p, p).unwrap();
        let k = detect_order(&h.svals, p - 1).map(|o| o.k).unwrap_or(0);
        found.push(k);
        if k == spec.k {
            hits += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        hits as f64 >= 0.9 * 30.0,
        format!("{hits}/30 recovered k = 5, detected orders {found:?}, {elapsed:.2?}"),
    )
}

fn kernel_exactness() -> Outcome {
    let start = Instant::now();
    let one = Mat::from_element(1, 1, 1.0);
    let p = solve_dare(&Mat::from_element(1, 1, 2.0), &one, &one, &one).unwrap()[(0, 0)];
    let dare_err = (p - (2.0 + 5f64.sqrt())).abs();
    let sys = LtiSystem::new(Mat::from_element(1, 1, 0.5), one.clone(), one.clone(), Mat::zeros(1, 1)).unwrap();
    let hinf_err = (hinf_norm(&sys, &FreqGrid::default()).unwrap() - 2.0).abs();
    let mut g = rng(31337);
    let mut ey_err = 0.0f64;
    for i in 0..100 {
        let (r, c) = (3 + i % 7, 2 + (i * 5) % 9);
        let a = gaussian(&mut g, r, c);
        let sv = singular_values(&a).unwrap();
        let dec = svd(&a).unwrap();
        for rank in 0..sv.len() {
            let got = norm2(&(&a - dec.truncate(rank)));
            let want = sv.get(rank).copied().unwrap_or(0.0);
            ey_err = ey_err.max((got - want).abs() / sv[0]);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        dare_err < 1e-8 && hinf_err < 1e-4 && ey_err < 1e-10 && within(elapsed, 10.0),
        format!("DARE error {dare_err:.2e}, H-inf error {hinf_err:.2e}, Eckart-Young error {ey_err:.2e}, {elapsed:.2?}"),
    )
}

/// Plant with only unstable dynamics plus `D`, so the feedthrough is the
/// whole mismatch between the identified model and the plant.
fn feedthrough() -> Outcome {
    let start = Instant::now();
    let spec = GenSpec {
        feedthrough: true,
        ..GenSpec::new(3, 3)
    };
    let sys = generate_system(&spec, 404).unwrap();
    let data = collect(&sys, 44, 22, 1.0, 405).unwrap();
    let model = identify(&data, &IdentConfig::fixed(4, 8, 8, 3)).unwrap();
    let d_err = (&model.d_hat - &sys.d).abs().max();
    let (radius, stabilized) = match synthesize(&model, &SynthOptions::default()) {
        Ok(ctrl) => {
            let report = verify_on_plant(&sys, &ctrl, 406);
            (report.closed_loop_radius, report.stabilized)
        }
        Err(_) => (f64::INFINITY, false),
    };
    let elapsed = start.elapsed();
    outcome(
        sys.d.abs().max() > 0.0 && d_err < 1e-8 && stabilized,
        format!("|D| = {:.3}, D error {d_err:.2e}, closed-loop radius {radius:.4}, {elapsed:.2?}", sys.d.abs().max()),
    )
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() {
    // a bare harness still receives libtest flags such as --list
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let checks: [(usize, fn() -> Outcome); 9] = [
        (1, exact_recovery),
        (2, truncation_decay),
        (3, estimation_rate),
        (4, small_gain_soundness),
        (5, length_sweep),
        (6, count_sweep),
        (7, order_detection),
        (8, kernel_exactness),
        (9, feedthrough),
    ];
    // positional arguments select criteria by number
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, check) in checks {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let out = check();
        println!("criterion {id}: {} - {}", verdict(out.pass), out.detail);
        if !out.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
