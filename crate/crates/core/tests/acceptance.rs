//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p nlkdv-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nlkdv_core::{
    build_weights, convergence_study, decay_fit, default_tail_window, discrete_convolve, discrete_convolve_fast,
    initial_data, integrate_system, linf_distance, linf_error, localization_study, make_kernel,
    second_difference, solitary_params, ConvergenceMode, ConvergenceReport, ConvolutionWeights, ExperimentSpec,
    FnSystem, GridFunction, Kernel, KernelKind, Nonlinearity, ProblemOptions, SolitaryWave, TailSide,
    ToleranceSettings, UniformGrid, WaveFamily,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `|μ|(ℝ) = ∫|α‴|`, computed offline by piecewise high-precision quadrature.
const MU_ROSENAU_KDV: f64 = 1.0143709877;
const MU_ROSENAU_BBM: f64 = 0.7664245178;
const MU_GAUSSIAN: f64 = 1.5100130001;
const MU_SECH2: f64 = 10.0 / 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn spec(family: WaveFamily, kernel: KernelKind, domain: (f64, f64), tol: f64) -> ExperimentSpec {
    ExperimentSpec {
        kernel: make_kernel(kernel),
        nonlinearity: Nonlinearity::linear_plus_quadratic(),
        kappa: 1.0,
        domain,
        wave: solitary_params(family),
        tolerances: ToleranceSettings::with_tolerance(tol),
        options: ProblemOptions::default(),
    }
}

/// `α(x) = sech²(x)/2`: smooth, unit mass, exponentially decaying.
fn sech2_kernel() -> Kernel {
    Kernel::custom(
        |x: f64| 0.5 / x.cosh().powi(2),
        |x: f64| -x.tanh() / x.cosh().powi(2),
        Some(2.0),
        true,
    )
}

fn in_window(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn fmt_errors(report: &ConvergenceReport) -> String {
    report
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.error.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn exact_convergence(family: WaveFamily, domain: (f64, f64)) -> ConvergenceReport {
    let s = spec(family, kernel_of(family), domain, 1e-8);
    convergence_study(&s, &[0.4, 0.2, 0.1, 0.05], 10.0, ConvergenceMode::AgainstExact).expect("convergence study")
}

fn kernel_of(family: WaveFamily) -> KernelKind {
    match family {
        WaveFamily::RosenauKdV => KernelKind::RosenauKdV,
        WaveFamily::RosenauBBMKdV => KernelKind::RosenauBBMKdV,
    }
}

fn rate_windows(report: &ConvergenceReport) -> (bool, String) {
    let rates = report.rates();
    let each = rates.iter().all(|&r| in_window(r, 1.85, 2.15));
    let finest = rates.last().is_some_and(|&r| in_window(r, 1.95, 2.05));
    (
        each && finest,
        format!(
            "errors [{}], rates [{}] (each in [1.85, 2.15]: {each}, finest in [1.95, 2.05]: {finest})",
            fmt_errors(report),
            fmt_list(&rates)
        ),
    )
}

fn criterion_1(kdv: &ConvergenceReport) -> Outcome {
    let (pass, detail) = rate_windows(kdv);
    Outcome { pass, detail }
}

fn criterion_2(kdv: &ConvergenceReport, bbm: &ConvergenceReport) -> Outcome {
    let (rates_ok, detail) = rate_windows(bbm);
    let mut larger = true;
    let mut cmp = Vec::new();
    for h in [0.2, 0.1] {
        let e = |r: &ConvergenceReport| r.rows.iter().find(|row| row.h == h).and_then(|row| row.error).unwrap();
        let (eb, ek) = (e(bbm), e(kdv));
        larger &= eb > ek;
        cmp.push(format!("h={h}: bbm {eb:.3e} vs kdv {ek:.3e}"));
    }
    Outcome {
        pass: rates_ok && larger,
        detail: format!("{detail}; bbm error exceeds kdv: {larger} ({})", cmp.join(", ")),
    }
}

fn criterion_3() -> Outcome {
    let s = spec(WaveFamily::RosenauKdV, KernelKind::Gaussian, (-60.0, 80.0), 1e-8);
    let report = convergence_study(&s, &[0.4, 0.2, 0.1, 0.05, 0.025], 10.0, ConvergenceMode::Richardson)
        .expect("richardson study");
    let rates = report.rates();
    let finest = *rates.last().unwrap();
    Outcome {
        pass: in_window(finest, 1.98, 2.03),
        detail: format!("richardson rates [{}], finest {finest:.5} in [1.98, 2.03]", fmt_list(&rates)),
    }
}

struct Fig1 {
    wave: SolitaryWave,
    state: GridFunction,
}

fn fig1(tol: f64) -> Fig1 {
    let s = spec(WaveFamily::RosenauKdV, KernelKind::RosenauKdV, (-40.0, 80.0), tol);
    let grid = UniformGrid::from_domain(-40.0, 80.0, 0.5).unwrap();
    let run = s.run(grid, 40.0).expect("fig1 run");
    Fig1 {
        wave: s.wave,
        state: run.state,
    }
}

fn criterion_4(run: &Fig1) -> Outcome {
    let err = linf_error(&run.state, |x, t| run.wave.profile(x, t), 40.0);
    let (i_peak, _) = run
        .state
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let x_peak = run.state.grid().node(i_peak);
    let target = run.wave.peak(40.0);
    let h = run.state.grid().h();
    let err_ok = err <= 5e-2;
    let peak_ok = (x_peak - target).abs() <= h;
    Outcome {
        pass: err_ok && peak_ok,
        detail: format!("l-inf error {err:.3e} (<= 5e-2), peak at {x_peak} vs {target:.4} (within {h})"),
    }
}

fn criterion_5() -> Outcome {
    let s = spec(WaveFamily::RosenauKdV, KernelKind::RosenauKdV, (-1.0, 1.0), 1e-10);
    let ns = [600, 800, 1000, 1200, 1600, 2400];
    let report = localization_study(&s, 0.05, &ns, 40.0).expect("localization study");
    let errors = report.errors();
    let knee = report.knee(0.1);
    let first = errors[0];
    let last_change = (errors[errors.len() - 1] - errors[errors.len() - 2]).abs() / errors[errors.len() - 2];
    let (drop_ok, knee_desc) = match knee {
        Some(n) => {
            let e_knee = report.rows.iter().find(|r| r.n == n).unwrap().error;
            (first / e_knee >= 10.0, format!("knee N = {n}, E(600)/E(knee) = {:.3e}", first / e_knee))
        }
        None => (false, "no knee".to_string()),
    };
    let flat_ok = last_change < 0.1;
    let detail = format!(
        "errors [{}]; {knee_desc} (>= 10); last-two relative change {last_change:.3e} (< 0.1)",
        errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
    );
    Outcome {
        pass: drop_ok && flat_ok,
        detail,
    }
}

/// Five-point Gauss–Legendre on `[a, b]` split into `panels` pieces.
fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * width;
            X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * width * x)).sum::<f64>() * 0.5 * width
        })
        .sum()
}

fn criterion_6() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;

    // Quadrature of α′(x₀ − x)·g(x) by the lattice sum.
    let kernel = make_kernel(KernelKind::RosenauKdV);
    let x0 = 0.4;
    let g = |x: f64| (-(x - 1.0).powi(2) / 8.0).exp();
    let w = |x: f64| kernel.alpha_prime(x0 - x) * g(x);
    let reach = 60.0;
    let exact = gauss_legendre(w, x0 - reach, x0, 6000) + gauss_legendre(w, x0, x0 + reach, 6000);
    let hs = [0.4, 0.2, 0.1, 0.05];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let n = (reach / h).round() as i64;
            let sum: f64 = (-n..=n).map(|i| h * w(i as f64 * h)).sum();
            (sum - exact).abs()
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let quad_ok = orders.iter().all(|&p| p >= 1.9);
    pass &= quad_ok;
    lines.push(format!("quadrature orders [{}] (>= 1.9)", fmt_list(&orders)));

    // Second-difference constant on sin over [−π, π].
    let mut worst = 0.0_f64;
    for n in [4, 8, 32, 128] {
        let h = std::f64::consts::PI / n as f64;
        let grid = UniformGrid::from_domain(-std::f64::consts::PI, std::f64::consts::PI, h).unwrap();
        let u = GridFunction::new(grid, grid.nodes().map(f64::sin).collect()).unwrap();
        let d2 = second_difference(&u).unwrap();
        let bound = h * h / 12.0 * (1.0 + 1e-6);
        let err = (1..grid.len() - 1)
            .map(|i| (d2.values()[i] + grid.node(i).sin()).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err / bound);
    }
    let stencil_ok = worst <= 1.0;
    pass &= stencil_ok;
    lines.push(format!("stencil error / bound max {worst:.6} (<= 1)"));

    // ‖D²_hα′_h‖ ≤ 2|μ|(ℝ).
    let kernels = [
        ("rosenau-kdv", make_kernel(KernelKind::RosenauKdV), MU_ROSENAU_KDV),
        ("rosenau-bbm-kdv", make_kernel(KernelKind::RosenauBBMKdV), MU_ROSENAU_BBM),
        ("gaussian", make_kernel(KernelKind::Gaussian), MU_GAUSSIAN),
        ("sech2", sech2_kernel(), MU_SECH2),
    ];
    let mut worst_ratio = 0.0_f64;
    for (name, k, mu) in &kernels {
        for h in [1.0, 0.5, 0.1, 0.05] {
            let halfwidth = (k.effective_halfwidth() / h).ceil() as usize + 1;
            let norm = build_weights(k, h, halfwidth, true).unwrap().l1_norm();
            let ratio = norm / (2.0 * mu);
            if ratio > 1.0 {
                lines.push(format!("{name} h={h}: {norm:.6} > 2|mu| = {:.6}", 2.0 * mu));
            }
            worst_ratio = worst_ratio.max(ratio);
        }
    }
    let bound_ok = worst_ratio <= 1.0;
    pass &= bound_ok;
    lines.push(format!("max ||D2 alpha'_h|| / 2|mu| = {worst_ratio:.4} (<= 1)"));
    Outcome {
        pass,
        detail: lines.join("; "),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let delta = 1e-4;
    let mut worst = 0.0_f64;
    let mut count = 0;
    for kind in KernelKind::CATALOG {
        let k = make_kernel(kind);
        let mut checked = 0;
        while checked < 200 {
            let x: f64 = rng.random_range(-10.0..10.0);
            if x.abs() < 10.0 * delta {
                continue;
            }
            let fd = (k.alpha(x + delta) - k.alpha(x - delta)) / (2.0 * delta);
            worst = worst.max((fd - k.alpha_prime(x)).abs());
            checked += 1;
        }
        count += checked;
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("{count} points over the catalog, max |alpha' - FD| = {worst:.3e} (<= 1e-6)"),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    let mut sizes = vec![17, 256, 1001];
    while sizes.len() < 50 {
        sizes.push(rng.random_range(3..2000));
    }
    for &m in &sizes {
        let h: f64 = rng.random_range(0.01..1.0);
        let k = rng.random_range(1..m);
        let weights = ConvolutionWeights::new(h, (0..2 * k + 1).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let grid = UniformGrid::new(rng.random_range(-50.0..0.0), h, m).unwrap();
        let v = GridFunction::new(grid, (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let direct = discrete_convolve(&weights, &v).unwrap();
        let fast = discrete_convolve_fast(&weights, &v).unwrap();
        let rel = linf_distance(&direct, &fast).unwrap() / nlkdv_core::linf_norm(&direct);
        worst = worst.max(rel);
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("{} cases, max relative l-inf difference {worst:.3e} (<= 1e-12)", sizes.len()),
    }
}

fn criterion_9(fine: &Fig1) -> Outcome {
    let decay = FnSystem::new(1, |_t, y: &[f64], dy: &mut [f64]| dy[0] = -y[0]);
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| {
            let traj = integrate_system(&decay, 0.0, &[1.0], 1.0, &[], &ToleranceSettings::fixed_step(dt)).unwrap();
            (traj.states[0][0] - (-1.0_f64).exp()).abs()
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let order_ok = orders.iter().all(|&p| p >= 3.8);

    let coarse = fig1(1e-6);
    let diff = linf_distance(&coarse.state, &fine.state).unwrap();
    let tol_ok = diff <= 1e-5;
    Outcome {
        pass: order_ok && tol_ok,
        detail: format!(
            "fixed-step orders [{}] (>= 3.8); fig1 tol 1e-6 vs 1e-10 difference {diff:.3e} (<= 1e-5)",
            fmt_list(&orders)
        ),
    }
}

fn criterion_10() -> Outcome {
    let s = spec(WaveFamily::RosenauKdV, KernelKind::RosenauKdV, (-60.0, 80.0), 1e-8);
    let grid = UniformGrid::from_domain(-60.0, 80.0, 0.1).unwrap();
    let window = default_tail_window(&grid, TailSide::Right);
    let numeric = s.run(grid, 10.0).expect("decay run");
    let fit = decay_fit(&numeric.state, window.clone()).unwrap();
    let exact = initial_data(&s.wave, &grid).unwrap();
    let exact_fit = decay_fit(&exact, window).unwrap();
    let target = 4.0 * s.wave.b;
    let rel = (exact_fit.rate - target).abs() / target;
    Outcome {
        pass: fit.rate >= 0.5 && rel <= 0.02,
        detail: format!(
            "numerical tail rate {:.4} (>= 0.5); exact-profile rate {:.5} vs 4B = {target:.5}, relative {rel:.2e} (<= 0.02)",
            fit.rate, exact_fit.rate
        ),
    }
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: u32, budget: Option<Duration>, start: Instant, outcome: Outcome| {
        let elapsed = start.elapsed();
        let in_budget = budget.is_none_or(|b| elapsed <= b);
        let pass = outcome.pass && in_budget;
        if !pass {
            failures += 1;
        }
        let budget_note = budget.map(|b| format!(", budget {}s", b.as_secs())).unwrap_or_default();
        println!(
            "criterion {n}: {}  {} [{:.1}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    };
    let mins = |m: u64| Some(Duration::from_secs(60 * m));

    let t = Instant::now();
    let kdv = exact_convergence(WaveFamily::RosenauKdV, (-60.0, 80.0));
    report(1, mins(5), t, criterion_1(&kdv));

    let t = Instant::now();
    let bbm = exact_convergence(WaveFamily::RosenauBBMKdV, (-60.0, 100.0));
    report(2, mins(5), t, criterion_2(&kdv, &bbm));

    let t = Instant::now();
    report(3, None, t, criterion_3());

    let t = Instant::now();
    let fine = fig1(1e-10);
    report(4, mins(2), t, criterion_4(&fine));

    let t = Instant::now();
    report(5, None, t, criterion_5());

    let t = Instant::now();
    report(6, Some(Duration::from_secs(30)), t, criterion_6());

    let t = Instant::now();
    report(7, Some(Duration::from_secs(5)), t, criterion_7());

    let t = Instant::now();
    report(8, Some(Duration::from_secs(10)), t, criterion_8());

    let t = Instant::now();
    report(9, None, t, criterion_9(&fine));

    let t = Instant::now();
    report(10, None, t, criterion_10());

    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
