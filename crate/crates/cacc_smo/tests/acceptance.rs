//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::process::ExitCode;

use cacc_smo::attack_lab::{make_stealthy, AttackScenario, SignalSpec, StealthOptions};
use cacc_smo::batch::{run_many, seeded_jobs};
use cacc_smo::estimation::containment_check;
use cacc_smo::estimation::EstimateInterval;
use cacc_smo::extended_system::{attack_map_pinv, enumerate_valid_designs, DEFAULT_TOL_MARGINAL};
use cacc_smo::linalg::{self, matrix_exponential, pseudo_inverse, RANK_TOL};
use cacc_smo::presets;
use cacc_smo::sim_engine::{compare_runs, prepare, run, tol_stealth, Integrator, SimConfig, SimSetup};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn step(amplitude: f64, onset: f64) -> SignalSpec {
    SignalSpec::Step { amplitude, onset }
}

fn quantifiable_scenario() -> AttackScenario {
    let mut sc = AttackScenario::healthy();
    sc.du = step(1.0, 5.0);
    sc.dy[0] = step(0.15, 5.0);
    sc.dy[2] = step(-0.3, 5.0);
    sc.dy[3] = step(-0.1, 5.0);
    sc
}

fn stealthy_profile() -> SignalSpec {
    SignalSpec::FilteredRamp {
        slope: 1.0,
        pole: -1.0,
        onset: 5.0,
    }
}

fn nonstealthy_scenario() -> AttackScenario {
    let mut sc = AttackScenario::healthy();
    sc.dy[1] = SignalSpec::Sinusoid {
        amplitude: 1.0,
        frequency: 1.0,
        phase: std::f64::consts::FRAC_PI_2,
        onset: 5.0,
    };
    sc.dy[2] = step(-0.3, 5.0);
    sc.dy[3] = step(-0.1, 5.0);
    sc
}

/// Uncertainty-free, noiseless setup with the thin boundary layer (needs dt = 1e-4).
fn exact_setup() -> (SimSetup, SimConfig) {
    let mut setup = SimSetup::table1();
    setup.platoon.r_tau = 1.0;
    setup.eta_model = 0.0;
    setup.noise_bounds = [0.0; 4];
    setup.observer.sign_smoothing = 1e-3;
    let cfg = SimConfig {
        dt: 1e-4,
        noiseless: true,
        stop_on_crash: false,
        record_every: 1000,
        ..Default::default()
    };
    (setup, cfg)
}

fn criterion_1() -> Verdict {
    let prep = prepare(&SimSetup::table1()).unwrap();
    let base = SimConfig {
        record_every: 1000,
        ..Default::default()
    };
    let jobs = seeded_jobs(&AttackScenario::healthy(), &base, 0..100);
    let mut events = 0;
    let mut over_rho = f64::NEG_INFINITY;
    let mut margin = f64::NEG_INFINITY;
    for out in run_many(&prep, &jobs) {
        let m = out.unwrap().metrics;
        events += m.detections.len();
        over_rho = over_rho.max(m.max_threshold_over_rho);
        margin = margin.max(m.max_threshold_margin);
    }
    verdict(
        events == 0 && over_rho <= 1e-9,
        format!("100 noisy healthy runs: {events} detection events; max(threshold - rho) = {over_rho:.2e}; max(|nu_fil| - threshold) = {margin:.3}"),
    )
}

fn criterion_2() -> Verdict {
    let setup = SimSetup::table1();
    let eps = setup.observer.sign_smoothing;
    let prep = prepare(&setup).unwrap();
    let cfg = SimConfig {
        noiseless: true,
        observer_offset: vec![0.5, -0.5, 0.5, -0.5],
        ..Default::default()
    };
    let out = run(&prep, &AttackScenario::healthy(), &cfg).unwrap();
    let e_y = &out.trajectory.e_y;
    let norm = |v: &Vec<f64>| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let energy = |v: &Vec<f64>| 0.5 * v.iter().map(|x| x * x).sum::<f64>();
    let mut decreasing = true;
    for k in 0..e_y.len() - 1 {
        if norm(&e_y[k]) > 10.0 * eps && energy(&e_y[k + 1]) >= energy(&e_y[k]) {
            decreasing = false;
        }
    }
    let reach = out.metrics.sliding_time;
    verdict(
        reach.is_some_and(|t| t <= 2.0) && decreasing,
        format!(
            "noiseless run from a 0.5 output-estimate offset: |e_y| <= eps = {eps} from t = {} s onward; V strictly decreasing outside 10 eps: {decreasing}",
            reach.map_or("never".into(), |t| format!("{t:.3}"))
        ),
    )
}

fn criterion_3() -> Verdict {
    let setup = SimSetup::table1();
    let prep = prepare(&setup).unwrap();
    let ident = prep.estimator.identifiable.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut scenarios = vec![quantifiable_scenario()];
    for _ in 0..4 {
        let mut sc = AttackScenario::healthy();
        sc.du = step(rng.gen_range(-3.0..3.0), 5.0);
        sc.dy[0] = step(rng.gen_range(-3.0..3.0), 5.0);
        sc.dy[2] = step(rng.gen_range(-3.0..3.0), 5.0);
        sc.dy[3] = step(rng.gen_range(-3.0..3.0), 5.0);
        scenarios.push(sc);
    }
    let mut noisy_ok = [true; 4];
    let mut noisy_worst = [0.0f64; 4];
    let mut saturated = Vec::new();
    let rho = &setup.observer.rho;
    for (k, sc) in scenarios.iter().enumerate() {
        let cfg = SimConfig {
            seed: k as u64,
            stop_on_crash: false,
            record_every: 1000,
            ..Default::default()
        };
        let out = run(&prep, sc, &cfg).unwrap();
        let last = out.trajectory.nu_fil.last().unwrap();
        if last.iter().zip(rho).any(|(v, r)| v.abs() >= r - 1e-6) {
            saturated.push(k + 1);
        }
        let truth = DVector::from_vec(sc.delta_vector(59.0, &setup.partition).unwrap());
        let est = EstimateInterval {
            center: DVector::from_vec(out.metrics.steady_state_estimate.clone()),
            halfwidth: prep.estimator.delta.clone(),
        };
        let slack = 0.05 * truth.norm();
        for (c, ok) in containment_check(&est, &truth, slack).iter().enumerate() {
            let finite = prep.estimator.delta[c].is_finite();
            noisy_ok[c] &= *ok && finite;
            noisy_worst[c] = noisy_worst[c].max((est.center[c] - truth[c]).abs());
        }
    }

    let (exact, cfg) = exact_setup();
    let prep_x = prepare(&exact).unwrap();
    let sc = quantifiable_scenario();
    let out = run(&prep_x, &sc, &cfg).unwrap();
    let exact_err: Vec<f64> = out
        .metrics
        .steady_state_estimation_error
        .iter()
        .map(|e| e.abs())
        .collect();
    let exact_ok: Vec<bool> = exact_err.iter().map(|e| *e <= 1e-3).collect();

    let all = noisy_ok.iter().all(|x| *x) && exact_ok.iter().all(|x| *x);
    let comp = |v: &[bool]| {
        v.iter()
            .enumerate()
            .filter(|(_, ok)| !**ok)
            .map(|(k, _)| (k + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    verdict(
        all,
        format!(
            "5 step attacks: containment fails on component(s) [{}] (identifiable: {:?}; worst |error| {:?}; EOI pinned at rho, sliding lost, in run(s) {:?}); noiseless exact errors {:.1e} fail on [{}]; a constant follower-speed bias shifts both speed estimates equally and leaves no steady trace in the EOI",
            comp(&noisy_ok),
            ident,
            noisy_worst.map(|x| (x * 1e4).round() / 1e4),
            saturated,
            DVector::from_vec(exact_err.clone()).amax(),
            comp(&exact_ok),
        ),
    )
}

fn criterion_4() -> Verdict {
    let (exact, cfg) = exact_setup();
    let prep = prepare(&exact).unwrap();
    let d = DVector::from_column_slice(&[0.5, 0.1, -0.3, 0.1]);
    let mut sc = AttackScenario::healthy();
    sc.du = step(d[0], 1.0);
    sc.dy[0] = step(d[1], 1.0);
    sc.dy[2] = step(d[2], 1.0);
    sc.dy[3] = step(d[3], 1.0);
    let out = run(&prep, &sc, &cfg).unwrap();
    let nu = DVector::from_column_slice(out.trajectory.nu_fil.last().unwrap());
    let literal = attack_map_pinv(&prep.sys) * &d;
    let corrected = prep.estimator.predicted_eoi(&d, &DVector::zeros(4));
    let rel_lit = (&nu - &literal).norm() / literal.norm();
    let rel_cor = (&nu - &corrected).norm() / corrected.norm();
    verdict(
        rel_lit <= 1e-3,
        format!(
            "lim nu_fil vs (A21 A11^+ F1 - F2) Delta: relative error {rel_lit:.3}; vs -(S_F - F2) Delta with the minimal-realization steady-state gain S_F: {rel_cor:.1e} ({})",
            if rel_cor <= 1e-3 { "within 1e-3" } else { "outside 1e-3" }
        ),
    )
}

fn criterion_5() -> Verdict {
    let setup = SimSetup::table1();
    let prep = prepare(&setup).unwrap();
    let mut passing_signs = Vec::new();
    let mut details = Vec::new();
    for sign in [1.0, -1.0] {
        let sc = make_stealthy(
            &stealthy_profile(),
            &setup.platoon,
            StealthOptions {
                integral_sign: sign,
                ..Default::default()
            },
        )
        .unwrap();
        let mut ok = true;
        for noiseless in [true, false] {
            let cfg = SimConfig {
                seed: 11,
                noiseless,
                ..Default::default()
            };
            let tol = tol_stealth(&cfg);
            let attacked = run(&prep, &sc, &cfg).unwrap();
            let healthy = run(&prep, &AttackScenario::healthy(), &cfg).unwrap();
            let diff = compare_runs(&attacked.trajectory, &healthy.trajectory);
            ok &= diff.output <= tol && diff.nu_fil <= tol;
            details.push(format!(
                "sign {sign:+} {}: output {:.1e}, nu_fil {:.1e} (tol {tol:.0e}, {:.1} s)",
                if noiseless { "noiseless" } else { "noisy" },
                diff.output,
                diff.nu_fil,
                attacked.metrics.final_time
            ));
        }
        if ok {
            passing_signs.push(sign);
        }
    }
    verdict(
        passing_signs == [1.0],
        format!("passing gap-attack sign(s): {passing_signs:?}; {}", details.join("; ")),
    )
}

fn criterion_6() -> Verdict {
    let setup = SimSetup::table1();
    let prep = prepare(&setup).unwrap();
    let stealthy = make_stealthy(&stealthy_profile(), &setup.platoon, StealthOptions::default()).unwrap();
    let mut ok = true;
    let mut lines = Vec::new();
    let base = SimConfig {
        record_every: 1000,
        ..Default::default()
    };
    for (name, sc) in [
        ("quantifiable", quantifiable_scenario()),
        ("stealthy", stealthy),
        ("non-stealthy", nonstealthy_scenario()),
    ] {
        let outs = run_many(&prep, &seeded_jobs(&sc, &base, 1..=5));
        let mut relv = Vec::new();
        let mut crashes = 0;
        let mut detected = 0;
        for o in outs {
            let m = o.unwrap().metrics;
            crashes += m.crashed as usize;
            detected += (!m.detections.is_empty()) as usize;
            if let Some(v) = m.relative_velocity_at_crash {
                relv.push(v.abs());
            }
        }
        let max_rv = relv.iter().cloned().fold(0.0, f64::max);
        let min_rv = relv.iter().cloned().fold(f64::INFINITY, f64::min);
        let this = match name {
            "quantifiable" => crashes == 5 && max_rv < 1.0 && detected == 0,
            "stealthy" => crashes == 5 && min_rv > 2.0 && detected == 0,
            _ => crashes == 0 && detected == 0,
        };
        ok &= this;
        lines.push(format!(
            "{name}: {crashes}/5 crashed, |relvel| at impact in [{:.2}, {:.2}], {detected}/5 detected",
            if relv.is_empty() { 0.0 } else { min_rv },
            max_rv
        ));
    }
    verdict(ok, lines.join("; "))
}

fn criterion_7() -> Verdict {
    let reports = enumerate_valid_designs(&presets::table1_platoon(), presets::TABLE1_A_FIL, DEFAULT_TOL_MARGINAL);
    let admissible: Vec<_> = reports.iter().filter(|r| r.pole_admissible(true)).collect();
    let only_relvel = admissible.iter().all(|r| r.relvel_in_y1);
    let chosen = presets::table1_partition().label();
    let chosen_pass = reports.iter().any(|r| r.label == chosen && r.pass(false));
    let h4 = reports.iter().filter(|r| r.partition.h == 4);
    let h4_count = h4.clone().count();
    let h4_fail = h4.clone().all(|r| !r.dim_check);
    verdict(
        reports.len() == 120 && only_relvel && chosen_pass && h4_fail,
        format!(
            "{} candidates; {} pole-admissible, all with relative velocity unfiltered: {only_relvel}; chosen design {chosen} passes the full gate with marginal poles tolerated: {chosen_pass}; {h4_count} h=4 designs all fail the dimension check: {h4_fail}",
            reports.len(),
            admissible.len()
        ),
    )
}

fn rk4_flow(a: &DMatrix<f64>, x0: &DVector<f64>, t: f64, n: usize) -> DVector<f64> {
    let h = t / n as f64;
    let mut x = x0.clone();
    for _ in 0..n {
        let k1 = a * &x;
        let k2 = a * (&x + &k1 * (0.5 * h));
        let k3 = a * (&x + &k2 * (0.5 * h));
        let k4 = a * (&x + &k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

fn criterion_8() -> Verdict {
    let prep = prepare(&SimSetup::table1()).unwrap();
    let mut expm_err: f64 = 0.0;
    for a in [prep.sys.a11.clone(), prep.sys.a_bar(), prep.sys.ext.a.clone()] {
        let n = a.nrows();
        let x0 = DVector::from_fn(n, |i, _| 1.0 + 0.3 * i as f64);
        let exact = matrix_exponential(&a, 1.0) * &x0;
        let oracle = rk4_flow(&a, &x0, 1.0, 20_000);
        expm_err = expm_err.max((exact - oracle).amax());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut penrose: f64 = 0.0;
    let mut mats = vec![
        prep.sys.a11.clone(),
        attack_map_pinv(&prep.sys),
        prep.estimator.attack_map.clone(),
    ];
    for _ in 0..20 {
        let (r, c) = (rng.gen_range(1..7), rng.gen_range(1..7));
        mats.push(DMatrix::from_fn(r, c, |_, _| rng.gen_range(-3.0..3.0)));
    }
    for m in &mats {
        let p = pseudo_inverse(m, RANK_TOL);
        let scale = 1.0 + linalg::max_abs(m) * linalg::max_abs(&p);
        let e1 = linalg::max_abs(&(m * &p * m - m));
        let e2 = linalg::max_abs(&(&p * m * &p - &p));
        let e3 = linalg::max_abs(&((m * &p).transpose() - m * &p));
        let e4 = linalg::max_abs(&((&p * m).transpose() - &p * m));
        penrose = penrose.max(e1.max(e2).max(e3).max(e4) / scale);
    }

    // smooth interval: no attack, exact observer start, the follower settling its
    // gap. Inside the boundary layer the injection is a gain rho/eps, so forward
    // Euler stays free of chatter only for dt < 2 eps / max(rho).
    let obs = &prep.setup.observer;
    let dt_stable = 2.0 * obs.sign_smoothing / obs.rho.iter().fold(0.0f64, |a, r| a.max(*r));
    let sample = |integrator, dt: f64| -> Vec<f64> {
        let cfg = SimConfig {
            dt,
            integrator,
            horizon: 3.5,
            noiseless: true,
            ..Default::default()
        };
        let out = run(&prep, &AttackScenario::healthy(), &cfg).unwrap();
        let k = (3.0 / dt).round() as usize;
        let mut s = out.trajectory.state[k].to_vec();
        s.extend_from_slice(&out.trajectory.nu_fil[k]);
        s
    };
    let reference = sample(Integrator::Rk4, 1e-4);
    let err = |integrator, dt: f64| -> f64 {
        sample(integrator, dt)
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let grid = [2e-3, 1e-3, 5e-4];
    let e = grid.map(|dt| err(Integrator::Euler, dt));
    let orders = [(e[0] / e[1]).log2(), (e[1] / e[2]).log2()];
    let euler_ok = grid[0] < dt_stable && orders.iter().all(|p| (0.85..=1.15).contains(p));
    let rk_err = err(Integrator::Rk4, 1e-3);

    verdict(
        expm_err <= 1e-8 && penrose <= 1e-9 && euler_ok && rk_err <= 1e-8,
        format!(
            "expm vs RK4 flow: {expm_err:.1e}; Penrose residual (relative): {penrose:.1e}; Euler at dt = 2e-3, 1e-3, 5e-4 (boundary-layer limit {dt_stable:.1e}): errors {:.1e}, {:.1e}, {:.1e}, observed order {:.2}, {:.2}; RK4 at dt = 1e-3: {rk_err:.1e}",
            e[0], e[1], e[2], orders[0], orders[1]
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("no false alarm", criterion_1),
        ("sliding convergence", criterion_2),
        ("quantifiable estimation", criterion_3),
        ("final-value oracle", criterion_4),
        ("stealth equivalence", criterion_5),
        ("scenario reproduction", criterion_6),
        ("design gate", criterion_7),
        ("numerical hygiene", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let v = f();
        failed += (!v.pass) as usize;
        println!(
            "criterion {} {:<24} {}  [{:.1} s] {}",
            k + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
