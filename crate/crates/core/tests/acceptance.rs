//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured values, then asserts.
//!
//! Run with `cargo test -p fblin-core --test acceptance -- --nocapture --test-threads 1`
//! for ordered output.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};
use std::time::{Duration, Instant};

use fblin_core::analysis::{
    closed_loop_field, jacobian_with_step, spectrum, stability_sweep, EquilibriumSpec, SweepGrid,
    SweepOptions, Verdict, DEFAULT_PSI_BAR,
};
use fblin_core::control::{
    circle_start, default_step_schedule, run_open_loop, run_tracking, summarize_circle,
    DropoutModel, Episode, ReferenceTrajectory, TrackingGains, TrackingOptions,
};
use fblin_core::eigen::{eigenvalues, qr_eigenvalues, spectrum_distance};
use fblin_core::integrate::{Integrator, Substeps};
use fblin_core::linearise::{
    linearising_law_nominal, linearising_law_uncertain, point_p_velocity, ControlCommand, Law,
    LinearisationConfig, PointVelocityCommand, DEFAULT_P,
};
use fblin_core::model::{ModelInput, VehicleParams, VehicleState};
use fblin_core::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEG: f64 = PI / 180.0;

const C1_REL_TOL: f64 = 1e-12;
const C1_SAMPLES: usize = 10_000;
const C1_MAX_RUNTIME: Duration = Duration::from_secs(1);
const C2_RESIDUAL_TOL: f64 = 1e-10;
const C2_MAX_RUNTIME: Duration = Duration::from_secs(1);
const C3_MAX_RUNTIME: Duration = Duration::from_secs(30);
const C4_RE_TOL: f64 = 1e-8;
const C5_THRESHOLD: f64 = 1.36e-4;
const C5_REL_BAND: f64 = 0.20;
const C5_MAX_RUNTIME: Duration = Duration::from_secs(5);
const C7_NOMINAL_RATIO: (f64, f64) = (0.95, 1.05);
const C7_DEVIATED_RATIO: (f64, f64) = (0.9, 1.1);
const C7_MAX_RUNTIME: Duration = Duration::from_secs(5);
const C8_RESIDUAL_TOL: f64 = 1e-12;
const C8_HEADING_TOL: f64 = 1e-8;
const C9_EIGEN_TOL: f64 = 1e-8;
const C9_MIN_ORDER: f64 = 3.7;
const C9_MIN_RICHARDSON: f64 = 3.5;
const C10_FACTOR: f64 = 3.0;
const C10_HOLD: f64 = 0.3;

const SPEEDS: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 3.0, 5.0];
const MM: f64 = 1e-3;

fn params() -> VehicleParams {
    VehicleParams::default()
}

fn cfg(law: Law) -> LinearisationConfig {
    LinearisationConfig::new(law, DEFAULT_P, params().l_f).unwrap()
}

fn report(id: u32, pass: bool, detail: String) {
    println!(
        "criterion {id:>2}: {}  {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn envelope_sample(rng: &mut ChaCha8Rng) -> (VehicleState, PointVelocityCommand) {
    let s = VehicleState {
        psi: rng.random_range(-PI..PI),
        r: rng.random_range(-3.0..3.0),
        beta: rng.random_range(-40.0 * DEG..=40.0 * DEG),
        delta: rng.random_range(-50.0 * DEG..=50.0 * DEG),
        x_g: rng.random_range(-10.0..10.0),
        y_g: rng.random_range(-10.0..10.0),
    };
    let speed = rng.random_range(0.05..2.0);
    let heading = rng.random_range(-PI..PI);
    (
        s,
        PointVelocityCommand::new(speed * f64::cos(heading), speed * f64::sin(heading)),
    )
}

fn rate(c: ControlCommand) -> ModelInput {
    ModelInput::new(c.speed(), c.steering())
}

#[test]
fn criterion_01_exact_linearisation() {
    let p = params();
    let c = cfg(Law::FrontAxleOffset);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut worst, mut singular, mut slow) = (0.0f64, 0usize, 0usize);
    for _ in 0..C1_SAMPLES {
        let (s, cmd) = envelope_sample(&mut rng);
        let input = match linearising_law_nominal(&s, &cmd, &c, &p) {
            Ok(u) => rate(u),
            Err(Error::Singularity { .. }) => {
                singular += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        match point_p_velocity(&s, &input, &c, &p) {
            Ok(v) => {
                let err = (v.x - cmd.v_px).hypot(v.y - cmd.v_py) / cmd.v_px.hypot(cmd.v_py);
                worst = worst.max(err);
            }
            // the command asked for a vanishing centre-of-mass speed
            Err(Error::SpeedBelowFloor { .. }) => slow += 1,
            Err(e) => panic!("{e}"),
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        worst <= C1_REL_TOL && elapsed < C1_MAX_RUNTIME,
        format!(
            "max relative error {worst:.2e} (tol {C1_REL_TOL:.0e}) over {} samples, {singular} singular (|beta - delta| within 5 deg of 90 deg) and {slow} below the speed floor excluded, {:.0?}",
            C1_SAMPLES - singular - slow,
            elapsed
        ),
    );
}

#[test]
fn criterion_02_deviation_identity() {
    let p = params();
    let truth = cfg(Law::FrontAxleOffset);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let (mut worst, mut singular) = (0.0f64, 0usize);
    for _ in 0..C1_SAMPLES {
        let (s, cmd) = envelope_sample(&mut rng);
        let dl = rng.random_range(-p.l_f..=p.l_r);
        let est = truth.with_l_f_est(p.l_f + dl).unwrap();
        let input = match linearising_law_uncertain(&s, &cmd, &est) {
            Ok(u) => rate(u),
            Err(Error::Singularity { .. }) => {
                singular += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        let Ok(v) = point_p_velocity(&s, &input, &truth, &p) else {
            continue;
        };
        let residual = (v.x - cmd.v_px - dl * s.psi.sin() * s.r).abs()
            + (v.y - cmd.v_py + dl * s.psi.cos() * s.r).abs();
        worst = worst.max(residual);
    }
    let elapsed = start.elapsed();
    report(
        2,
        worst <= C2_RESIDUAL_TOL && elapsed < C2_MAX_RUNTIME,
        format!(
            "max residual {worst:.2e} (tol {C2_RESIDUAL_TOL:.0e}), {singular} singular samples excluded, {:.0?}",
            elapsed
        ),
    );
}

#[test]
fn criterion_03_structural_stability() {
    let p = params();
    let grid = SweepGrid::new(SPEEDS.to_vec(), -p.l_f, p.l_r, MM).unwrap();
    let options = SweepOptions {
        parallel: false,
        ..SweepOptions::default()
    };
    let start = Instant::now();
    let map = stability_sweep(&grid, &p, &cfg(Law::FrontAxleOffset), options).unwrap();
    let elapsed = start.elapsed();
    let valid = map.cells.len() - map.count(Verdict::Invalid);
    let stable = map.count(Verdict::Stable);
    let worst = map
        .cells
        .iter()
        .filter_map(|c| c.max_re)
        .fold(f64::NEG_INFINITY, f64::max);
    report(
        3,
        valid > 0 && stable == valid && elapsed < C3_MAX_RUNTIME,
        format!(
            "{stable}/{valid} valid cells stable ({} invalid), largest max Re {worst:.4}, single-threaded {:.1?}",
            map.count(Verdict::Invalid),
            elapsed
        ),
    );
}

#[test]
fn criterion_04_negative_deviation_hopf() {
    let p = params();
    let grid = SweepGrid::new(SPEEDS.to_vec(), -0.70, -p.l_f, MM).unwrap();
    let map = stability_sweep(
        &grid,
        &p,
        &cfg(Law::FrontAxleOffset),
        SweepOptions::default(),
    )
    .unwrap();
    let unstable = map.count(Verdict::Unstable);
    let crossings: Vec<_> = map
        .hopf_points
        .iter()
        .filter(|h| h.max_re.abs() <= C4_RE_TOL && h.is_simple() && h.dl_star < -p.l_f)
        .collect();
    let listed: Vec<String> = map
        .hopf_points
        .iter()
        .map(|h| format!("v={}: dl*={:.4} w={:.3}", h.v_bar, h.dl_star, h.frequency))
        .collect();
    report(
        4,
        unstable > 0 && !crossings.is_empty(),
        format!(
            "{unstable} unstable cells below -l_f; complex crossings [{}]",
            listed.join(", ")
        ),
    );
}

#[test]
fn criterion_05_velocity_direction_threshold() {
    let p = params();
    let grid = SweepGrid::new(vec![0.1], -p.l_f, p.l_r, MM).unwrap();
    let start = Instant::now();
    let map = stability_sweep(
        &grid,
        &p,
        &cfg(Law::VelocityDirection),
        SweepOptions::default(),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let Some(h) = map.hopf_points.first() else {
        report(
            5,
            false,
            format!("no crossing found: {:?}", map.other_boundaries),
        );
        return;
    };
    let rel = (h.dl_star - C5_THRESHOLD).abs() / C5_THRESHOLD;
    report(
        5,
        rel <= C5_REL_BAND && elapsed < C5_MAX_RUNTIME,
        format!(
            "dl* = {:.4e} m (target {C5_THRESHOLD:.2e} +/- {:.0}%, off by {:.1}%), crossing frequency {:.4} rad/s, {:.0?}",
            h.dl_star,
            C5_REL_BAND * 100.0,
            rel * 100.0,
            h.frequency,
            elapsed
        ),
    );
}

#[test]
fn criterion_06_velocity_direction_instability_region() {
    let p = params();
    let grid = SweepGrid::new(SPEEDS.to_vec(), -p.l_f, p.l_r, MM).unwrap();
    let map = stability_sweep(
        &grid,
        &p,
        &cfg(Law::VelocityDirection),
        SweepOptions::default(),
    )
    .unwrap();
    let fraction = |v: f64| {
        let iv = SPEEDS.iter().position(|&s| s == v).unwrap();
        map.unstable_fraction(iv, -p.l_f, p.l_r)
    };
    let positive_unstable = map
        .cells
        .iter()
        .filter(|c| c.v_bar <= 0.5 && c.dl > 0.0 && c.verdict == Verdict::Unstable)
        .count();
    let fractions: Vec<String> = SPEEDS
        .iter()
        .map(|&v| format!("{v}:{:.3}", fraction(v)))
        .collect();
    report(
        6,
        positive_unstable > 0 && fraction(0.1) > fraction(2.0),
        format!(
            "{positive_unstable} unstable cells at dl > 0 for v <= 0.5; unstable fraction by speed [{}]",
            fractions.join(" ")
        ),
    );
}

fn circle_summary(dl: f64, feedforward: bool) -> (fblin_core::control::TrackingSummary, Duration) {
    let p = params();
    let reference = ReferenceTrajectory::circle(1.0, 0.5);
    let c = LinearisationConfig::with_deviation(Law::FrontAxleOffset, DEFAULT_P, &p, dl).unwrap();
    let s0 = circle_start(&reference, 0.3, &p, &c).unwrap();
    let mut options = TrackingOptions::new(Integrator::new(0.01, 60.0).unwrap());
    options.feedforward = feedforward;
    let start = Instant::now();
    let log = run_tracking(
        &reference,
        &TrackingGains::default(),
        &DropoutModel::Disabled,
        s0,
        &p,
        &c,
        &options,
    )
    .unwrap();
    let elapsed = start.elapsed();
    (summarize_circle(&log, &reference).unwrap(), elapsed)
}

#[test]
fn criterion_07_circle_tracking() {
    let inside = |r: f64, (lo, hi): (f64, f64)| r >= lo && r <= hi;
    let (nominal, elapsed) = circle_summary(0.0, false);
    let (deviated, _) = circle_summary(params().l_r, false);
    let (ff, _) = circle_summary(0.0, true);
    let (ff_dev, _) = circle_summary(params().l_r, true);
    let pass = inside(nominal.amplitude_ratio_x, C7_NOMINAL_RATIO)
        && inside(nominal.amplitude_ratio_y, C7_NOMINAL_RATIO)
        && nominal.phase_lag_x.is_finite()
        && nominal.phase_lag_y.is_finite()
        && inside(deviated.amplitude_ratio_x, C7_DEVIATED_RATIO)
        && inside(deviated.amplitude_ratio_y, C7_DEVIATED_RATIO)
        && elapsed < C7_MAX_RUNTIME;
    report(
        7,
        pass,
        format!(
            "dl=0: ratio x {:.4} y {:.4}, lag {:.4} rad; dl=0.1232: ratio x {:.4} y {:.4}; {:.0?} per 60 s run. \
             Proportional loop bound K/sqrt(K^2+w^2) = {:.4}. With reference feedforward: {:.4} and {:.4}",
            nominal.amplitude_ratio_x,
            nominal.amplitude_ratio_y,
            nominal.phase_lag_x,
            deviated.amplitude_ratio_x,
            deviated.amplitude_ratio_y,
            elapsed,
            1.0 / 1.25f64.sqrt(),
            ff.amplitude_ratio_x,
            ff_dev.amplitude_ratio_x,
        ),
    );
}

#[test]
fn criterion_08_equilibrium_and_heading_invariance() {
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut residual, mut shift) = (0.0f64, 0.0f64);
    let mut worst = String::new();
    for _ in 0..100 {
        let v = rng.random_range(0.1..5.0);
        let psi_bar = rng.random_range(-PI..PI);
        let dl = rng.random_range(-p.l_f..=p.l_r);
        for law in [Law::FrontAxleOffset, Law::VelocityDirection] {
            let eq = EquilibriumSpec::new(v, psi_bar).unwrap();
            let d = closed_loop_field(&eq.point(law), &eq, dl, &p, &cfg(law)).unwrap();
            residual = residual.max(d.max_abs());
            let spectra: Vec<_> = [0.0, FRAC_PI_4, FRAC_PI_3]
                .iter()
                .map(|&psi| {
                    spectrum(&EquilibriumSpec::new(v, psi).unwrap(), dl, &p, &cfg(law)).unwrap()
                })
                .collect();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let gap = spectrum_distance(&spectra[i], &spectra[j]);
                if gap > shift {
                    shift = gap;
                    let pair = spectra[i]
                        .iter()
                        .map(|z| z.im.abs())
                        .filter(|&im| im > 0.0)
                        .fold(f64::INFINITY, f64::min);
                    worst = format!(
                        "{law} v={v:.3} dl={dl:.4}, smallest |Im| of a complex pair {pair:.3}"
                    );
                }
            }
        }
    }
    report(
        8,
        residual <= C8_RESIDUAL_TOL && shift <= C8_HEADING_TOL,
        format!(
            "max equilibrium residual {residual:.2e} (tol {C8_RESIDUAL_TOL:.0e}), max eigenvalue shift over headings {shift:.2e} (tol {C8_HEADING_TOL:.0e}) at {worst}, 100 triples x 2 laws"
        ),
    );
}

fn rk4_order() -> f64 {
    let end = |dt: f64| {
        let s0 = VehicleState {
            psi: 0.2,
            r: 0.3,
            beta: 0.05,
            delta: 0.1,
            ..Default::default()
        };
        Integrator::new(dt, 1.0)
            .unwrap()
            .with_substeps(Substeps::Fixed(1))
            .run(s0, &params(), |_, _| Ok(ModelInput::new(2.0, 0.2)))
            .unwrap()
            .last()
            .unwrap()
            .to_array()
    };
    let dt = 0.004;
    let reference = end(dt / 8.0);
    let err = |a: [f64; 6]| {
        a.iter()
            .zip(&reference)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    (err(end(dt)) / err(end(dt / 2.0))).log2()
}

fn richardson_ratio() -> f64 {
    let p = params();
    let eq = EquilibriumSpec::new(1.0, DEFAULT_PSI_BAR).unwrap();
    let c = cfg(Law::FrontAxleOffset);
    let h = 4e-3;
    let j = |step: f64| jacobian_with_step(&eq, -0.05, &p, &c, step).unwrap();
    let (a, b, d) = (j(h), j(h / 2.0), j(h / 4.0));
    (&a - &b).abs().max() / (&b - &d).abs().max()
}

#[test]
fn criterion_09_numerical_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut gap = 0.0f64;
    for _ in 0..1000 {
        let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        gap = gap.max(spectrum_distance(
            &eigenvalues(&m).unwrap(),
            &qr_eigenvalues(&m).unwrap(),
        ));
    }
    let order = rk4_order();
    let ratio = richardson_ratio();
    report(
        9,
        gap <= C9_EIGEN_TOL && order >= C9_MIN_ORDER && ratio >= C9_MIN_RICHARDSON,
        format!(
            "eigen routes max gap {gap:.2e} on 1000 random 4x4 (tol {C9_EIGEN_TOL:.0e}); RK4 observed order {order:.3} (min {C9_MIN_ORDER}); \
             Jacobian error ratio on halving h {ratio:.3} (min {C9_MIN_RICHARDSON})"
        ),
    );
}

#[test]
fn criterion_10_dropout_robustness() {
    let p = params();
    let schedule = default_step_schedule();
    let horizon: f64 = schedule.iter().map(|s| s.duration).sum();
    let options = TrackingOptions::new(Integrator::new(0.01, horizon).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let draws = 50;
    let mut lines = Vec::new();
    let mut all = true;
    for dl in [0.0, p.l_r] {
        let c =
            LinearisationConfig::with_deviation(Law::FrontAxleOffset, DEFAULT_P, &p, dl).unwrap();
        let run = |d: &DropoutModel| {
            run_open_loop(&schedule, d, VehicleState::default(), &p, &c, &options).unwrap()
        };
        let clean = run(&DropoutModel::Disabled).final_deviation();
        let (mut held, mut worst) = (0usize, 0.0f64);
        for _ in 0..draws {
            // three non-overlapping holds, one in each third of the run
            let third = horizon / 3.0;
            let episodes = (0..3)
                .map(|k| Episode {
                    start: k as f64 * third + rng.random_range(0.0..third - C10_HOLD),
                    duration: C10_HOLD,
                })
                .collect();
            let ratio = run(&DropoutModel::Episodes(episodes)).final_deviation() / clean;
            worst = worst.max(ratio);
            if ratio <= C10_FACTOR {
                held += 1;
            }
        }
        all &= held == draws;
        lines.push(format!(
            "dl={dl}: clean final deviation {clean:.2e} m, {held}/{draws} placements within {C10_FACTOR}x, worst {worst:.2}x"
        ));
    }
    report(10, all, lines.join("; "));
}
