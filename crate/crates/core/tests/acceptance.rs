//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Analytic results are checked against routes that do not share their
//! formulas: characteristic roots located numerically, linear gains taken by
//! finite differences of the model right-hand sides, and direct simulation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rcpdyn::bifurcation::{measure_point, onset_of_cycle, phase_portrait, run_sweep, SweepConfig};
use rcpdyn::types::{queue_feedback_utilization, Trajectory};
use rcpdyn::{
    equilibrium_model_b, hopf_transversality, integrate, map_beta_to_b, rhs_model_b, rightmost_real_part,
    rightmost_roots, stability_model_a, stability_model_b, CharEq, Classification, ConstantHistory, DdeProblem,
    FnSystem, ModelAParams, ModelBParams, ModelSpec, SearchBox, Sign, SmoothHistory, Variant,
};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

/// Sign change of `f` on `[lo, hi]` by bisection; `f(lo) < 0 < f(hi)` or
/// the reverse.
fn bisect_sign(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Upper edge of `{a : rightmost Re < 0}` on a scan of `[lo, hi]`, refined
/// by bisection. `None` when no scanned gain is stable.
fn oracle_upper_edge(lo: f64, hi: f64, steps: usize, growth: impl Fn(f64) -> f64) -> Option<f64> {
    let grid: Vec<f64> = (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&a| growth(a)).collect();
    let last_stable = values.iter().rposition(|&v| v < 0.0)?;
    if last_stable + 1 == grid.len() {
        return None;
    }
    Some(bisect_sign(grid[last_stable], grid[last_stable + 1], 1e-7, growth))
}

fn model_a(a: f64, beta: f64, switched: bool) -> ModelSpec<f64> {
    let variant = if switched { Variant::ASwitched } else { Variant::ANonSwitched };
    ModelSpec::model_a(variant, ModelAParams::new(a, beta, 100_000.0, 0.1, 100, switched).unwrap()).unwrap()
}

fn no_queue(a: f64, gamma: f64) -> ModelSpec<f64> {
    ModelSpec::B(ModelBParams::without_queue(a, gamma, 10.0, 1.0).unwrap())
}

fn with_queue(a: f64, b: f64) -> ModelSpec<f64> {
    ModelSpec::B(ModelBParams::with_queue(a, b, 10.0, 1.0).unwrap())
}

/// `kappa tau` of the small-buffer model from a central difference of the
/// right-hand side in the delayed rate.
fn numerical_kappa_tau(p: &ModelBParams<f64>) -> f64 {
    let r = equilibrium_model_b(p).rate_star;
    let h = 1e-6 * (p.capacity() - r).min(r);
    let d = (rhs_model_b(r, r + h, p).unwrap() - rhs_model_b(r, r - h, p).unwrap()) / (2.0 * h);
    -d * p.rtt()
}

fn criterion_1() -> Outcome {
    let growth = |a: f64| rightmost_real_part(&CharEq::model_a_no_queue(a).unwrap()).unwrap();
    let crossing = bisect_sign(1.4, 1.7, 1e-7, growth);
    let pt = |a| measure_point(&model_a(a, 0.0, false), &SweepConfig::new(model_a(a, 0.0, false), 1.0, 2.0, 2)).unwrap();
    let (calm, cycle) = (pt(1.4), pt(1.7));
    let ok = (crossing - FRAC_PI_2).abs() <= 1e-4
        && calm.classified == Classification::Converged
        && cycle.classified == Classification::LimitCycle;
    outcome(
        ok,
        format!(
            "root crossing at a = {crossing:.7} (pi/2 = {FRAC_PI_2:.7}); a = 1.4 {}, a = 1.7 {}",
            calm.classified.name(),
            cycle.classified.name()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [0.1, 0.3, 1.0, 3.0] {
        let analytic = stability_model_a(1.0, beta).unwrap().critical_a;
        let growth = |a: f64| rightmost_real_part(&CharEq::model_a_full(a, beta).unwrap()).unwrap();
        let oracle = oracle_upper_edge(0.02, 2.0, 99, growth);
        let matched = match (analytic, oracle) {
            (Some(x), Some(y)) => (x - y).abs() <= 1e-3,
            (None, None) => true,
            _ => false,
        };
        ok &= matched;
        let show = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:.5}"));
        parts.push(format!("beta {beta}: {} vs {}", show(analytic), show(oracle)));
    }
    let anchor = rightmost_real_part(&CharEq::model_a_full(0.5, 1.0).unwrap()).unwrap();
    ok &= anchor > 0.0;
    parts.push(format!("Re at (0.5, 1) = {anchor:.6}"));
    outcome(ok, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let analytic = stability_model_a(1.0, 0.3).unwrap().critical_a.unwrap();
    let mut cfg = SweepConfig::new(model_a(1.0, 0.3, false), 0.8, 2.0, 25);
    let sweep = run_sweep(&cfg).unwrap();
    let below_ok = sweep
        .iter()
        .filter(|p| p.param_value < analytic - 0.05)
        .all(|p| p.classified == Classification::Converged);
    let above_ok = sweep
        .iter()
        .filter(|p| p.param_value > analytic + 0.05)
        .all(|p| p.classified == Classification::LimitCycle);
    // Converged samples count as zero amplitude.
    let amp = |p: &rcpdyn::Point| match p.classified {
        Classification::LimitCycle => p.amplitude,
        _ => 0.0,
    };
    let monotone = sweep.windows(2).all(|w| amp(&w[1]) >= amp(&w[0]));
    let onset = onset_of_cycle(&cfg).unwrap();

    let switched = SweepConfig::new(model_a(1.0, 0.3, true), 0.8, 3.3, 26);
    let sw = run_sweep(&switched).unwrap();
    let transitions = sw.first().map(|p| p.classified) == Some(Classification::Converged)
        && sw.last().map(|p| p.classified) == Some(Classification::LimitCycle);
    let sw_onset = sw
        .iter()
        .find(|p| p.classified == Classification::LimitCycle)
        .map(|p| p.param_value);

    cfg.t_end = 800.0 * 0.1;
    let closed_ns = phase_portrait(&model_a(1.0, 0.3, false), 1.9, &cfg)
        .map(|p| p.is_closed_orbit(0.05))
        .unwrap_or(false);
    let closed_sw = phase_portrait(&model_a(1.0, 0.3, true), 3.3, &switched)
        .map(|p| p.is_closed_orbit(0.05))
        .unwrap_or(false);

    let ok = below_ok && above_ok && monotone && (onset - analytic).abs() <= 0.05 && transitions && closed_ns && closed_sw;
    outcome(
        ok,
        format!(
            "onset {onset:.4} vs {analytic:.4}; split {below_ok}/{above_ok}; monotone {monotone}; \
             switched transitions {transitions} (first cycle at {sw_onset:?}); closed orbits {closed_ns}/{closed_sw}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for b in [0.02, 0.18, 1.0, 10.0] {
        let analytic = stability_model_b(1.0, b).unwrap().critical_a.unwrap();
        let unit = numerical_kappa_tau(&ModelBParams::with_queue(1.0, b, 10.0, 1.0).unwrap());
        let growth = |a: f64| rightmost_real_part(&CharEq::scalar_delay(a * unit).unwrap()).unwrap();
        let oracle = bisect_sign(0.1, 3.0, 1e-7, growth);
        ok &= (analytic - oracle).abs() <= 1e-3;
        parts.push(format!("b {b}: {analytic:.5} vs {oracle:.5}"));
    }
    let c = |b: f64| stability_model_b(1.0, b).unwrap().critical_a.unwrap();
    let (tiny, zero, huge) = (c(1e-9), c(0.0), c(1e6));
    ok &= (tiny - FRAC_PI_4).abs() <= 1e-4 && zero == FRAC_PI_2 && (huge - FRAC_PI_2).abs() <= 1e-3;
    parts.push(format!("b 1e-9: {tiny:.6}; b 0: {zero}; b 1e6: {huge:.6}"));
    outcome(ok, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for gamma in [0.9, 0.7] {
        let base = SweepConfig::new(no_queue(1.0, gamma), 1.0, 2.0, 2);
        let class = |a: f64| measure_point(&no_queue(a, gamma), &base).unwrap().classified;
        let split = [1.0, 1.4].iter().all(|&a| class(a) == Classification::Converged)
            && [1.6, 2.0].iter().all(|&a| class(a) == Classification::LimitCycle);
        let mut cfg = SweepConfig::new(no_queue(1.0, gamma), 1.0, 2.0, 11);
        cfg.t_end = 1000.0;
        cfg.dt = 0.01;
        let onset = onset_of_cycle(&cfg).unwrap();
        ok &= split && (onset - FRAC_PI_2).abs() <= 0.05;
        parts.push(format!("gamma {gamma}: fixture split {split}, onset {onset:.4}"));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let mut signs = Vec::new();
    for k in 0..20 {
        let b = 10f64.powf(-3.0 + 6.0 * k as f64 / 19.0);
        let a = stability_model_b(1.0, b).unwrap().critical_a.unwrap();
        signs.push(hopf_transversality(a, b, 1.0).unwrap());
    }
    let transversal = signs.iter().all(|&s| s == Sign::Positive);

    // Amplitude branches near onset, for the fixture without queue feedback
    // and for queue feedback at b = 1. At small b the queue-feedback model
    // also carries a large coexisting orbit below onset.
    let branches: [(&str, f64, fn(f64) -> ModelSpec<f64>); 2] = [
        ("no queue", FRAC_PI_2, |a| no_queue(a, 0.9)),
        ("b = 1", stability_model_b(1.0, 1.0).unwrap().critical_a.unwrap(), |a| with_queue(a, 1.0)),
    ];
    let mut ok = transversal;
    let mut parts = vec![format!(
        "transversality {}/20 positive",
        signs.iter().filter(|&&s| s == Sign::Positive).count()
    )];
    for (label, onset, spec_at) in branches {
        let measure = |offset: f64| {
            let spec = spec_at(onset + offset);
            let mut cfg = SweepConfig::new(spec, 1.0, 2.0, 2);
            cfg.t_end = 6000.0;
            cfg.dt = 0.01;
            cfg.transient_fraction = 0.75;
            measure_point(&spec, &cfg).unwrap()
        };
        let pts: Vec<_> = [0.01, 0.05, 0.1].iter().map(|&d| measure(d)).collect();
        let amps: Vec<f64> = pts.iter().map(|p| p.amplitude).collect();
        let cycling = pts.iter().all(|p| p.classified == Classification::LimitCycle);
        let increasing = amps[0] > 0.0 && amps[0] < amps[1] && amps[1] < amps[2];
        let shrinking = amps[0] / amps[2] < 0.5;
        let period = measure(0.02).period_estimate;
        let period_ok = period.is_some_and(|p| (p - 4.0).abs() <= 0.4);
        ok &= cycling && increasing && shrinking && period_ok;
        parts.push(format!(
            "{label}: amplitudes {:.3} {:.3} {:.3}, ratio {:.3}, period {:.3}",
            amps[0],
            amps[1],
            amps[2],
            amps[0] / amps[2],
            period.unwrap_or(f64::NAN)
        ));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let steps = 580;
    let (lo, hi) = (0.05, 1.5);
    let (best_a, best_re) = (0..=steps)
        .map(|k| {
            let a = lo + (hi - lo) * k as f64 / steps as f64;
            (a, rightmost_real_part(&CharEq::scalar_delay(a).unwrap()).unwrap())
        })
        .fold((f64::NAN, f64::INFINITY), |best, (a, re)| if re < best.1 { (a, re) } else { best });
    let target = (-1.0f64).exp();
    let res = rightmost_roots(&CharEq::scalar_delay(target).unwrap(), 2, &SearchBox::default()).unwrap();
    let double = res.roots.len() == 2
        && res
            .roots
            .iter()
            .all(|r| (r.value.re + 1.0).abs() < 1e-6 && r.value.im.abs() < 1e-6 && r.multiplicity == 2);
    let ok = (best_a - target).abs() <= 0.01 && double;
    outcome(
        ok,
        format!("argmin a = {best_a:.4} (1/e = {target:.4}, Re = {best_re:.5}); double root flagged {double}"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = 10f64.powf(rng.gen_range(-1.0..6.0));
        let b = 10f64.powf(rng.gen_range(-4.0..2.0));
        let p = ModelBParams::with_queue(1.0, b, c, 1.0).unwrap();
        let r = equilibrium_model_b(&p).rate_star;
        let residual = (c - r - b * c * p.mean_queue(r).unwrap()).abs() / c;
        worst = worst.max(residual);
    }
    let mut util_ok = true;
    for sigma in [0.5, 1.0, 1.5] {
        for k in 1..=40 {
            let b = 0.2 * k as f64 / 40.0;
            let u = queue_feedback_utilization(b, sigma);
            util_ok &= (u - (1.0 - sigma * (b / 2.0).sqrt())).abs() <= sigma * sigma * b;
        }
    }
    let mapped: f64 = map_beta_to_b(0.5, 1.0, 1.0, 100.0).unwrap();
    let ok = worst <= 1e-9 && util_ok && (mapped - 0.02).abs() <= 1e-15;
    outcome(
        ok,
        format!("worst relative residual {worst:.2e}; utilization expansion {util_ok}; beta -> b gives {mapped}"),
    )
}

fn criterion_9() -> Outcome {
    let max_error = |dt: f64| {
        let system = FnSystem::new(1, |_t: f64, _x: &[f64], d: &[f64], out: &mut [f64]| out[0] = -FRAC_PI_2 * d[0]);
        let history = SmoothHistory {
            value: |t: f64, out: &mut [f64]| out[0] = (FRAC_PI_2 * t).cos(),
            derivative: |t: f64, out: &mut [f64]| out[0] = -FRAC_PI_2 * (FRAC_PI_2 * t).sin(),
        };
        let traj = integrate(&DdeProblem::new(system, 1.0, history, 10.0).with_dt(dt)).unwrap();
        (0..traj.len())
            .map(|k| (traj.state(k)[0] - (FRAC_PI_2 * traj.time(k)).cos()).abs())
            .fold(0.0, f64::max)
    };
    let errors: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&dt| max_error(dt)).collect();
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    let order_ok = ratios.iter().all(|r| (12.0..=20.0).contains(r));

    let specs = [
        model_a(1.2, 0.3, false),
        model_a(1.2, 0.3, true),
        with_queue(0.8, 0.18),
        no_queue(1.2, 0.9),
    ];
    let run = |spec: &ModelSpec<f64>| -> Trajectory<f64> {
        let history = ConstantHistory(spec.equilibrium_state());
        integrate(&spec.problem(history, 100.0 * spec.rtt(), spec.rtt() / 100.0)).unwrap()
    };
    let mut drift = 0.0f64;
    for spec in &specs {
        let eq = spec.equilibrium_state();
        let traj = run(spec);
        for state in traj.samples() {
            for (x, e) in state.iter().zip(&eq) {
                drift = drift.max((x - e).abs() / e.abs().max(1.0));
            }
        }
    }
    let perturbed = |spec: &ModelSpec<f64>| {
        integrate(&spec.problem(spec.perturbed_history(0.05), 200.0 * spec.rtt(), spec.rtt() / 100.0)).unwrap()
    };
    let identical = specs.iter().all(|s| perturbed(s) == perturbed(s));

    let ok = order_ok && drift <= 1e-9 && identical;
    outcome(
        ok,
        format!(
            "errors {:.2e} {:.2e} {:.2e}, ratios {:.2} {:.2}; equilibrium drift {drift:.1e}; bit-identical {identical}",
            errors[0], errors[1], errors[2], ratios[0], ratios[1]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 9] = [
        (1, "rate/queue model without queue gain: boundary at pi/2", 10, criterion_1),
        (2, "rate/queue model: analytic boundary against root oracle", 30, criterion_2),
        (3, "rate/queue model gain sweep at beta = 0.3", 60, criterion_3),
        (4, "small-buffer model boundaries", 10, criterion_4),
        (5, "small-buffer model without queue feedback: onset at pi/2", 30, criterion_5),
        (6, "Hopf transversality, amplitude growth and period", 60, criterion_6),
        (7, "optimal gain 1/e and the double root", 10, criterion_7),
        (8, "equilibrium and utilization algebra", 1, criterion_8),
        (9, "DDE engine order, fixed points and determinism", 10, criterion_9),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let within = elapsed <= Duration::from_secs(budget);
        let pass = result.ok && within;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id} {}: {name} [{:.2} s of {budget} s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            result.detail
        );
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
