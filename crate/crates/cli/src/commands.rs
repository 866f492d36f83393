use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use rcpdyn::bifurcation::{phase_portrait, run_sweep, PortraitError, SweepConfig};
use rcpdyn::types::Trajectory;
use rcpdyn::{
    integrate, rightmost_roots, stability_chart, CharEq, ChartModel, Classification, IntegrateError, ModelAParams,
    ModelBParams, ModelSpec, ParamGrid, SearchBox, Variant,
};

use crate::args::{
    config_part, keys_of, read_config, BifurcateArgs, ChartArgs, ChartKind, EquationKind, Format, ModelArgs,
    ModelKind, RootsArgs, SimulateArgs,
};
use crate::output::{num, opt_num, resolved_config, sibling, write_csv, write_json, Manifest, Outcome};
use crate::Failure;

fn require<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("{flag} is required")))
}

fn forbid<T>(value: &Option<T>, flag: &str, model: &str) -> Result<(), Failure> {
    match value {
        Some(_) => Err(Failure::Usage(format!("{flag} does not apply to {model}"))),
        None => Ok(()),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Builds the model at gain `a`, checking that only its own flags are set.
fn build_model(m: &ModelArgs, a: f64) -> Result<ModelSpec<f64>, Failure> {
    let kind = require(m.model, "--model")?;
    let capacity = require(m.capacity, "--capacity")?;
    let rtt = require(m.rtt, "--rtt")?;
    let spec = match kind {
        ModelKind::A | ModelKind::ASwitched => {
            let name = if kind == ModelKind::A { "model a" } else { "model a-switched" };
            forbid(&m.b, "--b", name)?;
            forbid(&m.gamma, "--gamma", name)?;
            forbid(&m.sigma, "--sigma", name)?;
            let switched = kind == ModelKind::ASwitched;
            let variant = if switched { Variant::ASwitched } else { Variant::ANonSwitched };
            let p = ModelAParams::new(a, m.beta.unwrap_or(0.0), capacity, rtt, m.flows.unwrap_or(1), switched)?;
            ModelSpec::model_a(variant, p)?
        }
        ModelKind::B => {
            forbid(&m.beta, "--beta", "model b")?;
            forbid(&m.gamma, "--gamma", "model b")?;
            forbid(&m.flows, "--flows", "model b")?;
            let b = require(m.b, "--b")?;
            let p = ModelBParams::new(a, b, capacity, rtt, m.sigma.unwrap_or(1.0), 1.0)?;
            ModelSpec::model_b(Variant::BQueue, p)?
        }
        ModelKind::BNoqueue => {
            forbid(&m.beta, "--beta", "model b-noqueue")?;
            forbid(&m.b, "--b", "model b-noqueue")?;
            forbid(&m.sigma, "--sigma", "model b-noqueue")?;
            forbid(&m.flows, "--flows", "model b-noqueue")?;
            let p = ModelBParams::without_queue(a, m.gamma.unwrap_or(1.0), capacity, rtt)?;
            ModelSpec::model_b(Variant::BNoQueue, p)?
        }
    };
    Ok(spec)
}

fn positive(value: f64, flag: &str) -> Result<f64, Failure> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Failure::Usage(format!("{flag} must be positive, got {value}")))
    }
}

fn trajectory_columns(spec: &ModelSpec<f64>) -> [&'static str; 3] {
    match spec {
        ModelSpec::A(_) => ["t", "rate", "queue"],
        ModelSpec::B(_) => ["t", "rate", "rate_delayed"],
    }
}

fn trajectory_rows(spec: &ModelSpec<f64>, traj: &Trajectory<f64>) -> Vec<[f64; 3]> {
    (0..traj.len())
        .map(|k| {
            let s = traj.state(k);
            let second = match spec {
                ModelSpec::A(_) => s[1],
                ModelSpec::B(_) => traj.delayed_state(k)[0],
            };
            [traj.time(k), s[0], second]
        })
        .collect()
}

pub fn simulate(mut model: ModelArgs, mut run: SimulateArgs, config: Option<&Path>) -> Result<(), Failure> {
    if let Some(path) = config {
        let map = read_config(path, &[keys_of::<ModelArgs>(), keys_of::<SimulateArgs>()].concat())?;
        model.merge(config_part(&map, path)?);
        run.merge(config_part(&map, path)?);
    }
    let spec = build_model(&model, require(run.a, "--a")?)?;
    let t_end = positive(require(run.t_end, "--t-end")?, "--t-end")?;
    let dt = positive(run.dt.unwrap_or(spec.rtt() / 200.0), "--dt")?;
    let perturbation = run.perturbation.unwrap_or(0.01);
    if !(0.0..1.0).contains(&perturbation) {
        return Err(Failure::Usage(format!("--perturbation must be in [0, 1), got {perturbation}")));
    }
    let out = require(run.out.clone(), "--out")?;
    let format = run.format.unwrap_or_default();

    let problem = spec.problem(spec.perturbed_history(perturbation), t_end, dt);
    let (traj, outcome, failure) = match integrate(&problem) {
        Ok(traj) => (traj, Outcome::ok(), None),
        Err(IntegrateError::Diverged { time, partial }) => (
            partial,
            Outcome {
                status: "diverged",
                failure_time: Some(time),
                detail: None,
            },
            Some(Failure::Numerical(format!("integration diverged at t = {time}; partial trajectory written"))),
        ),
        Err(IntegrateError::Config(msg)) => return Err(Failure::Usage(msg)),
    };

    let columns = trajectory_columns(&spec);
    let rows = trajectory_rows(&spec, &traj);
    match format {
        Format::Csv => write_csv(&out, &columns, rows.iter().map(|r| r.iter().map(|&x| num(x)).collect()))?,
        Format::Json => write_json(&out, &json!({ "columns": columns, "rows": rows }))?,
    }

    let mut resolved = resolved_config(&[to_value(&model), to_value(&run)]);
    resolved["dt"] = json!(dt);
    resolved["perturbation"] = json!(perturbation);
    Manifest::new("simulate", resolved, &[out.clone()], outcome).write(&out)?;
    failure.map_or(Ok(()), Err)
}

pub fn chart(mut run: ChartArgs, config: Option<&Path>) -> Result<(), Failure> {
    if let Some(path) = config {
        let map = read_config(path, &keys_of::<ChartArgs>())?;
        run.merge(config_part(&map, path)?);
    }
    let model = match require(run.model, "--model")? {
        ChartKind::A => ChartModel::A,
        ChartKind::B => ChartModel::B,
    };
    let a = require(run.a_range, "--a-range")?;
    let second = require(run.second_range, "--second-range")?;
    let out = require(run.out.clone(), "--out")?;

    let grid = ParamGrid {
        a: (a.lo, a.hi, a.n),
        second: (second.lo, second.hi, second.n),
    };
    let chart = stability_chart(model, &grid)?;
    let second_name = model.second_name();

    let mut rows = Vec::with_capacity(chart.cells.len());
    for (row, &s) in chart.second_values.iter().enumerate() {
        for (col, &av) in chart.a_values.iter().enumerate() {
            let cell = chart.cell(row, col);
            rows.push(vec![num(av), num(s), cell.stable.to_string(), num(cell.margin)]);
        }
    }
    write_csv(&out, &["a", second_name, "stable", "margin"], rows)?;

    let boundary_path = sibling(&out, ".boundary.csv");
    let boundary = chart.boundary();
    write_csv(&boundary_path, &["a", second_name], boundary.iter().map(|p| vec![num(p.a), num(p.second)]))?;

    let artifacts = [out.clone(), boundary_path];
    Manifest::new("chart", resolved_config(&[to_value(&run)]), &artifacts, Outcome::ok()).write(&out)?;
    Ok(())
}

fn portrait_rows(pairs: &[(f64, f64)]) -> impl Iterator<Item = Vec<String>> + '_ {
    pairs.iter().map(|&(x, y)| vec![num(x), num(y)])
}

pub fn bifurcate(mut model: ModelArgs, mut run: BifurcateArgs, config: Option<&Path>) -> Result<(), Failure> {
    if let Some(path) = config {
        let map = read_config(path, &[keys_of::<ModelArgs>(), keys_of::<BifurcateArgs>()].concat())?;
        model.merge(config_part(&map, path)?);
        run.merge(config_part(&map, path)?);
    }
    let range = require(run.range, "--range")?;
    let out = require(run.out.clone(), "--out")?;
    let spec = build_model(&model, range.lo)?;

    let mut cfg = SweepConfig::new(spec, range.lo, range.hi, range.n);
    if let Some(t) = run.t_end {
        cfg.t_end = positive(t, "--t-end")?;
    }
    if let Some(dt) = run.dt {
        cfg.dt = positive(dt, "--dt")?;
    }
    if let Some(f) = run.transient {
        cfg.transient_fraction = f;
    }
    if let Some(p) = run.perturbation {
        cfg.perturbation = p;
    }
    if let Some(t) = run.threshold {
        cfg.cycle_threshold = t;
    }
    cfg.validate()?;

    let points = run_sweep(&cfg)?;
    let rows = points.iter().map(|p| {
        vec![
            num(p.param_value),
            p.classified.name().to_string(),
            num(p.cycle_min),
            num(p.cycle_max),
            num(p.amplitude),
            opt_num(p.period_estimate),
        ]
    });
    write_csv(&out, &["a", "class", "cycle_min", "cycle_max", "amplitude", "period"], rows)?;
    let mut artifacts: Vec<PathBuf> = vec![out.clone()];

    let mut phase_failures = Vec::new();
    for phase in &run.phases {
        let path = sibling(&out, &format!(".phase-{}.csv", phase.label));
        match phase_portrait(&spec, phase.a, &cfg) {
            Ok(portrait) => write_csv(&path, &["x", "y"], portrait_rows(&portrait.pairs))?,
            Err(PortraitError::Diverged { time, partial }) => {
                write_csv(&path, &["x", "y"], portrait_rows(&partial.pairs))?;
                phase_failures.push(json!({ "a": phase.a, "failure_time": time }));
            }
            Err(PortraitError::Invalid(e)) => return Err(e.into()),
        }
        artifacts.push(path);
    }

    let diverged: Vec<Value> = points
        .iter()
        .filter(|p| p.classified == Classification::Diverged)
        .map(|p| json!({ "a": p.param_value, "failure_time": p.failure_time }))
        .collect();
    let all_diverged = diverged.len() == points.len();
    let status = if all_diverged {
        "all-diverged"
    } else if !phase_failures.is_empty() {
        "phase-diverged"
    } else {
        "ok"
    };
    let outcome = Outcome {
        status,
        failure_time: None,
        detail: Some(json!({ "diverged_points": diverged, "diverged_phases": phase_failures })),
    };
    let mut resolved = resolved_config(&[to_value(&model), to_value(&run)]);
    resolved["t-end"] = json!(cfg.t_end);
    resolved["dt"] = json!(cfg.dt);
    resolved["transient"] = json!(cfg.transient_fraction);
    resolved["perturbation"] = json!(cfg.perturbation);
    resolved["threshold"] = json!(cfg.cycle_threshold);
    Manifest::new("bifurcate", resolved, &artifacts, outcome).write(&out)?;

    if all_diverged {
        Err(Failure::Numerical("every sweep point diverged".into()))
    } else if !phase_failures.is_empty() {
        Err(Failure::Numerical("a phase-portrait run diverged; partial orbit written".into()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct RootRecord {
    re: f64,
    im: f64,
    residual: f64,
    multiplicity: u32,
}

pub fn roots(mut run: RootsArgs, config: Option<&Path>) -> Result<(), Failure> {
    if let Some(path) = config {
        let map = read_config(path, &keys_of::<RootsArgs>())?;
        run.merge(config_part(&map, path)?);
    }
    let eq = match require(run.eq, "--eq")? {
        EquationKind::AFull => {
            forbid(&run.kappa_tau, "--kappa-tau", "a-full")?;
            CharEq::model_a_full(require(run.a, "--a")?, require(run.beta, "--beta")?)?
        }
        EquationKind::ANoqueue => {
            forbid(&run.beta, "--beta", "a-noqueue")?;
            forbid(&run.kappa_tau, "--kappa-tau", "a-noqueue")?;
            CharEq::model_a_no_queue(require(run.a, "--a")?)?
        }
        EquationKind::ScalarDelay => {
            forbid(&run.a, "--a", "scalar-delay")?;
            forbid(&run.beta, "--beta", "scalar-delay")?;
            CharEq::scalar_delay(require(run.kappa_tau, "--kappa-tau")?)?
        }
    };
    let count = require(run.count, "--count")?;
    let mut bx = SearchBox::default();
    bx.re_min = run.re_min.unwrap_or(bx.re_min);
    bx.re_max = run.re_max.unwrap_or(bx.re_max);
    bx.im_max = run.im_max.unwrap_or(bx.im_max);

    let spectrum = rightmost_roots(&eq, count, &bx)?;
    let records: Vec<RootRecord> = spectrum
        .roots
        .iter()
        .map(|r| RootRecord {
            re: r.value.re,
            im: r.value.im,
            residual: r.residual,
            multiplicity: r.multiplicity,
        })
        .collect();
    let text = serde_json::to_string_pretty(&records).map_err(|e| Failure::Io(e.into()))?;
    println!("{text}");

    if let Some(out) = &run.out {
        write_json(out, &records)?;
        let outcome = Outcome {
            status: if spectrum.is_complete() { "ok" } else { "partial" },
            failure_time: None,
            detail: Some(json!({ "found": records.len(), "requested": count })),
        };
        Manifest::new("roots", resolved_config(&[to_value(&run)]), &[out.clone()], outcome).write(out)?;
    }
    Ok(())
}
