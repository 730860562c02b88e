//! Browser bindings. Every entry point returns a JSON string, with failures
//! reported as `{"error": "..."}`, so the page never sees a thrown exception.

use std::collections::HashMap;
use std::sync::OnceLock;

use liesym::lie::{build_chain, DerivativeDefinition};
use liesym::model::{augment_parameters, parse_model, ModelDef};
use liesym::observability::{analyze, AnalysisOptions};
use liesym::simulator::{integrate, integrate_system, Inputs, OdeSystem, TimeSeries};
use liesym::structures::{bouc_wen_law, lrb_force, parse_sensors, BenchmarkCase, BenchmarkSpec, LrbBoucWenSpec};
use liesym::symbolic::{Binding, Expr, Sym};
use liesym::symmetry::{infinitesimal_basis, lie_series_flow, SymmetryFlow};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Outcome = Result<Value, String>;

fn respond(r: Outcome) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn err(e: liesym::Error) -> String {
    e.to_string()
}

/// Rank of the observability matrix at each order for a built-in case.
/// Empty `sensors` or `definition` pick the case defaults.
#[wasm_bindgen]
pub fn rank_vs_order(case: &str, sensors: &str, definition: &str, k_max: u32, seed: u32) -> String {
    respond(rank_study(case, sensors, definition, k_max, seed))
}

fn rank_study(case: &str, sensors: &str, definition: &str, k_max: u32, seed: u32) -> Outcome {
    let case: BenchmarkCase = case.parse().map_err(err)?;
    let spec = BenchmarkSpec::default_for(case);
    let sensors = if sensors.trim().is_empty() {
        spec.default_sensors()
    } else {
        parse_sensors(sensors).map_err(err)?
    };
    let b = spec.build(&sensors, None).map_err(err)?;
    let aug = b.augment().map_err(err)?;
    let definition = match definition.trim() {
        "" if aug.unmeasured_inputs().is_empty() => DerivativeDefinition::AffineNoInput,
        "" => DerivativeDefinition::AffineWithInputs,
        d => d.parse().map_err(err)?,
    };
    let opts = AnalysisOptions {
        definition,
        k_max: (k_max > 0).then_some(k_max as usize),
        seed: seed as u64,
        ..AnalysisOptions::default()
    };
    let report = analyze(&aug, &opts).map_err(err)?;
    let mut v: Value = serde_json::from_str(&report.to_json()).map_err(|e| e.to_string())?;
    v["sensors"] = json!(sensors.iter().map(ToString::to_string).collect::<Vec<_>>());
    Ok(v)
}

/// Force-displacement loop of the lead-rubber bearing under a sine stroke of
/// `amplitude_mm`, run for `cycles` periods of 2 s.
#[wasm_bindgen]
pub fn bouc_wen_loop(amplitude_mm: f64, cycles: u32, beta: f64, gamma: f64, n: i32) -> String {
    respond(hysteresis(amplitude_mm, cycles, beta, gamma, n))
}

fn hysteresis(amplitude_mm: f64, cycles: u32, beta: f64, gamma: f64, n: i32) -> Outcome {
    if !(amplitude_mm > 0.0) || cycles == 0 || n < 1 {
        return Err("need a positive amplitude, at least one cycle and n >= 1".into());
    }
    let spec = LrbBoucWenSpec {
        beta,
        gamma,
        n_lrb: n,
        ..LrbBoucWenSpec::design()
    };
    let (z, xd) = (Sym::new("z"), Sym::new("xd"));
    let rate = bouc_wen_law(
        Expr::var(xd),
        Expr::var(z),
        Expr::real(spec.u_y),
        Expr::real(spec.beta),
        Expr::real(spec.gamma),
        Expr::real(spec.rho),
        spec.n_lrb,
    );
    let sys = OdeSystem::new(&[rate], &[], &[z], &[xd], &Binding::new()).map_err(err)?;

    let (period, per_cycle) = (2.0, 400);
    let dt = period / per_cycle as f64;
    let samples = per_cycle * cycles as usize;
    let amp = amplitude_mm * 1e-3;
    let omega = std::f64::consts::TAU / period;
    let stroke: Vec<f64> = (0..=samples).map(|k| amp * (omega * k as f64 * dt).sin()).collect();
    let speed: Vec<f64> = (0..=samples).map(|k| amp * omega * (omega * k as f64 * dt).cos()).collect();
    let inputs: Inputs = [(xd, TimeSeries::scalar("xd", 0.0, dt, speed))].into_iter().collect();
    let traj = integrate_system(&sys, &inputs, &[0.0], dt, samples as f64 * dt, 10).map_err(err)?;

    let force: Vec<f64> = stroke.iter().zip(&traj.states).map(|(x, s)| lrb_force(*x, s[0], &spec)).collect();
    // energy dissipated over the last cycle, trapezoidal in x
    let last = samples - per_cycle;
    let dissipated: f64 = (last..samples)
        .map(|k| 0.5 * (force[k] + force[k + 1]) * (stroke[k + 1] - stroke[k]))
        .sum();
    Ok(json!({
        "x_mm": stroke.iter().map(|x| x * 1e3).collect::<Vec<_>>(),
        "force_kn": force.iter().map(|f| f * 1e-3).collect::<Vec<_>>(),
        "z": traj.states.iter().map(|s| s[0]).collect::<Vec<_>>(),
        "dissipated_kj": dissipated * 1e-3,
    }))
}

struct Golden {
    model: ModelDef,
    z: Vec<Sym>,
    xi: Vec<Expr>,
    flow: SymmetryFlow,
}

fn golden() -> Result<&'static Golden, String> {
    static CELL: OnceLock<Result<Golden, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let model = parse_model(include_str!("../../../models/twodof.model")).map_err(err)?;
        let unknowns: Vec<Sym> = ["k1", "dk1", "k2", "m"].iter().map(|s| Sym::new(s)).collect();
        let aug = augment_parameters(&model, &unknowns).map_err(err)?;
        let chain = build_chain(&aug, DerivativeDefinition::AffineWithInputs, 6).map_err(err)?;
        let basis = infinitesimal_basis(&chain, 7).map_err(err)?;
        let xi = basis
            .vectors
            .first()
            .and_then(|v| v.xi.clone())
            .ok_or("the two-story model has no closed-form symmetry")?;
        let flow = lie_series_flow(&xi, &basis.z, 6).map_err(err)?;
        Ok(Golden {
            model,
            z: basis.z,
            xi,
            flow,
        })
    })
    .as_ref()
    .map_err(Clone::clone)
}

/// Move the two-story model along its symmetry by `eps` and simulate both
/// versions for `seconds` under the same measured input.
#[wasm_bindgen]
pub fn symmetry_flow(eps: f64, seconds: f64) -> String {
    respond(flow_demo(eps, seconds))
}

fn flow_demo(eps: f64, seconds: f64) -> Outcome {
    if !eps.is_finite() || !(seconds > 0.0 && seconds <= 60.0) {
        return Err("need a finite eps and 0 < seconds <= 60".into());
    }
    let g = golden()?;
    let m = &g.model;
    let x0 = [0.01, -0.02, 0.0, 0.05];
    let mut point: HashMap<Sym, f64> = m.constants_binding();
    for (s, v) in m.states.iter().zip(x0) {
        point.insert(*s, v);
    }
    for s in &g.z {
        point.entry(*s).or_insert(0.0);
    }
    let moved = g.flow.evaluate(&point, eps).map_err(err)?;
    let at = |name: &str| g.z.iter().position(|s| s.name() == name).map(|i| moved[i]).unwrap_or(f64::NAN);
    let shift = at("w") - point[&Sym::new("w")];

    let dt = 1e-3;
    let n = (seconds / dt).round() as usize + 1;
    let u: Vec<f64> = (0..n).map(|i| (1.3 * i as f64 * dt).sin() + 0.3 * (4.1 * i as f64 * dt).cos()).collect();
    let w: Vec<f64> = (0..n).map(|i| 0.2 * (0.7 * i as f64 * dt).sin()).collect();
    let inputs = |offset: f64| -> Inputs {
        [
            (Sym::new("u"), TimeSeries::scalar("u", 0.0, dt, u.clone())),
            (Sym::new("w"), TimeSeries::scalar("w", 0.0, dt, w.iter().map(|v| v + offset).collect())),
        ]
        .into_iter()
        .collect()
    };
    let t_end = (n - 1) as f64 * dt;
    let base = integrate(m, &Binding::new(), &inputs(0.0), &x0, dt, t_end, 1).map_err(err)?;
    let params: Binding = ["k1", "dk1", "k2", "m"].iter().map(|p| (Sym::new(p), at(p))).collect();
    let x0m: Vec<f64> = m.states.iter().map(|s| at(&s.name())).collect();
    let moved_traj = integrate(m, &params, &inputs(shift), &x0m, dt, t_end, 1).map_err(err)?;

    let stride = (n / 500).max(1);
    let thin = |v: Vec<f64>| -> Vec<f64> { v.into_iter().step_by(stride).collect() };
    let gap = (0..base.output_names.len())
        .flat_map(|c| base.output(c).into_iter().zip(moved_traj.output(c)).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let params_json: Value = ["k1", "dk1", "k2", "m"]
        .iter()
        .map(|p| (p.to_string(), json!({ "before": point[&Sym::new(p)], "after": at(p) })))
        .collect::<serde_json::Map<_, _>>()
        .into();
    Ok(json!({
        "z": g.z.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "xi": g.xi.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "terminates": g.flow.terminates,
        "parameters": params_json,
        "w_shift": shift,
        "t": thin(base.times.clone()),
        "x1": thin(base.state(0)),
        "x1_moved": thin(moved_traj.state(0)),
        "a1": thin(base.output(0)),
        "a1_moved": thin(moved_traj.output(0)),
        "max_output_gap": gap,
    }))
}
