use liesym::estimator::{
    perturbed_values, run_joint_estimation, JointEstimation, ObservabilityGuard, UkfConfig,
};
use liesym::lie::jet::{jet_chain, JetOptions};
use liesym::lie::{build_chain, DerivativeDefinition};
use liesym::model::{serialize_model, AugmentedModel};
use liesym::observability::{analyze as run_analysis, AnalysisOptions, Engine, ObservabilityReport};
use liesym::simulator::{integrate, load_series, synthesize_measurements, Inputs, TimeSeries, Trajectory};
use liesym::structures::{isolation_device_forces, Benchmark, BenchmarkCase, DeviceForces};
use liesym::symbolic::{parse_expr, Binding, Sym};
use liesym::symmetry::{destroys_by_measurement, infinitesimal_basis, jet_infinitesimal_basis, SymmetryReport};

use crate::config::Provenance;
use crate::setup::{
    analysis_options, build_inputs, inputs_table, load_benchmark, out_dir, pick_channel, sim_settings, usage,
    write_json, write_table,
};
use crate::{
    AnalyzeArgs, BenchmarkArgs, CliError, EstimateArgs, SimulateArgs, SymmetriesArgs, EXIT_OK, EXIT_UNOBSERVABLE,
};

/// The six isolation-device unknowns the coefficient presets refer to.
const DEVICE_UNKNOWNS: [&str; 6] = ["k_lrb", "alpha", "u_y", "m_in", "k_in", "c_in"];

fn preset(name: &str) -> Option<[f64; 6]> {
    match name.to_ascii_uppercase().as_str() {
        "I" | "1" => Some([0.58, 0.79, 1.18, 0.60, 0.77, 1.24]),
        "II" | "2" => Some([1.88, 0.64, 0.85, 0.61, 1.78, 0.77]),
        "III" | "3" => Some([1.96, 1.85, 0.75, 1.678, 1.98, 0.78]),
        _ => None,
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}

fn describe(b: &Benchmark) -> serde_json::Value {
    serde_json::json!({
        "case": b.case.label(),
        "sensors": b.sensors.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "outputs": b.model.output_names,
        "unknowns": b.unknowns.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "unmeasured_inputs": b.model.inputs_unmeasured.iter().map(|s| s.name()).collect::<Vec<_>>(),
    })
}

/// Run the study; without an explicit definition, fall back to the general
/// one when the affine split does not apply.
fn study(m: &AugmentedModel, opts: &AnalysisOptions, explicit: bool) -> Result<ObservabilityReport, CliError> {
    match run_analysis(m, opts) {
        Err(liesym::Error::DefinitionNotApplicable(why)) if !explicit => {
            eprintln!("liesym: {} does not apply ({why}); using general", opts.definition);
            let general = AnalysisOptions {
                definition: DerivativeDefinition::GeneralExtended,
                ..opts.clone()
            };
            Ok(run_analysis(m, &general)?)
        }
        r => Ok(r?),
    }
}

fn verdict(r: &ObservabilityReport) -> &'static str {
    if r.observable {
        "observable"
    } else if r.practically_observable {
        "practically observable (only higher input derivatives unresolved)"
    } else {
        "unobservable"
    }
}

fn print_report(r: &ObservabilityReport) {
    println!("definition {}, engine {:?}, order {}", r.definition, r.engine, r.order());
    println!("rank {}/{}, deficiency {}", r.rank, r.target, r.deficiency);
    if !r.unobservable.is_empty() {
        println!("unobservable: {}", r.unobservable.join(", "));
    }
    println!("verdict: {}", verdict(r));
}

pub fn analyze(a: &AnalyzeArgs) -> Result<i32, CliError> {
    let b = load_benchmark(&a.model)?;
    let seed = a.model.seed.unwrap_or(0);
    let aug = b.augment()?;
    let opts = analysis_options(&a.analysis, &aug, seed)?;
    let report = study(&aug, &opts, a.analysis.definition.is_some())?;

    let prov = Provenance::new("analyze", a, seed);
    let dir = out_dir(&a.model)?;
    write_table(&dir.join("rank.csv"), &prov, |w| {
        w.extend_from_slice(report.rank_csv().as_bytes());
        Ok(())
    })?;
    let mut doc = json(&report)?;
    doc["model"] = describe(&b);
    doc["provenance"] = prov.json();
    write_json(&dir.join("report.json"), &doc)?;

    print_report(&report);
    let failing = !(report.observable || report.practically_observable);
    if failing && a.analysis.fail_on_unobservable.unwrap_or(false) {
        eprintln!("liesym: unobservable with deficiency {}", report.deficiency);
        return Ok(EXIT_UNOBSERVABLE);
    }
    Ok(EXIT_OK)
}

pub fn symmetries(a: &SymmetriesArgs) -> Result<i32, CliError> {
    let b = load_benchmark(&a.model)?;
    let seed = a.model.seed.unwrap_or(0);
    let aug = b.augment()?;
    let opts = analysis_options(&a.analysis, &aug, seed)?;
    let report = study(&aug, &opts, a.analysis.definition.is_some())?;
    let d = report.definition;
    let order = a.analysis.kmax.unwrap_or(report.order());
    let basis = if report.engine == Engine::Jet {
        let j = jet_chain(
            &aug,
            d,
            &JetOptions {
                order,
                realizations: opts.realizations,
                seed,
            },
        )?;
        jet_infinitesimal_basis(&j, order)
    } else {
        infinitesimal_basis(&build_chain(&aug, d, order)?, seed)?
    };
    let mut sym = SymmetryReport::new(&basis, a.flow_order.unwrap_or(8))?;
    for text in a.measure.iter().flatten() {
        let h = parse_expr(text).map_err(|e| usage(format!("--measure `{text}`: {e}")))?;
        sym.measurement_checks.push((text.clone(), destroys_by_measurement(&basis, &h)));
    }

    let prov = Provenance::new("symmetries", a, seed);
    let dir = out_dir(&a.model)?;
    let mut doc = json(&sym)?;
    doc["definition"] = json(&d)?;
    doc["order"] = order.into();
    doc["model"] = describe(&b);
    doc["provenance"] = prov.json();
    write_json(&dir.join("symmetries.json"), &doc)?;

    println!("definition {d}, order {order}, {} symmetr{}", sym.r, if sym.r == 1 { "y" } else { "ies" });
    for (i, xi) in sym.infinitesimals.iter().enumerate() {
        let moving: Vec<String> =
            sym.z.iter().zip(xi).filter(|(_, c)| *c != "0").map(|(z, c)| format!("{z}: {c}")).collect();
        println!("xi[{i}] {}", moving.join("; "));
    }
    for (i, f) in sym.flows.iter().enumerate() {
        let state = if f.terminates { format!("terminates at order {}", f.order) } else { "truncated".into() };
        println!("flow[{i}] {state}");
    }
    for (h, destroyed) in &sym.measurement_checks {
        let marks: Vec<&str> = destroyed.iter().map(|&d| if d { "destroyed" } else { "kept" }).collect();
        println!("measure {h}: {}", marks.join(", "));
    }
    Ok(EXIT_OK)
}

fn simulate_truth(
    b: &Benchmark,
    sim: &crate::SimArgs,
    seed: u64,
) -> Result<(Trajectory, TimeSeries, Inputs, f64), CliError> {
    let s = sim_settings(sim)?;
    let inputs = build_inputs(b, sim, &s, seed)?;
    let x0 = vec![0.0; b.model.states.len()];
    let truth = integrate(&b.model, &Binding::new(), &inputs, &x0, s.dt, s.t_end, s.substeps)?;
    let meas = synthesize_measurements(&truth, s.noise, seed.wrapping_add(100));
    Ok((truth, meas, inputs, s.t_end))
}

fn write_simulation(
    dir: &std::path::Path,
    prov: &Provenance,
    b: &Benchmark,
    truth: &Trajectory,
    meas: &TimeSeries,
    inputs: &Inputs,
    traj_name: &str,
) -> Result<(), CliError> {
    write_table(&dir.join(traj_name), prov, |w| truth.write_csv(w))?;
    write_table(&dir.join("measurements.csv"), prov, |w| meas.write_csv(w))?;
    if !inputs.is_empty() {
        let table = inputs_table(b, inputs)?;
        write_table(&dir.join("inputs.csv"), prov, |w| table.write_csv(w))?;
    }
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<i32, CliError> {
    let b = load_benchmark(&a.model)?;
    let seed = a.model.seed.unwrap_or(0);
    let (truth, meas, inputs, t_end) = simulate_truth(&b, &a.sim, seed)?;
    let prov = Provenance::new("simulate", a, seed);
    let dir = out_dir(&a.model)?;
    write_simulation(&dir, &prov, &b, &truth, &meas, &inputs, "trajectory.csv")?;
    let rms = truth.output_series().rms();
    println!("{} samples over {t_end} s", truth.times.len());
    for (n, r) in truth.output_names.iter().zip(rms) {
        println!("{n}: rms {r:.6e}");
    }
    Ok(EXIT_OK)
}

/// Reorder a measurement record to the model's output order.
fn align_measurements(ts: &TimeSeries, names: &[String]) -> Result<TimeSeries, CliError> {
    let idx = names
        .iter()
        .map(|n| {
            ts.names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| usage(format!("measurement record has no column `{n}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values = ts.values.iter().map(|row| idx.iter().map(|&i| row[i]).collect()).collect();
    Ok(TimeSeries::new(ts.t0, ts.dt, names.to_vec(), values)?)
}

fn recorded_inputs(a: &EstimateArgs, b: &Benchmark) -> Result<Inputs, CliError> {
    let mut inputs = Inputs::new();
    let Some(path) = &a.inputs else {
        if let Some(u) = b.model.inputs_measured.first() {
            return Err(usage(format!("--measurements needs --inputs with a `{u}` column")));
        }
        return Ok(inputs);
    };
    let ts = load_series(path).map_err(|e| usage(format!("inputs {}: {e}", path.display())))?;
    for u in &b.model.inputs_measured {
        if !ts.names.contains(&u.name()) && ts.channels() > 1 {
            return Err(usage(format!("input record has no column `{u}`")));
        }
        inputs.insert(*u, pick_channel(&ts, &u.name())?);
    }
    Ok(inputs)
}

fn initial_coefficients(a: &EstimateArgs, unknowns: &[Sym]) -> Result<Vec<f64>, CliError> {
    let n = unknowns.len();
    match (&a.init, &a.init_case) {
        (Some(_), Some(_)) => Err(usage("--init and --init-case are exclusive")),
        (Some(v), None) if v.len() == 1 => Ok(vec![v[0]; n]),
        (Some(v), None) if v.len() == n => Ok(v.clone()),
        (Some(v), None) => Err(usage(format!("{} initial coefficients for {n} unknowns", v.len()))),
        (None, Some(c)) => {
            let p = preset(c).ok_or_else(|| usage(format!("unknown preset `{c}` (I, II or III)")))?;
            let names: Vec<String> = unknowns.iter().map(|s| s.name()).collect();
            if names != DEVICE_UNKNOWNS {
                return Err(usage(format!("--init-case needs --unknowns {}", DEVICE_UNKNOWNS.join(","))));
            }
            Ok(p.to_vec())
        }
        (None, None) => Ok(vec![1.0; n]),
    }
}

fn write_devices(
    path: &std::path::Path,
    prov: &Provenance,
    times: &[f64],
    est: &DeviceForces,
    truth: Option<&DeviceForces>,
) -> Result<(), CliError> {
    let mut text = prov.header();
    text.push_str("t,x0,f_lrb,f_in");
    if truth.is_some() {
        text.push_str(",x0_true,f_lrb_true,f_in_true");
    }
    text.push('\n');
    for (k, t) in times.iter().enumerate() {
        text.push_str(&format!("{t},{},{},{}", est.x0[k], est.f_lrb[k], est.f_in[k]));
        if let Some(tr) = truth {
            text.push_str(&format!(",{},{},{}", tr.x0[k], tr.f_lrb[k], tr.f_in[k]));
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn estimate(a: &EstimateArgs) -> Result<i32, CliError> {
    // a preset names the device coefficients, so it also fixes the unknowns
    let mut model_args = a.model.clone();
    if a.init_case.is_some() && model_args.unknowns.is_none() {
        model_args.unknowns = Some(DEVICE_UNKNOWNS.iter().map(|s| s.to_string()).collect());
    }
    let b = load_benchmark(&model_args)?;
    let seed = a.model.seed.unwrap_or(0);
    let unknowns = b.unknowns.clone();
    if unknowns.is_empty() {
        return Err(usage("no unknown parameters to estimate"));
    }
    let init = initial_coefficients(a, &unknowns)?;
    let prov = Provenance::new("estimate", a, seed);
    let dir = out_dir(&a.model)?;

    let (meas, inputs, truth) = match &a.measurements {
        Some(p) => {
            let ts = load_series(p).map_err(|e| usage(format!("measurements {}: {e}", p.display())))?;
            (align_measurements(&ts, &b.model.output_names)?, recorded_inputs(a, &b)?, None)
        }
        None => {
            let (truth, meas, inputs, _) = simulate_truth(&b, &a.sim, seed)?;
            write_simulation(&dir, &prov, &b, &truth, &meas, &inputs, "truth.csv")?;
            (meas, inputs, Some(truth))
        }
    };

    let values = perturbed_values(&b.model, &unknowns, a.perturb.unwrap_or(0.0), seed.wrapping_add(200));
    let mut cfg = UkfConfig::structural(b.model.states.len(), unknowns.len(), &meas.rms());
    cfg.kappa = a.kappa;
    cfg.alpha_q = a.alpha_q.unwrap_or(cfg.alpha_q);
    cfg.alpha_r = a.alpha_r.unwrap_or(cfg.alpha_r);
    cfg.substeps = a.sim.substeps.unwrap_or(cfg.substeps);
    let guard = if a.skip_guard.unwrap_or(false) {
        ObservabilityGuard::Skip
    } else {
        ObservabilityGuard::Enforce { seed }
    };
    let x0 = vec![0.0; b.model.states.len()];
    let rec = run_joint_estimation(&JointEstimation {
        model: &b.model,
        measurements: &meas,
        inputs: &inputs,
        unknowns: &unknowns,
        values: &values,
        initial_coefficients: &init,
        x0: &x0,
        cfg: &cfg,
        guard,
    })?;

    write_table(&dir.join("estimation.csv"), &prov, |w| rec.write_csv(w))?;
    let mut doc = rec.summary(&cfg);
    doc["model"] = describe(&b);
    doc["initial_coefficients"] = json(&init)?;
    doc["provenance"] = prov.json();
    write_json(&dir.join("summary.json"), &doc)?;

    if b.case == BenchmarkCase::IsolatedInerter && rec.state_names.iter().any(|n| n == "z") {
        let est = isolation_device_forces(&rec.state_names, &rec.states, |k, p| rec.value_at(k, p, &values))?;
        let design = b.model.constants_binding();
        let tr = truth
            .as_ref()
            .map(|t| isolation_device_forces(&t.state_names, &t.states, |_, p| design.get(&Sym::new(p)).copied()))
            .transpose()?;
        write_devices(&dir.join("devices.csv"), &prov, &rec.times, &est, tr.as_ref())?;
    }

    println!("{} steps", rec.times.len());
    for (u, c) in rec.unknowns.iter().zip(rec.final_coefficients()) {
        println!("alpha_{u} = {c:.4}");
    }
    match rec.convergence_step(0.05) {
        Some(k) => println!("within 5% from t = {:.2} s", rec.times[k]),
        None => println!("not within 5% at the end of the record"),
    }
    Ok(EXIT_OK)
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<i32, CliError> {
    let case = a.case.as_deref().ok_or_else(|| usage("--case is required"))?;
    let mut entries = vec![("case".to_string(), case.to_string())];
    if let Some(s) = &a.sensors {
        entries.push(("sensors".into(), s.clone()));
    }
    if let Some(u) = &a.unknowns {
        entries.push(("unknowns".into(), u.join(", ")));
    }
    for kv in a.set.iter().flatten() {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects key=value, got `{kv}`")))?;
        entries.push((k.trim().to_string(), v.trim().to_string()));
    }
    let b = Benchmark::from_entries(&entries)?;
    let text = Provenance::new("benchmark", a, 0).header() + &serialize_model(&b.model);
    match &a.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
