//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use liesym::estimator::{
    perturbed_values, run_joint_estimation, sigma_points, ukf_step, Interval, JointEstimation, ObservabilityGuard, UkfConfig, UkfState,
};
use liesym::lie::{build_chain, lie_derivative_along, DerivativeDefinition};
use liesym::model::{augment_parameters, parse_model, AugmentedModel, ModelDef};
use liesym::observability::{
    analyze, chain_matches_observability_matrix, discrete_observability_matrix, linear_observability_matrix,
    AnalysisOptions, Engine, ObservabilityReport, RankMethod,
};
use liesym::simulator::{
    ground_motion, integrate, synthesize_measurements, GroundMotionSpec, Inputs, OdeSystem, TimeSeries, Workspace,
};
use liesym::structures::{
    isolation_device_forces, parse_sensors, BenchmarkCase, BenchmarkSpec, Sensor, ShearBuildingSpec,
};
use liesym::symbolic::{parse_expr, Binding, Expr, Sym};
use liesym::symmetry::{destroys_by_measurement, infinitesimal_basis, lie_series_flow, InfinitesimalBasis};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// Pinned tolerances.
const GOLDEN_NUMERIC_TOL: f64 = 1e-10;
const GOLDEN_RUNTIME_S: f64 = 60.0;
const VERDICT_RUNTIME_S: f64 = 600.0;
const FLOW_EPS: f64 = 0.01;
const INVARIANCE_TOL: f64 = 1e-6;
const KF_TOL: f64 = 1e-8;
const COEF_BAND: f64 = 0.05;
const FORCE_RMS_TOL: f64 = 0.05;
const DRIFT_TOL_M: f64 = 1e-4;
const ESTIMATION_RUNTIME_S: f64 = 900.0;
const FD_TOL: f64 = 1e-5;
const ENERGY_TOL: f64 = 1e-6;
const MOMENT_TOL: f64 = 1e-10;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sym(s: &str) -> Sym {
    Sym::new(s)
}

fn twodof_model() -> ModelDef {
    parse_model(include_str!("../../../models/twodof.model")).unwrap()
}

fn twodof() -> AugmentedModel {
    let unknowns: Vec<Sym> = ["k1", "dk1", "k2", "m"].iter().map(|s| sym(s)).collect();
    augment_parameters(&twodof_model(), &unknowns).unwrap()
}

fn golden_basis() -> (InfinitesimalBasis, Vec<Expr>) {
    let c = build_chain(&twodof(), DerivativeDefinition::AffineWithInputs, 6).unwrap();
    let b = infinitesimal_basis(&c, 7).unwrap();
    let xi = b.vectors.first().and_then(|v| v.xi.clone()).unwrap_or_default();
    (b, xi)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (b, xi) = golden_basis();
    ensure(b.r() == 1, || format!("null space dimension {}", b.r()))?;
    let mut golden: Vec<Expr> = ["1", "(k1 + k2)/k2", "0", "0", "-2*dk1", "0", "0", "0", "k1"]
        .iter()
        .map(|e| parse_expr(e).unwrap())
        .collect();
    golden.extend((0..6).map(|_| Expr::zero()));
    ensure(xi.len() == golden.len(), || format!("{} components", xi.len()))?;
    for (i, (g, w)) in xi.iter().zip(&golden).enumerate() {
        ensure(g.equivalent(w), || format!("component {i} is {g}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let bind: Binding = b.z.iter().map(|s| (*s, rng.random_range(0.5..2.0))).collect();
        for (g, w) in xi.iter().zip(&golden) {
            worst = worst.max((g.evaluate(&bind).unwrap() - w.evaluate(&bind).unwrap()).abs());
        }
    }
    ensure(worst <= GOLDEN_NUMERIC_TOL, || format!("numeric mismatch {worst:e}"))?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < GOLDEN_RUNTIME_S, || format!("took {secs:.1} s"))?;
    Ok(format!("deficiency 1, infinitesimal matches structurally and at 20 points ({worst:.1e}), {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let (b, xi) = golden_basis();
    let f = lie_series_flow(&xi, &b.z, 6).map_err(|e| e.to_string())?;
    ensure(f.terminates && f.order == 2, || format!("terminates {} at order {}", f.terminates, f.order))?;
    let phi = f.expressions(sym("eps"));
    for (i, want) in [
        (0, "x1 + eps"),
        (1, "x2 + (k1 + k2)/k2*eps - dk1/k2*eps^2"),
        (4, "k1 - 2*dk1*eps"),
        (8, "w + k1*eps - dk1*eps^2"),
    ] {
        ensure(phi[i].equivalent(&parse_expr(want).unwrap()), || format!("{}: {}", b.z[i], phi[i]))?;
    }
    let moving = f.coefficients.iter().filter(|c| c.len() > 1).count();
    ensure(moving == 4, || format!("{moving} components move"))?;
    Ok("series exact at eps^2, four moving components match".into())
}

fn criterion_3() -> Outcome {
    let (b, xi) = golden_basis();
    let contraction = |h: &str| lie_derivative_along(&[parse_expr(h).unwrap()], &xi, &b.z).unwrap()[0].clone();
    let k1 = contraction("k1");
    ensure(destroys_by_measurement(&b, &parse_expr("k1").unwrap()) == [true], || "k1 not destroying".into())?;
    // the contraction with dk1/dz picks the k1 entry of the infinitesimal
    let k1_entry = &xi[b.z.iter().position(|s| s.name() == "k1").unwrap()];
    ensure(k1.equivalent(k1_entry) && !k1.is_identically_zero(), || format!("contraction {k1}"))?;
    ensure(destroys_by_measurement(&b, &parse_expr("x1").unwrap()) == [true], || "x1 not destroying".into())?;
    ensure(destroys_by_measurement(&b, &parse_expr("v1").unwrap()) == [false], || "v1 destroying".into())?;
    Ok(format!(
        "k1 destroyed (contraction {k1}, the k1 entry of xi; the value k1 sits in the w entry), x1 destroyed, v1 kept"
    ))
}

fn twodof_report(sensors: &str, unknowns: &[&str], d: DerivativeDefinition) -> ObservabilityReport {
    let b = BenchmarkSpec::default_for(BenchmarkCase::TwoDofExample)
        .build(&parse_sensors(sensors).unwrap(), Some(unknowns))
        .unwrap();
    // the total-derivative chain resolves one column per order here, so it
    // gets more orders than the golden order-6 study
    let (k_max, engine) = match d {
        DerivativeDefinition::GeneralExtended => (10, Engine::Jet),
        _ => (6, Engine::Auto),
    };
    analyze(
        &b.augment().unwrap(),
        &AnalysisOptions {
            definition: d,
            k_max: Some(k_max),
            engine,
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap()
}

fn criterion_4(reports: &mut Vec<ObservabilityReport>) -> Outcome {
    let all = ["k1", "dk1", "k2", "m", "w"];
    let known = ["dk1", "k2", "m", "w"];
    let mut failures = Vec::new();
    let mut verdicts = Vec::new();
    for d in [DerivativeDefinition::AffineWithInputs, DerivativeDefinition::GeneralExtended] {
        let runs = [
            ("a", twodof_report("a1,a2", &all, d)),
            ("b", twodof_report("a1,a2", &known, d)),
            ("c", twodof_report("a2,d2", &all, d)),
            ("d", twodof_report("a2,d1", &all, d)),
        ];
        for (tag, r) in &runs {
            let ok = match *tag {
                "a" => !r.observable && r.unobservable == ["x1", "x2", "k1", "w"],
                _ => r.observable,
            };
            if !ok {
                failures.push(format!("{d} ({tag}): deficiency {} {:?}", r.deficiency, r.unobservable));
            }
        }
        verdicts.push(runs.iter().map(|(_, r)| r.observable).collect::<Vec<_>>());
        reports.extend(runs.into_iter().map(|(_, r)| r));
    }
    if verdicts[0] != verdicts[1] {
        failures.push(format!("definitions disagree: {:?} vs {:?}", verdicts[0], verdicts[1]));
    }
    if failures.is_empty() {
        Ok("(a) {x1, x2, k1, w} unobservable; (b)-(d) observable; both definitions agree".into())
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_5(reports: &mut Vec<ObservabilityReport>) -> Outcome {
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    let opts = |d| AnalysisOptions {
        definition: d,
        method: RankMethod::Probabilistic,
        trials: 5,
        seed: 7,
        ..Default::default()
    };
    let run = |case, sensors: &str, d| {
        let b = BenchmarkSpec::default_for(case).build(&parse_sensors(sensors).unwrap(), None).unwrap();
        let t = Instant::now();
        let r = analyze(&b.augment().unwrap(), &opts(d)).unwrap();
        (r, t.elapsed().as_secs_f64())
    };
    let no_input = DerivativeDefinition::AffineNoInput;
    let with_input = DerivativeDefinition::AffineWithInputs;
    for (case, sensors, d) in [
        (BenchmarkCase::IsolatedInerter, "a2", no_input),
        (BenchmarkCase::IsolatedInerter, "d2", no_input),
        (BenchmarkCase::TopFloorNes, "a1,a2,a3,a4,a5", no_input),
        (BenchmarkCase::TopFloorNes, "d4,d5", no_input),
    ] {
        let (r, secs) = run(case, sensors, d);
        summary.push(format!("{case}[{sensors}] def {}", r.deficiency));
        if !r.observable || secs > VERDICT_RUNTIME_S {
            failures.push(format!("{case}[{sensors}] deficiency {} {:?} ({secs:.1} s)", r.deficiency, r.unobservable));
        }
        reports.push(r);
    }
    let (r, _) = run(BenchmarkCase::ViscousWind, "d1,d2,d3,d4,d5", with_input);
    let chain_ok = r.unobservable.iter().any(|s| s == "C1") && r.unobservable.iter().any(|s| s == "w" || s.starts_with("w_d"));
    summary.push(format!("viscous[d] def {}", r.deficiency));
    if r.deficiency != 3 || !chain_ok {
        failures.push(format!("viscous[d] deficiency {} {:?}", r.deficiency, r.unobservable));
    }
    reports.push(r);
    let (r, _) = run(BenchmarkCase::ViscousWind, "a1,a2,a3,a4,a5", with_input);
    let only_higher = r.unobservable.iter().all(|s| s.starts_with("w_d"));
    summary.push(format!("viscous[a] def {}", r.deficiency));
    if r.deficiency != 1 || !only_higher || !r.practically_observable {
        failures.push(format!("viscous[a] deficiency {} {:?}", r.deficiency, r.unobservable));
    }
    reports.push(r);
    if failures.is_empty() {
        Ok(summary.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn random_pair(rng: &mut ChaCha8Rng, structured: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rng.random_range(1..=6usize);
    let q = rng.random_range(1..=2usize);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3..=3) as f64);
    let mut c = DMatrix::from_fn(q, n, |_, _| rng.random_range(-2..=2) as f64);
    if structured && n > 1 {
        // trailing block neither feeds the leading one nor reaches the output
        let k = rng.random_range(1..n);
        for i in 0..k {
            for j in k..n {
                a[(i, j)] = 0.0;
            }
        }
        for i in 0..q {
            for j in k..n {
                c[(i, j)] = 0.0;
            }
        }
    }
    (a, c)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut deficient = 0;
    for i in 0..50 {
        let (a, c) = random_pair(&mut rng, i % 2 == 1);
        let (_, r) = linear_observability_matrix(&a, &c).map_err(|e| e.to_string())?;
        let (_, rd) = discrete_observability_matrix(&a, &c, 0.01).map_err(|e| e.to_string())?;
        let same = chain_matches_observability_matrix(&a, &c).map_err(|e| e.to_string())?;
        ensure(same, || format!("pair {i}: chain rank differs from rank O = {r}"))?;
        ensure(r == rd, || format!("pair {i}: continuous rank {r}, discrete {rd}"))?;
        deficient += usize::from(r < a.nrows());
    }
    Ok(format!("50 pairs agree (chain, O(A, C), O(e^(A dt), C)); {deficient} rank-deficient"))
}

fn criterion_7() -> Outcome {
    let (b, xi) = golden_basis();
    let flow = lie_series_flow(&xi, &b.z, 6).map_err(|e| e.to_string())?;
    let m = twodof_model();
    let consts = m.constants_binding();
    let x0 = [0.01, -0.02, 0.0, 0.05];
    let mut point: HashMap<Sym, f64> = consts.clone();
    for (s, v) in m.states.iter().zip(x0) {
        point.insert(*s, v);
    }
    for s in &b.z {
        point.entry(*s).or_insert(0.0);
    }
    let moved = flow.evaluate(&point, FLOW_EPS).map_err(|e| e.to_string())?;
    let at = |name: &str| moved[b.z.iter().position(|s| s.name() == name).unwrap()];
    let shift = at("w") - point[&sym("w")];

    let (dt, t_end) = (1e-3, 10.0);
    let n = (t_end / dt) as usize + 1;
    let u: Vec<f64> = (0..n).map(|i| (1.3 * i as f64 * dt).sin() + 0.3 * (4.1 * i as f64 * dt).cos()).collect();
    let w: Vec<f64> = (0..n).map(|i| 0.2 * (0.7 * i as f64 * dt).sin()).collect();
    let inputs = |offset: f64| -> Inputs {
        [
            (sym("u"), TimeSeries::scalar("u", 0.0, dt, u.clone())),
            (sym("w"), TimeSeries::scalar("w", 0.0, dt, w.iter().map(|v| v + offset).collect())),
        ]
        .into_iter()
        .collect()
    };
    let base = integrate(&m, &Binding::new(), &inputs(0.0), &x0, dt, t_end, 1).map_err(|e| e.to_string())?;
    let params: Binding = ["k1", "dk1", "k2", "m"].iter().map(|p| (sym(p), at(p))).collect();
    let x0m: Vec<f64> = m.states.iter().map(|s| at(&s.name())).collect();
    let tr = integrate(&m, &params, &inputs(shift), &x0m, dt, t_end, 1).map_err(|e| e.to_string())?;

    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let mut worst = 0.0f64;
    for c in 0..2 {
        let d: Vec<f64> = base.output(c).iter().zip(tr.output(c)).map(|(a, b)| a - b).collect();
        worst = worst.max(rms(&d) / rms(&base.output(c)));
    }
    let dx1: Vec<f64> = base.state(0).iter().zip(tr.state(0)).map(|(a, b)| b - a).collect();
    let mean_dx1 = dx1.iter().sum::<f64>() / dx1.len() as f64;
    ensure(worst < INVARIANCE_TOL, || format!("outputs moved by {worst:.2e} rms relative"))?;
    ensure((mean_dx1 - FLOW_EPS).abs() < 0.1 * FLOW_EPS, || format!("x1 moved by {mean_dx1:.4}"))?;
    Ok(format!("outputs change {worst:.1e} rms relative, x1 shifts by {mean_dx1:.4}"))
}

fn kalman_gap(f: &[&str], h: &[&str], hm: DMatrix<f64>, states: &[&str], seed: u64) -> f64 {
    let fx: Vec<Expr> = f.iter().map(|e| parse_expr(e).unwrap()).collect();
    let hx: Vec<Expr> = h.iter().map(|e| parse_expr(e).unwrap()).collect();
    let st: Vec<Sym> = states.iter().map(|s| sym(s)).collect();
    let sys = OdeSystem::new(&fx, &hx, &st, &[sym("u")], &Binding::new()).unwrap();
    let (n, m, dt) = (st.len(), h.len(), 0.01);
    let mut cfg = UkfConfig::diagonal(&vec![1e-3; n], &vec![0.05; m], &vec![0.4; n]);
    cfg.kappa = Some(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut s = UkfState::new(vec![0.1; n], &cfg).unwrap();
    let mut x = DVector::from_element(n, 0.1);
    let mut p = cfg.p0.clone();
    let mut ws = Workspace::default();
    let mut worst = 0.0f64;
    for k in 1..=100 {
        let (u0, u1) = ([(0.1 * (k - 1) as f64).sin()], [(0.1 * k as f64).sin()]);
        let y: Vec<f64> = (0..m).map(|_| noise.sample(&mut rng)).collect();
        let iv = Interval { t: (k - 1) as f64 * dt, dt, u0: &u0, u1: &u1 };
        s = ukf_step(&s, &sys, iv, &y, &cfg, &mut ws).unwrap().0;
        let mut phi = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            sys.advance(&mut e, 0.0, dt, cfg.substeps, &[0.0], &[0.0], &mut ws).unwrap();
            phi.set_column(j, &DVector::from_vec(e));
        }
        let mut g = vec![0.0; n];
        sys.advance(&mut g, 0.0, dt, cfg.substeps, &u0, &u1, &mut ws).unwrap();
        let xp = &phi * &x + DVector::from_vec(g);
        let pp = &phi * &p * phi.transpose() + &cfg.q0;
        let gain = &pp * hm.transpose() * (&hm * &pp * hm.transpose() + &cfg.r0).try_inverse().unwrap();
        x = &xp + &gain * (DVector::from_vec(y) - &hm * &xp);
        p = &pp - &gain * &hm * &pp;
        worst = worst.max((&s.mean - &x).amax()).max((&s.p - &p).amax());
    }
    worst
}

fn criterion_8() -> Outcome {
    let one = kalman_gap(&["-x + u"], &["x"], DMatrix::from_element(1, 1, 1.0), &["x"], 1);
    let two = kalman_gap(
        &["v", "-4*x - 0.4*v + u"],
        &["x", "x + v"],
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]),
        &["x", "v"],
        2,
    );
    ensure(one < KF_TOL && two < KF_TOL, || format!("gaps {one:.1e} (1-D), {two:.1e} (2-D)"))?;
    Ok(format!("max gap {one:.1e} (1-D), {two:.1e} (2-D) over 100 steps"))
}

struct CaseResult {
    coefficients: Vec<f64>,
    settled_at: Option<f64>,
    lrb_err: f64,
    inerter_err: f64,
    drift_err: f64,
    secs: f64,
}

fn estimate_case(init: &[f64], seed: u64) -> CaseResult {
    let b = BenchmarkSpec::default_for(BenchmarkCase::IsolatedInerter).build(&[Sensor::accel(2)], None).unwrap();
    let m = &b.model;
    let (dt, dur) = (0.01, 40.0);
    let inputs: Inputs = [(sym("ug"), ground_motion(dur, dt, &GroundMotionSpec::firm(6.0), seed))].into_iter().collect();
    let zero = vec![0.0; m.states.len()];
    let truth = integrate(m, &Binding::new(), &inputs, &zero, dt, dur, 30).unwrap();
    let meas = synthesize_measurements(&truth, 0.02, seed + 100);
    let unknowns: Vec<Sym> = ["k_lrb", "alpha", "u_y", "m_in", "k_in", "c_in"].iter().map(|s| sym(s)).collect();
    let design = m.constants_binding();
    let values = perturbed_values(m, &unknowns, 0.2, seed + 200);
    let cfg = UkfConfig::structural(m.states.len(), unknowns.len(), &truth.output_series().rms());
    let t = Instant::now();
    let rec = run_joint_estimation(&JointEstimation {
        model: m,
        measurements: &meas,
        inputs: &inputs,
        unknowns: &unknowns,
        values: &values,
        initial_coefficients: init,
        x0: &zero,
        cfg: &cfg,
        guard: ObservabilityGuard::Enforce { seed },
    })
    .unwrap();
    let secs = t.elapsed().as_secs_f64();

    // curves are compared once every coefficient has settled in the band;
    // a record that never settles is compared whole
    let from = rec.convergence_step(COEF_BAND).unwrap_or(0);
    let truth_f = isolation_device_forces(&truth.state_names, &truth.states, |_, p| design.get(&sym(p)).copied()).unwrap();
    let est_f = isolation_device_forces(&rec.state_names, &rec.states, |k, p| rec.value_at(k, p, &values)).unwrap();
    let rel_rms = |a: &[f64], b: &[f64]| {
        let num: f64 = a[from..].iter().zip(&b[from..]).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = a[from..].iter().map(|x| x * x).sum();
        (num / den).sqrt()
    };
    let drift = |states: &[Vec<f64>], names: &[String]| -> Vec<Vec<f64>> {
        let idx: Vec<usize> = (0..=4).map(|i| names.iter().position(|n| *n == format!("x{i}")).unwrap()).collect();
        states.iter().map(|s| (1..=4).map(|i| s[idx[i]] - s[idx[i - 1]]).collect()).collect()
    };
    let dt_true = drift(&truth.states, &truth.state_names);
    let dt_est = drift(&rec.states, &rec.state_names);
    let drift_err = dt_true[from..]
        .iter()
        .flatten()
        .zip(dt_est[from..].iter().flatten())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    CaseResult {
        coefficients: rec.final_coefficients().to_vec(),
        settled_at: rec.convergence_step(COEF_BAND).map(|k| rec.times[k]),
        lrb_err: rel_rms(&truth_f.f_lrb, &est_f.f_lrb),
        inerter_err: rel_rms(&truth_f.f_in, &est_f.f_in),
        drift_err,
        secs,
    }
}

fn criterion_9() -> Outcome {
    let cases: [(&str, [f64; 6], bool); 3] = [
        ("I", [0.58, 0.79, 1.18, 0.60, 0.77, 1.24], true),
        ("II", [1.88, 0.64, 0.85, 0.61, 1.78, 0.77], true),
        ("III", [1.96, 1.85, 0.75, 1.678, 1.98, 0.78], false),
    ];
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (name, init, required) in cases {
        let mut passed = 0;
        for seed in 1..=3 {
            let r = estimate_case(&init, seed);
            let coef_ok = r.coefficients.iter().all(|a| (a - 1.0).abs() <= COEF_BAND);
            let ok = coef_ok
                && r.lrb_err <= FORCE_RMS_TOL
                && r.inerter_err <= FORCE_RMS_TOL
                && r.drift_err < DRIFT_TOL_M
                && r.secs < ESTIMATION_RUNTIME_S;
            passed += usize::from(ok);
            if !ok && required {
                let c: Vec<String> = r.coefficients.iter().map(|a| format!("{a:.3}")).collect();
                let settled = r.settled_at.map_or("never".to_string(), |t| format!("{t:.1} s"));
                failures.push(format!(
                    "case {name} seed {seed}: alpha [{}] settled {settled}, force err {:.3}/{:.3}, drift err {:.2e} m",
                    c.join(", "),
                    r.lrb_err,
                    r.inerter_err,
                    r.drift_err
                ));
            }
        }
        notes.push(format!("case {name} {passed}/3"));
    }
    if failures.is_empty() {
        Ok(notes.join(", "))
    } else {
        Err(format!("{}; {}", notes.join(", "), failures.join("; ")))
    }
}

fn fd_check() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for case in [BenchmarkCase::IsolatedInerter, BenchmarkCase::ViscousWind, BenchmarkCase::TopFloorNes] {
        let spec = BenchmarkSpec::default_for(case);
        let b = spec.build(&spec.default_sensors(), None).unwrap();
        let m = &b.model;
        let mut bind = m.constants_binding();
        for s in m.states.iter().chain(&m.inputs_measured).chain(&m.inputs_unmeasured) {
            bind.insert(*s, rng.random_range(0.05..0.3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        }
        for e in m.dynamics.iter().chain(&m.outputs) {
            for s in &m.states {
                let d = e.differentiate(*s).evaluate(&bind).unwrap();
                let x = bind[s];
                let h = 1e-6 * x.abs().max(1e-3);
                let mut hi = bind.clone();
                hi.insert(*s, x + h);
                let mut lo = bind.clone();
                lo.insert(*s, x - h);
                let fd = (e.evaluate(&hi).unwrap() - e.evaluate(&lo).unwrap()) / (2.0 * h);
                let scale = d.abs().max(e.evaluate(&bind).unwrap().abs() / x.abs()).max(1e-300);
                worst = worst.max((d - fd).abs() / scale);
            }
        }
    }
    worst
}

fn rk4_ratio() -> f64 {
    let m = parse_model("[states]\nx, v\n[params]\nw2\n[constants]\nw2 = 1\n[dynamics]\nx = v\nv = -w2*x\n[outputs]\ny = x\n")
        .unwrap();
    let w = 2.0 * std::f64::consts::PI;
    let p: Binding = [(sym("w2"), w * w)].into_iter().collect();
    let err = |dt: f64| {
        let t = integrate(&m, &p, &Inputs::new(), &[1.0, 0.0], dt, 1.1, 1).unwrap();
        (t.states.last().unwrap()[0] - (w * 1.1).cos()).abs()
    };
    err(0.02) / err(0.01)
}

fn energy_drift() -> f64 {
    let b = ShearBuildingSpec::five_story();
    let n = b.floors();
    let s = 1e6;
    let mut text = format!(
        "[states]\n{}, {}\n[dynamics]\n",
        (1..=n).map(|i| format!("x{i}")).collect::<Vec<_>>().join(", "),
        (1..=n).map(|i| format!("v{i}")).collect::<Vec<_>>().join(", ")
    );
    for i in 1..=n {
        text += &format!("x{i} = v{i}\n");
    }
    for i in 1..=n {
        let below = if i == 1 { "x1".into() } else { format!("(x{i} - x{})", i - 1) };
        let mut f = format!("-{}*{below}", b.stiffness[i - 1] / s);
        if i < n {
            f += &format!(" + {}*(x{} - x{i})", b.stiffness[i] / s, i + 1);
        }
        text += &format!("v{i} = ({f})/{}\n", b.masses[i - 1] / s);
    }
    text += "[outputs]\ny = x1\n";
    let m = parse_model(&text).unwrap();
    let x0 = [0.01, 0.02, 0.015, 0.0, -0.01, 0.0, 0.0, 0.0, 0.0, 0.0];
    let tr = integrate(&m, &Binding::new(), &Inputs::new(), &x0, 1e-3, 10.0, 10).unwrap();
    let energy = |x: &[f64]| {
        (0..n)
            .map(|i| {
                let d = if i == 0 { x[0] } else { x[i] - x[i - 1] };
                0.5 * b.masses[i] * x[n + i].powi(2) + 0.5 * b.stiffness[i] * d * d
            })
            .sum::<f64>()
    };
    let e0 = energy(&tr.states[0]);
    tr.states.iter().map(|x| ((energy(x) - e0) / e0).abs()).fold(0.0, f64::max)
}

fn moment_gap() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for n in [2, 5, 12, 30] {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let p = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let s = sigma_points(&mean, &p, 3.0 - n as f64 + 0.5).unwrap();
        worst = worst.max((s.mean() - &mean).amax()).max((s.covariance() - &p).amax());
    }
    worst
}

fn criterion_10(reports: &[ObservabilityReport]) -> Outcome {
    let fd = fd_check();
    let ratio = rk4_ratio();
    let drift = energy_drift();
    let moments = moment_gap();
    let monotone = reports.iter().all(|r| r.per_order.windows(2).all(|w| w[1].rank >= w[0].rank));
    let line = format!(
        "fd {fd:.1e}, rk4 ratio {ratio:.2}, energy drift {drift:.1e}, sigma moments {moments:.1e}, rank monotone on {} chains: {monotone}",
        reports.len()
    );
    ensure(
        fd <= FD_TOL && (12.0..=20.0).contains(&ratio) && drift < ENERGY_TOL && moments <= MOMENT_TOL && monotone,
        || line.clone(),
    )?;
    Ok(line)
}

fn run(id: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    match &out {
        Ok(msg) => println!("criterion {id:>2} PASS  {title}: {msg} [{secs:.1} s]"),
        Err(msg) => println!("criterion {id:>2} FAIL  {title}: {msg} [{secs:.1} s]"),
    }
    out.is_ok()
}

fn main() {
    // `cargo test -- --list` and filters from the harness are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut reports = Vec::new();
    let mut ok = true;
    ok &= run(1, "golden null space", criterion_1);
    ok &= run(2, "golden flow", criterion_2);
    ok &= run(3, "scheme check", criterion_3);
    ok &= run(4, "two-story verdicts", || criterion_4(&mut reports));
    ok &= run(5, "building verdicts", || criterion_5(&mut reports));
    ok &= run(6, "linear specialization", criterion_6);
    ok &= run(7, "symmetry output invariance", criterion_7);
    ok &= run(8, "filter oracle equivalence", criterion_8);
    ok &= run(9, "joint estimation convergence", criterion_9);
    ok &= run(10, "numerical hygiene", || criterion_10(&reports));
    if !ok {
        std::process::exit(1);
    }
}
