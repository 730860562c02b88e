//! Turning resolved options into models, inputs and output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use liesym::lie::DerivativeDefinition;
use liesym::model::{parse_model, AugmentedModel};
use liesym::observability::{AnalysisOptions, Engine, RankMethod};
use liesym::simulator::{
    ground_motion, load_series, wind_load, GroundMotionSpec, Inputs, TimeSeries,
};
use liesym::structures::{Benchmark, BenchmarkCase, BenchmarkSpec};
use liesym::symbolic::Sym;

use crate::config::Provenance;
use crate::{AnalysisArgs, CliError, ModelArgs, SimArgs};

pub const DEFAULT_OUT: &str = "liesym-out";

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Model from `--model` or `--case`, with the unknowns resolved.
pub fn load_benchmark(a: &ModelArgs) -> Result<Benchmark, CliError> {
    let b = match (&a.model, &a.case) {
        (Some(_), Some(_)) => return Err(usage("--model and --case are exclusive")),
        (None, None) => return Err(usage("one of --model or --case is required")),
        (None, Some(case)) => {
            let case: BenchmarkCase = case.parse()?;
            let spec = BenchmarkSpec::default_for(case);
            let unknowns = a.unknowns.clone().unwrap_or_else(|| spec.default_unknowns());
            let mut entries = vec![("case".to_string(), case.label().to_string())];
            if let Some(s) = &a.sensors {
                entries.push(("sensors".into(), s.clone()));
            }
            entries.push(("unknowns".into(), without_known(unknowns, a)?.join(", ")));
            Benchmark::from_entries(&entries)?
        }
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read model file {}: {e}", path.display())))?;
            let m = parse_model(&text)?;
            if m.states.is_empty() {
                // a bare [benchmark] section: flags refine its entries
                let mut entries: Vec<(String, String)> = m
                    .benchmark
                    .iter()
                    .filter(|(k, _)| {
                        !(k == "sensors" && a.sensors.is_some() || k == "unknowns" && a.unknowns.is_some())
                    })
                    .cloned()
                    .collect();
                if let Some(s) = &a.sensors {
                    entries.push(("sensors".into(), s.clone()));
                }
                let case: BenchmarkCase = entries
                    .iter()
                    .find(|(k, _)| k == "case")
                    .map(|(_, v)| v.parse())
                    .transpose()?
                    .ok_or_else(|| usage("model file has no states and no benchmark case"))?;
                let listed = match (&a.unknowns, entries.iter().find(|(k, _)| k == "unknowns")) {
                    (Some(u), _) => u.clone(),
                    (None, Some((_, v))) => split_list(v),
                    (None, None) => BenchmarkSpec::default_for(case).default_unknowns(),
                };
                entries.retain(|(k, _)| k != "unknowns");
                entries.push(("unknowns".into(), without_known(listed, a)?.join(", ")));
                Benchmark::from_entries(&entries)?
            } else {
                if a.sensors.is_some() {
                    return Err(usage("--sensors applies to built-in cases; this model fixes its outputs"));
                }
                let mut b = Benchmark::from_model(&m)?;
                let listed = match &a.unknowns {
                    Some(u) => Some(u.clone()),
                    // a tagged model with every parameter valued: the case's usual study
                    None if b.unknowns.is_empty() && m.benchmark_entry("unknowns").is_none() => m
                        .benchmark_entry("case")
                        .map(|c| c.parse::<BenchmarkCase>())
                        .transpose()?
                        .map(|c| BenchmarkSpec::default_for(c).default_unknowns()),
                    None => None,
                };
                let listed = listed.unwrap_or_else(|| b.unknowns.iter().map(|s| s.name()).collect());
                let mut unknowns = Vec::new();
                for u in without_known(listed, a)? {
                    let s = Sym::new(&u);
                    if u == "w" {
                        continue;
                    }
                    if !m.params.contains(&s) {
                        return Err(usage(format!("`{u}` is not a parameter of the model")));
                    }
                    unknowns.push(s);
                }
                b.unknowns = unknowns;
                b
            }
        }
    };
    Ok(b)
}

fn split_list(v: &str) -> Vec<String> {
    v.split([',', ' ']).map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn without_known(listed: Vec<String>, a: &ModelArgs) -> Result<Vec<String>, CliError> {
    let known = a.known.clone().unwrap_or_default();
    Ok(listed.into_iter().filter(|u| !known.contains(u)).collect())
}

pub fn analysis_options(a: &AnalysisArgs, m: &AugmentedModel, seed: u64) -> Result<AnalysisOptions, CliError> {
    let definition = match &a.definition {
        Some(d) => d.parse()?,
        None if m.unmeasured_inputs().is_empty() => DerivativeDefinition::AffineNoInput,
        None => DerivativeDefinition::AffineWithInputs,
    };
    let mut opts = AnalysisOptions {
        definition,
        k_max: a.kmax,
        seed,
        ..AnalysisOptions::default()
    };
    if let Some(m) = &a.method {
        opts.method = m.parse::<RankMethod>()?;
    }
    if let Some(e) = &a.engine {
        opts.engine = e.parse::<Engine>()?;
    }
    if let Some(t) = a.trials {
        if t == 0 {
            return Err(usage("--trials must be positive"));
        }
        opts.trials = t;
    }
    Ok(opts)
}

pub fn out_dir(a: &ModelArgs) -> Result<PathBuf, CliError> {
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Write a CSV table with the provenance line on top.
pub fn write_table(
    path: &Path,
    prov: &Provenance,
    body: impl FnOnce(&mut Vec<u8>) -> liesym::Result<()>,
) -> Result<(), CliError> {
    let mut buf = prov.header().into_bytes();
    body(&mut buf)?;
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct SimSettings {
    pub dt: f64,
    pub t_end: f64,
    pub substeps: usize,
    pub noise: f64,
    pub pga: f64,
    pub wind_slope: f64,
}

pub fn sim_settings(a: &SimArgs) -> Result<SimSettings, CliError> {
    let s = SimSettings {
        dt: a.dt.unwrap_or(0.01),
        t_end: a.t_end.unwrap_or(40.0),
        substeps: a.substeps.unwrap_or(30),
        noise: a.noise.unwrap_or(0.02),
        pga: a.pga.unwrap_or(6.0),
        wind_slope: a.wind_slope.unwrap_or(1.0),
    };
    if !(s.dt > 0.0 && s.t_end > s.dt) {
        return Err(usage("need dt > 0 and t-end > dt"));
    }
    if s.substeps == 0 {
        return Err(usage("--substeps must be positive"));
    }
    if !(s.noise >= 0.0) {
        return Err(usage("--noise must be non-negative"));
    }
    Ok(s)
}

/// Inputs from `name=path` records, with the rest synthesized: wind for `w`
/// in the wind case, filtered strong motion otherwise.
pub fn build_inputs(b: &Benchmark, a: &SimArgs, s: &SimSettings, seed: u64) -> Result<Inputs, CliError> {
    let soil = match a.soil.as_deref().unwrap_or("firm") {
        "firm" => GroundMotionSpec::firm(s.pga),
        "soft" => GroundMotionSpec::soft(s.pga),
        other => return Err(usage(format!("unknown soil `{other}` (firm or soft)"))),
    };
    let mut inputs = Inputs::new();
    for spec in a.input.iter().flatten() {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--input expects name=path, got `{spec}`")))?;
        let ts = load_series(path).map_err(|e| usage(format!("input {path}: {e}")))?;
        inputs.insert(Sym::new(name.trim()), pick_channel(&ts, name.trim())?);
    }
    let names: Vec<Sym> = b.model.inputs_measured.iter().chain(&b.model.inputs_unmeasured).copied().collect();
    for (i, u) in names.iter().enumerate() {
        if inputs.contains_key(u) {
            continue;
        }
        let sub_seed = seed.wrapping_add(1000 * i as u64);
        let mut ts = if b.case == BenchmarkCase::ViscousWind && u.name() == "w" {
            wind_load(s.t_end, s.dt, s.wind_slope, 0.3, sub_seed)
        } else {
            ground_motion(s.t_end, s.dt, &soil, sub_seed)
        };
        ts.names = vec![u.name()];
        inputs.insert(*u, ts);
    }
    Ok(inputs)
}

/// The channel called `name`, or the only channel.
pub fn pick_channel(ts: &TimeSeries, name: &str) -> Result<TimeSeries, CliError> {
    let c = match ts.names.iter().position(|n| n == name) {
        Some(c) => c,
        None if ts.channels() == 1 => 0,
        None => return Err(usage(format!("no column `{name}` in input record"))),
    };
    Ok(TimeSeries::scalar(name, ts.t0, ts.dt, ts.channel(c)))
}

/// All inputs side by side, in model order.
pub fn inputs_table(b: &Benchmark, inputs: &Inputs) -> Result<TimeSeries, CliError> {
    let names: Vec<Sym> = b.model.inputs_measured.iter().chain(&b.model.inputs_unmeasured).copied().collect();
    let first = names.first().and_then(|u| inputs.get(u)).ok_or_else(|| usage("model has no inputs"))?;
    let len = names.iter().map(|u| inputs[u].len()).min().unwrap_or(0);
    let values: Vec<Vec<f64>> =
        (0..len).map(|k| names.iter().map(|u| inputs[u].values[k][0]).collect()).collect();
    Ok(TimeSeries::new(first.t0, first.dt, names.iter().map(|u| u.name()).collect(), values)?)
}
