//! Benchmark structures: shear buildings with isolation bearings, inerter
//! dampers, a track NES or fractional-power viscous dampers.
//!
//! Values are SI throughout (kg, m, s, N). Tonnes, kN/mm and mm only
//! appear in the `design` constructors.

mod devices;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use devices::{
    bouc_wen_law, bouc_wen_rate, exponent_ratio, inerter_dynamics, lrb_force, lrb_force_law,
    nes_force, nes_force_law, viscous_force, viscous_force_law, InerterSpec, LrbBoucWenSpec,
    NesSpec, Scalar, ViscousDamperSpec, GRAVITY,
};

use crate::error::{Error, Result};
use crate::model::{augment_parameters, AugmentedModel, ModelDef};
use crate::symbolic::{rational_from_decimal, Expr, Sym};

const TONNE: f64 = 1e3;
const KN_PER_MM: f64 = 1e6;

/// Fixed-base shear building; story `i` joins floor `i - 1` (or the base) to floor `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearBuildingSpec {
    /// Floor masses (kg), bottom up.
    pub masses: Vec<f64>,
    /// Story stiffnesses (N/m).
    pub stiffness: Vec<f64>,
    /// Target modal damping ratios for the first two modes.
    pub damping_ratio: Vec<f64>,
    /// Story heights (m).
    pub heights: Vec<f64>,
}

impl ShearBuildingSpec {
    /// Floors 1 to 4 above the isolation layer.
    pub fn superstructure() -> ShearBuildingSpec {
        ShearBuildingSpec {
            masses: [2335.0, 1928.0, 1807.0, 1800.0].map(|m| m * TONNE).to_vec(),
            stiffness: [1760.0, 2038.0, 1939.0, 2488.0].map(|k| k * KN_PER_MM).to_vec(),
            damping_ratio: vec![0.03; 4],
            heights: vec![5.45, 4.40, 4.40, 3.80],
        }
    }

    /// Five stories without isolation: the isolation slab becomes floor 1 on a
    /// story with the stiffness of the story above it.
    pub fn five_story() -> ShearBuildingSpec {
        ShearBuildingSpec {
            masses: [3057.0, 2335.0, 1928.0, 1807.0, 1800.0].map(|m| m * TONNE).to_vec(),
            stiffness: [1760.0, 1760.0, 2038.0, 1939.0, 2488.0]
                .map(|k| k * KN_PER_MM)
                .to_vec(),
            damping_ratio: vec![0.03; 5],
            heights: vec![5.45, 5.45, 4.40, 4.40, 3.80],
        }
    }

    pub fn floors(&self) -> usize {
        self.masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.floors();
        if n == 0 || self.stiffness.len() != n || self.damping_ratio.len() != n {
            return Err(Error::Benchmark(format!(
                "{} masses, {} stiffnesses, {} damping ratios",
                n,
                self.stiffness.len(),
                self.damping_ratio.len()
            )));
        }
        let positive = self.masses.iter().chain(&self.stiffness).all(|&v| v > 0.0);
        let ratios = self.damping_ratio.iter().all(|&z| (0.0..1.0).contains(&z));
        if !positive || !ratios {
            return Err(Error::Benchmark("masses and stiffnesses must be positive, damping ratios in [0, 1)".into()));
        }
        Ok(())
    }

    fn stiffness_matrix(&self) -> DMatrix<f64> {
        let n = self.floors();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] += self.stiffness[i];
            if i + 1 < n {
                let s = self.stiffness[i + 1];
                k[(i, i)] += s;
                k[(i, i + 1)] -= s;
                k[(i + 1, i)] -= s;
            }
        }
        k
    }

    /// Fixed-base natural circular frequencies (rad/s), ascending.
    pub fn natural_frequencies(&self) -> Vec<f64> {
        let k = self.stiffness_matrix();
        let n = self.floors();
        let a = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (self.masses[i] * self.masses[j]).sqrt());
        let mut w: Vec<f64> = SymmetricEigen::new(a)
            .eigenvalues
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .collect();
        w.sort_by(f64::total_cmp);
        w
    }

    /// `(a0, a1)` of `C = a0 M + a1 K` matching the ratios on modes 1 and 2.
    pub fn rayleigh(&self) -> (f64, f64) {
        let w = self.natural_frequencies();
        let z1 = self.damping_ratio[0];
        if w.len() < 2 {
            return (0.0, 2.0 * z1 / w[0]);
        }
        let z2 = self.damping_ratio[1];
        let (w1, w2) = (w[0], w[1]);
        let d = w2 * w2 - w1 * w1;
        (2.0 * w1 * w2 * (z1 * w2 - z2 * w1) / d, 2.0 * (z2 * w2 - z1 * w1) / d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkCase {
    TwoDofExample,
    IsolatedInerter,
    TopFloorNes,
    ViscousWind,
}

impl BenchmarkCase {
    pub const ALL: [BenchmarkCase; 4] = [
        BenchmarkCase::TwoDofExample,
        BenchmarkCase::IsolatedInerter,
        BenchmarkCase::TopFloorNes,
        BenchmarkCase::ViscousWind,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BenchmarkCase::TwoDofExample => "two-dof",
            BenchmarkCase::IsolatedInerter => "isolated-inerter",
            BenchmarkCase::TopFloorNes => "top-floor-nes",
            BenchmarkCase::ViscousWind => "viscous-wind",
        }
    }
}

impl fmt::Display for BenchmarkCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BenchmarkCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<BenchmarkCase> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        BenchmarkCase::ALL
            .into_iter()
            .find(|c| c.label() == key)
            .ok_or_else(|| Error::Benchmark(format!("unknown case `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    /// Absolute floor acceleration.
    Acceleration,
    /// Floor displacement relative to the ground.
    Displacement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sensor {
    pub kind: SensorKind,
    pub floor: usize,
}

impl Sensor {
    pub fn accel(floor: usize) -> Sensor {
        Sensor {
            kind: SensorKind::Acceleration,
            floor,
        }
    }

    pub fn disp(floor: usize) -> Sensor {
        Sensor {
            kind: SensorKind::Displacement,
            floor,
        }
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            SensorKind::Acceleration => 'a',
            SensorKind::Displacement => 'd',
        };
        write!(f, "{k}{}", self.floor)
    }
}

impl FromStr for Sensor {
    type Err = Error;
    /// `a2` is an accelerometer on floor 2, `d4` a displacement transducer on floor 4.
    fn from_str(s: &str) -> Result<Sensor> {
        let s = s.trim();
        let bad = || Error::Benchmark(format!("bad sensor `{s}` (expected a<floor> or d<floor>)"));
        let mut chars = s.chars();
        let kind = match chars.next() {
            Some('a' | 'A') => SensorKind::Acceleration,
            Some('d' | 'D') => SensorKind::Displacement,
            _ => return Err(bad()),
        };
        let floor = chars.as_str().parse().map_err(|_| bad())?;
        Ok(Sensor { kind, floor })
    }
}

/// Comma- or space-separated sensor list.
pub fn parse_sensors(text: &str) -> Result<Vec<Sensor>> {
    text.split([',', ' '])
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Two-storey isolated example with a hardening isolation spring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoDofSpec {
    pub k1: f64,
    pub dk1: f64,
    pub k2: f64,
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for TwoDofSpec {
    fn default() -> TwoDofSpec {
        TwoDofSpec {
            k1: 1.0,
            dk1: 0.1,
            k2: 2.0,
            m: 1.0,
            c1: 0.05,
            c2: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolatedInerterSpec {
    /// Isolation slab (floor 0) mass (kg).
    pub isolation_mass: f64,
    pub building: ShearBuildingSpec,
    pub lrb: LrbBoucWenSpec,
    /// `None` leaves the isolation layer with the bearings only.
    pub inerter: Option<InerterSpec>,
}

impl Default for IsolatedInerterSpec {
    fn default() -> IsolatedInerterSpec {
        let building = ShearBuildingSpec::superstructure();
        let isolation_mass = 3057.0 * TONNE;
        let lrb = LrbBoucWenSpec::design();
        let total = isolation_mass + building.total_mass();
        let inerter = InerterSpec::design(total, lrb.k_lrb, 0.1, 0.12, 0.013);
        IsolatedInerterSpec {
            isolation_mass,
            building,
            lrb,
            inerter: Some(inerter),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NesBuildingSpec {
    pub building: ShearBuildingSpec,
    pub nes: NesSpec,
}

impl Default for NesBuildingSpec {
    fn default() -> NesBuildingSpec {
        let building = ShearBuildingSpec::five_story();
        let m_n = 0.02 * building.total_mass();
        let w1 = building.natural_frequencies()[0];
        NesBuildingSpec {
            nes: NesSpec {
                m_n,
                c_n: 2.0 * 0.05 * m_n * w1,
                a_n: 1.0,
                g: GRAVITY,
            },
            building,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscousWindSpec {
    pub building: ShearBuildingSpec,
    /// One damper per story.
    pub dampers: Vec<ViscousDamperSpec>,
    /// Share of the wind load `w` acting on each floor; all of it on floor 1 by default.
    pub wind_profile: Vec<f64>,
}

impl Default for ViscousWindSpec {
    fn default() -> ViscousWindSpec {
        let building = ShearBuildingSpec::five_story();
        let n = building.floors();
        ViscousWindSpec {
            dampers: vec![
                ViscousDamperSpec {
                    c: 1e7,
                    alpha: 0.5,
                    rho: 100.0,
                };
                n
            ],
            wind_profile: (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
            building,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BenchmarkSpec {
    TwoDofExample(TwoDofSpec),
    IsolatedInerter(IsolatedInerterSpec),
    TopFloorNes(NesBuildingSpec),
    ViscousWind(ViscousWindSpec),
}

/// A built benchmark: the model, the parameters to identify and the sensor layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub case: BenchmarkCase,
    pub model: ModelDef,
    pub unknowns: Vec<Sym>,
    pub sensors: Vec<Sensor>,
}

impl Benchmark {
    pub fn augment(&self) -> Result<AugmentedModel> {
        augment_parameters(&self.model, &self.unknowns)
    }
}

/// Build a benchmark with its default device values. `unknowns = None` takes
/// the case's default set; the name `w` toggles the wind or disturbance input
/// between unmeasured (listed) and measured (omitted).
pub fn build_benchmark(
    case: BenchmarkCase,
    sensors: &[Sensor],
    unknowns: Option<&[&str]>,
) -> Result<Benchmark> {
    BenchmarkSpec::default_for(case).build(sensors, unknowns)
}

impl BenchmarkSpec {
    pub fn default_for(case: BenchmarkCase) -> BenchmarkSpec {
        match case {
            BenchmarkCase::TwoDofExample => BenchmarkSpec::TwoDofExample(TwoDofSpec::default()),
            BenchmarkCase::IsolatedInerter => {
                BenchmarkSpec::IsolatedInerter(IsolatedInerterSpec::default())
            }
            BenchmarkCase::TopFloorNes => BenchmarkSpec::TopFloorNes(NesBuildingSpec::default()),
            BenchmarkCase::ViscousWind => BenchmarkSpec::ViscousWind(ViscousWindSpec::default()),
        }
    }

    pub fn case(&self) -> BenchmarkCase {
        match self {
            BenchmarkSpec::TwoDofExample(_) => BenchmarkCase::TwoDofExample,
            BenchmarkSpec::IsolatedInerter(_) => BenchmarkCase::IsolatedInerter,
            BenchmarkSpec::TopFloorNes(_) => BenchmarkCase::TopFloorNes,
            BenchmarkSpec::ViscousWind(_) => BenchmarkCase::ViscousWind,
        }
    }

    /// Valid sensor floors.
    pub fn floor_range(&self) -> std::ops::RangeInclusive<usize> {
        match self {
            BenchmarkSpec::TwoDofExample(_) => 1..=2,
            BenchmarkSpec::IsolatedInerter(s) => 0..=s.building.floors(),
            BenchmarkSpec::TopFloorNes(s) => 1..=s.building.floors(),
            BenchmarkSpec::ViscousWind(s) => 1..=s.building.floors(),
        }
    }

    /// Reference sensor layouts.
    pub fn default_sensors(&self) -> Vec<Sensor> {
        match self {
            BenchmarkSpec::TwoDofExample(_) => vec![Sensor::accel(1), Sensor::accel(2)],
            BenchmarkSpec::IsolatedInerter(_) => vec![Sensor::accel(2)],
            BenchmarkSpec::TopFloorNes(_) | BenchmarkSpec::ViscousWind(_) => {
                self.floor_range().map(Sensor::accel).collect()
            }
        }
    }

    pub fn default_unknowns(&self) -> Vec<String> {
        let names = |prefix: &str, r: std::ops::RangeInclusive<usize>| -> Vec<String> {
            r.map(|i| format!("{prefix}{i}")).collect()
        };
        match self {
            BenchmarkSpec::TwoDofExample(_) => ["k1", "dk1", "k2", "m", "w"].map(String::from).to_vec(),
            BenchmarkSpec::IsolatedInerter(s) => {
                let n = s.building.floors();
                let mut u = names("m", 0..=n);
                u.extend(names("c", 1..=n));
                u.extend(names("k", 1..=n));
                u.extend(["k_lrb", "alpha", "u_y"].map(String::from));
                if s.inerter.is_some() {
                    u.extend(["m_in", "k_in", "c_in"].map(String::from));
                }
                u
            }
            BenchmarkSpec::TopFloorNes(_) => ["m_n", "c_n", "a_n"].map(String::from).to_vec(),
            BenchmarkSpec::ViscousWind(s) => {
                let mut u = names("C", 1..=s.building.floors());
                u.push("w".into());
                u
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Benchmark(format!("invalid {what} specification")));
        match self {
            BenchmarkSpec::TwoDofExample(s) => {
                if s.m <= 0.0 || s.k2 <= 0.0 {
                    return bad("two-dof");
                }
            }
            BenchmarkSpec::IsolatedInerter(s) => {
                s.building.validate()?;
                if s.isolation_mass <= 0.0 || !s.lrb.validate() {
                    return bad("bearing");
                }
                if s.inerter.as_ref().is_some_and(|i| !i.validate()) {
                    return bad("inerter");
                }
            }
            BenchmarkSpec::TopFloorNes(s) => {
                s.building.validate()?;
                if !s.nes.validate() {
                    return bad("NES");
                }
            }
            BenchmarkSpec::ViscousWind(s) => {
                s.building.validate()?;
                let n = s.building.floors();
                if s.dampers.len() != n || s.wind_profile.len() != n {
                    return bad("damper or wind profile");
                }
                if !s.dampers.iter().all(ViscousDamperSpec::validate)
                    || s.dampers.iter().any(|d| d.alpha != s.dampers[0].alpha || d.rho != s.dampers[0].rho)
                {
                    return bad("damper");
                }
            }
        }
        Ok(())
    }

    pub fn build(&self, sensors: &[Sensor], unknowns: Option<&[&str]>) -> Result<Benchmark> {
        self.validate()?;
        if sensors.is_empty() {
            return Err(Error::EmptySensorSet);
        }
        let range = self.floor_range();
        if let Some(s) = sensors.iter().find(|s| !range.contains(&s.floor)) {
            return Err(Error::UnknownFloor(s.floor));
        }
        let defaults = self.default_unknowns();
        let unknowns: Vec<String> = match unknowns {
            Some(u) => u.iter().map(|s| s.to_string()).collect(),
            None => defaults,
        };
        let wind_unmeasured = unknowns.iter().any(|u| u == "w");
        let mut d = Draft::default();
        let accel = match self {
            BenchmarkSpec::TwoDofExample(s) => two_dof(&mut d, s, wind_unmeasured),
            BenchmarkSpec::IsolatedInerter(s) => isolated(&mut d, s),
            BenchmarkSpec::TopFloorNes(s) => nes_building(&mut d, s),
            BenchmarkSpec::ViscousWind(s) => viscous_building(&mut d, s, wind_unmeasured),
        };
        let first = *range.start();
        for s in sensors {
            let e = match s.kind {
                SensorKind::Acceleration => accel[s.floor - first].clone(),
                SensorKind::Displacement => Expr::var(d.floor_x[s.floor - first]),
            };
            d.outputs.push((s.to_string(), e));
        }
        let mut params = Vec::new();
        for u in unknowns.iter().filter(|u| *u != "w") {
            let s = Sym::new(u);
            if !d.params.contains(&s) {
                return Err(Error::UnknownParameter(u.clone()));
            }
            params.push(s);
        }
        if unknowns.iter().any(|u| u == "w") && d.inputs_unmeasured.is_empty() {
            return Err(Error::UnknownParameter("w".into()));
        }
        let mut benchmark = vec![
            ("case".to_string(), self.case().label().to_string()),
            ("sensors".to_string(), join(sensors)),
            ("unknowns".to_string(), unknowns.join(", ")),
        ];
        benchmark.extend(d.notes.drain(..));
        let model = d.finish(benchmark)?;
        Ok(Benchmark {
            case: self.case(),
            model,
            unknowns: params,
            sensors: sensors.to_vec(),
        })
    }
}

fn entry<'a>(entries: &'a [(String, String)], key: &str) -> Option<&'a str> {
    entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn parse_number(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Benchmark(format!("`{key} = {v}` is not a number")))
}

impl BenchmarkSpec {
    /// Apply a structural override; returns `false` for keys that are not structural.
    fn apply(&mut self, key: &str, v: &str) -> Result<bool> {
        match (self, key) {
            (BenchmarkSpec::IsolatedInerter(s), "n_lrb") => {
                s.lrb.n_lrb = v.trim().parse().map_err(|_| Error::Benchmark(format!("bad n_lrb `{v}`")))?;
            }
            (BenchmarkSpec::IsolatedInerter(s), "inerter") => match v.trim() {
                "none" | "off" | "false" => s.inerter = None,
                "on" | "true" => {}
                other => return Err(Error::Benchmark(format!("bad inerter `{other}`"))),
            },
            (BenchmarkSpec::IsolatedInerter(s), "inerter_scale") => {
                let f = parse_number(key, v)?;
                s.inerter = s.inerter.as_ref().map(|i| i.scaled(f));
            }
            (BenchmarkSpec::ViscousWind(s), "damper_alpha") => {
                let a = match v.split_once('/') {
                    Some((n, d)) => parse_number(key, n)? / parse_number(key, d)?,
                    None => parse_number(key, v)?,
                };
                for d in &mut s.dampers {
                    d.alpha = a;
                }
            }
            (BenchmarkSpec::ViscousWind(s), "wind_profile") => {
                s.wind_profile = v
                    .split(',')
                    .map(|x| parse_number(key, x))
                    .collect::<Result<_>>()?;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl Benchmark {
    /// Rebuild a benchmark from `[benchmark]` entries: `case`, optional
    /// `sensors` and `unknowns`, structural keys (`n_lrb`, `inerter`,
    /// `inerter_scale`, `damper_alpha`, `wind_profile`) and SI value overrides
    /// of any parameter or constant by name.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Benchmark> {
        let case: BenchmarkCase = entry(entries, "case")
            .ok_or_else(|| Error::Benchmark("missing `case`".into()))?
            .parse()?;
        let mut spec = BenchmarkSpec::default_for(case);
        let mut values = Vec::new();
        for (k, v) in entries {
            if matches!(k.as_str(), "case" | "sensors" | "unknowns") {
                continue;
            }
            if !spec.apply(k, v)? {
                values.push((k.clone(), v.clone()));
            }
        }
        let sensors = match entry(entries, "sensors") {
            Some(s) => parse_sensors(s)?,
            None => spec.default_sensors(),
        };
        let listed: Option<Vec<&str>> = entry(entries, "unknowns").map(|u| {
            u.split([',', ' ']).map(str::trim).filter(|s| !s.is_empty()).collect()
        });
        let mut b = spec.build(&sensors, listed.as_deref())?;
        for (k, v) in values {
            let x = parse_number(&k, &v)?;
            let q = rational_from_decimal(x).ok_or_else(|| Error::Benchmark(format!("`{k}` is not finite")))?;
            let slot = b
                .model
                .constants
                .iter_mut()
                .find(|(s, _)| s.name() == k)
                .ok_or_else(|| Error::Benchmark(format!("unknown override `{k}`")))?;
            slot.1 = q;
            b.model.benchmark.push((k, v));
        }
        Ok(b)
    }

    /// A model file is either a full model (unknowns from its `unknowns`
    /// entry) or a bare `[benchmark]` section naming a case.
    pub fn from_model(m: &ModelDef) -> Result<Benchmark> {
        if m.states.is_empty() {
            return Benchmark::from_entries(&m.benchmark);
        }
        let unknowns = match m.benchmark_entry("unknowns") {
            Some(u) => u
                .split([',', ' '])
                .map(str::trim)
                .filter(|s| !s.is_empty() && *s != "w")
                .map(Sym::new)
                .collect(),
            None => m.params.iter().copied().filter(|p| m.constant(*p).is_none()).collect(),
        };
        let case = m
            .benchmark_entry("case")
            .map(str::parse)
            .transpose()?
            .unwrap_or(BenchmarkCase::TwoDofExample);
        let sensors = m.benchmark_entry("sensors").map(parse_sensors).transpose()?.unwrap_or_default();
        Ok(Benchmark {
            case,
            model: m.clone(),
            unknowns,
            sensors,
        })
    }
}

/// Model under construction.
#[derive(Default)]
struct Draft {
    states: Vec<Sym>,
    dynamics: Vec<Expr>,
    params: Vec<Sym>,
    constants: Vec<(Sym, crate::symbolic::Rational)>,
    inputs_measured: Vec<Sym>,
    inputs_unmeasured: Vec<Sym>,
    outputs: Vec<(String, Expr)>,
    /// Displacement state of each sensor floor.
    floor_x: Vec<Sym>,
    notes: Vec<(String, String)>,
}

impl Draft {
    fn state(&mut self, name: &str) -> Expr {
        let s = Sym::new(name);
        self.states.push(s);
        self.dynamics.push(Expr::zero());
        Expr::var(s)
    }

    fn rate(&mut self, name: &str, rhs: Expr) {
        let i = self.states.iter().position(|s| s.name() == name).expect("declared state");
        self.dynamics[i] = rhs;
    }

    fn value(&mut self, s: Sym, v: f64) {
        let q = rational_from_decimal(v).expect("finite design value");
        self.constants.push((s, q));
    }

    fn param(&mut self, name: &str, v: f64) -> Expr {
        let s = Sym::new(name);
        self.params.push(s);
        self.value(s, v);
        Expr::var(s)
    }

    fn constant(&mut self, name: &str, v: f64) -> Expr {
        let s = Sym::new(name);
        self.value(s, v);
        Expr::var(s)
    }

    fn input(&mut self, name: &str, measured: bool) -> Expr {
        let s = Sym::new(name);
        if measured {
            self.inputs_measured.push(s);
        } else {
            self.inputs_unmeasured.push(s);
        }
        Expr::var(s)
    }

    fn finish(self, benchmark: Vec<(String, String)>) -> Result<ModelDef> {
        let (output_names, outputs) = self.outputs.into_iter().unzip();
        let m = ModelDef {
            states: self.states,
            params: self.params,
            inputs_measured: self.inputs_measured,
            inputs_unmeasured: self.inputs_unmeasured,
            constants: self.constants,
            dynamics: self.dynamics,
            output_names,
            outputs,
            benchmark,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Net story-spring and story-damper force on each floor, for floors above a
/// base moving with `(xb, vb)`.
fn story_forces(x: &[Expr], v: &[Expr], xb: &Expr, vb: &Expr, k: &[Expr], c: &[Expr]) -> Vec<Expr> {
    let n = x.len();
    let story: Vec<Expr> = (0..n)
        .map(|i| {
            let (xl, vl) = if i == 0 { (xb, vb) } else { (&x[i - 1], &v[i - 1]) };
            &k[i] * &(&x[i] - xl) + &c[i] * &(&v[i] - vl)
        })
        .collect();
    (0..n)
        .map(|i| {
            let above = story.get(i + 1).cloned().unwrap_or_else(Expr::zero);
            above - story[i].clone()
        })
        .collect()
}

/// Superstructure states and parameters named by floor, `first..first+n`.
struct Floors {
    x: Vec<Expr>,
    v: Vec<Expr>,
    m: Vec<Expr>,
    k: Vec<Expr>,
    c: Vec<Expr>,
}

fn declare_floors(d: &mut Draft, b: &ShearBuildingSpec, first: usize) -> Floors {
    let n = b.floors();
    let (_, a1) = b.rayleigh();
    let idx = |i: usize| i + first;
    let x: Vec<Expr> = (0..n).map(|i| d.state(&format!("x{}", idx(i)))).collect();
    let v: Vec<Expr> = (0..n).map(|i| d.state(&format!("v{}", idx(i)))).collect();
    let m = (0..n).map(|i| d.param(&format!("m{}", idx(i)), b.masses[i])).collect();
    let c = (0..n)
        .map(|i| d.param(&format!("c{}", idx(i)), a1 * b.stiffness[i]))
        .collect();
    let k = (0..n).map(|i| d.param(&format!("k{}", idx(i)), b.stiffness[i])).collect();
    for i in 0..n {
        d.rate(&format!("x{}", idx(i)), v[i].clone());
    }
    Floors { x, v, m, k, c }
}

fn two_dof(d: &mut Draft, s: &TwoDofSpec, w_unmeasured: bool) -> Vec<Expr> {
    let x1 = d.state("x1");
    let x2 = d.state("x2");
    let v1 = d.state("v1");
    let v2 = d.state("v2");
    d.floor_x = vec![Sym::new("x1"), Sym::new("x2")];
    let k1 = d.param("k1", s.k1);
    let dk1 = d.param("dk1", s.dk1);
    let k2 = d.param("k2", s.k2);
    let m = d.param("m", s.m);
    let c1 = d.param("c1", s.c1);
    let c2 = d.param("c2", s.c2);
    let u = d.input("u", true);
    let w = d.input("w", !w_unmeasured);
    let spring = -((k1 + dk1 * x1.clone()) * x1.clone());
    let a1 = (spring + &k2 * &(&x2 - &x1) - &c1 * &v1 + &c2 * &(&v2 - &v1) + u) / m.clone();
    let a2 = (&k2 * &(&x1 - &x2) - &c2 * &(&v2 - &v1) + w) / m;
    d.rate("x1", v1);
    d.rate("x2", v2);
    d.rate("v1", a1.clone());
    d.rate("v2", a2.clone());
    vec![a1, a2]
}

fn isolated(d: &mut Draft, s: &IsolatedInerterSpec) -> Vec<Expr> {
    let x0 = d.state("x0");
    let sup = declare_floors(d, &s.building, 1);
    let v0 = d.state("v0");
    // keep the displacement block ahead of the velocity block
    let order: Vec<Sym> = {
        let n = s.building.floors();
        let mut o = vec![Sym::new("x0")];
        o.extend((1..=n).map(|i| Sym::new(&format!("x{i}"))));
        o.push(Sym::new("v0"));
        o.extend((1..=n).map(|i| Sym::new(&format!("v{i}"))));
        o
    };
    let z = d.state("z");
    let m0 = d.param("m0", s.isolation_mass);
    d.floor_x = order[..=s.building.floors()].to_vec();

    let lrb = &s.lrb;
    let k_lrb = d.param("k_lrb", lrb.k_lrb);
    let alpha = d.param("alpha", lrb.alpha);
    let u_y = d.param("u_y", lrb.u_y);
    let beta = d.constant("beta", lrb.beta);
    let gamma = d.constant("gamma", lrb.gamma);
    let rho = d.constant("rho", lrb.rho);
    let (a0, _) = s.building.rayleigh();
    let a_ray = d.constant("a_ray", a0);
    let ug = d.input("ug", true);
    d.notes.push(("n_lrb".into(), lrb.n_lrb.to_string()));

    // superstructure: story springs and dampers on top of the slab, plus the
    // mass-proportional part of the Rayleigh damping relative to the slab
    let net = story_forces(&sup.x, &sup.v, &x0, &v0, &sup.k, &sup.c);
    let mut abs_acc = Vec::new();
    let mut slab = -story_forces_base(&sup.x, &sup.v, &x0, &v0, &sup.k, &sup.c);
    for i in 0..sup.x.len() {
        let drag = &a_ray * &(&sup.m[i] * &(&sup.v[i] - &v0));
        slab = slab + drag.clone();
        abs_acc.push((net[i].clone() - drag) / sup.m[i].clone());
    }
    let f_lrb = lrb_force_law(x0.clone(), z.clone(), k_lrb, alpha, u_y.clone());
    let zdot = bouc_wen_law(v0.clone(), z, u_y, beta, gamma, rho, lrb.n_lrb);
    slab = slab - f_lrb;
    if let Some(inr) = &s.inerter {
        let x_in = d.state("x_in");
        let v_in = d.state("v_in");
        let m_in = d.param("m_in", inr.m_in);
        let k_in = d.param("k_in", inr.k_in);
        let c_in = d.param("c_in", inr.c_in);
        let f_in = &k_in * &(&x0 - &x_in);
        d.rate("x_in", v_in.clone());
        d.rate("v_in", (f_in.clone() - c_in * v_in) / m_in);
        slab = slab - f_in;
    }
    let a_slab = slab / m0;
    d.rate("x0", v0);
    d.rate("z", zdot);
    d.rate("v0", &a_slab - &ug);
    for (i, a) in abs_acc.iter().enumerate() {
        d.rate(&format!("v{}", i + 1), a - &ug);
    }
    reorder_states(d, &order);
    let mut acc = vec![a_slab];
    acc.extend(abs_acc);
    acc
}

/// Force of the first story on the base it stands on.
fn story_forces_base(x: &[Expr], v: &[Expr], xb: &Expr, vb: &Expr, k: &[Expr], c: &[Expr]) -> Expr {
    -(&k[0] * &(&x[0] - xb) + &c[0] * &(&v[0] - vb))
}

/// Move `order` to the front of the state list, keeping the rest in place.
fn reorder_states(d: &mut Draft, order: &[Sym]) {
    let mut pairs: Vec<(Sym, Expr)> = d.states.drain(..).zip(d.dynamics.drain(..)).collect();
    let mut front = Vec::new();
    for s in order {
        let i = pairs.iter().position(|(p, _)| p == s).expect("ordered state");
        front.push(pairs.remove(i));
    }
    front.extend(pairs);
    (d.states, d.dynamics) = front.into_iter().unzip();
}

fn fixed_base_floors(d: &mut Draft, b: &ShearBuildingSpec) -> (Floors, Vec<Expr>) {
    let f = declare_floors(d, b, 1);
    d.floor_x = (1..=b.floors()).map(|i| Sym::new(&format!("x{i}"))).collect();
    let (a0, _) = b.rayleigh();
    let a_ray = d.constant("a_ray", a0);
    let zero = Expr::zero();
    let net = story_forces(&f.x, &f.v, &zero, &zero, &f.k, &f.c);
    let forces = net
        .into_iter()
        .enumerate()
        .map(|(i, e)| e - &a_ray * &(&f.m[i] * &f.v[i]))
        .collect();
    (f, forces)
}

fn nes_building(d: &mut Draft, s: &NesBuildingSpec) -> Vec<Expr> {
    let (f, forces) = fixed_base_floors(d, &s.building);
    let x_n = d.state("x_n");
    let v_n = d.state("v_n");
    let m_n = d.param("m_n", s.nes.m_n);
    let c_n = d.param("c_n", s.nes.c_n);
    let a_n = d.param("a_n", s.nes.a_n);
    let g = d.constant("g", s.nes.g);
    let top = f.x.len() - 1;

    // the track force carries ẍ_N and the NES equation carries ẍ_top: solve the
    // two linear equations for both accelerations
    let d_n = Expr::one() + Expr::int(16) * (&a_n * &a_n) * x_n.powi(6);
    let g_n = Expr::int(48) * (&a_n * &a_n) * x_n.powi(5) * v_n.powi(2)
        + Expr::int(4) * a_n.clone() * x_n.powi(3) * g;
    let num = &forces[top] * &d_n + &c_n * &v_n + &m_n * &g_n;
    let den = &f.m[top] * &d_n + &m_n * &(&d_n - &Expr::one());
    let a_top = num / den;
    let a_nes = -((&c_n * &v_n + &m_n * &g_n + &m_n * &a_top) / (&m_n * &d_n));

    let mut acc: Vec<Expr> = (0..top).map(|i| &forces[i] / &f.m[i]).collect();
    acc.push(a_top);
    for (i, a) in acc.iter().enumerate() {
        d.rate(&format!("v{}", i + 1), a.clone());
    }
    d.rate("x_n", v_n);
    d.rate("v_n", a_nes);
    acc
}

fn viscous_building(d: &mut Draft, s: &ViscousWindSpec, w_unmeasured: bool) -> Vec<Expr> {
    let (f, forces) = fixed_base_floors(d, &s.building);
    let n = f.x.len();
    let alpha = exponent_ratio(s.dampers[0].alpha);
    let rho = d.constant("rho", s.dampers[0].rho);
    let cs: Vec<Expr> = (0..n)
        .map(|i| d.param(&format!("C{}", i + 1), s.dampers[i].c))
        .collect();
    let w = d.input("w", !w_unmeasured);
    d.notes.push(("damper_alpha".into(), format!("{}/{}", alpha.0, alpha.1)));
    d.notes.push(("wind_profile".into(), join(&s.wind_profile)));
    let rel: Vec<Expr> = (0..n)
        .map(|i| if i == 0 { f.v[0].clone() } else { &f.v[i] - &f.v[i - 1] })
        .collect();
    let damper: Vec<Expr> = (0..n)
        .map(|i| viscous_force_law(rel[i].clone(), cs[i].clone(), alpha, rho.clone()))
        .collect();
    let acc: Vec<Expr> = (0..n)
        .map(|i| {
            let above = damper.get(i + 1).cloned().unwrap_or_else(Expr::zero);
            let mut total = forces[i].clone() - damper[i].clone() + above;
            if s.wind_profile[i] != 0.0 {
                total = total + Expr::real(s.wind_profile[i]) * w.clone();
            }
            total / f.m[i].clone()
        })
        .collect();
    for (i, a) in acc.iter().enumerate() {
        d.rate(&format!("v{}", i + 1), a.clone());
    }
    acc
}

/// Bearing and inerter forces along a state history of the isolation case.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceForces {
    /// Isolation-layer displacement.
    pub x0: Vec<f64>,
    pub f_lrb: Vec<f64>,
    /// Empty when the model has no inerter.
    pub f_in: Vec<f64>,
}

/// Reconstruct device forces from states named as in the isolation
/// benchmark; `value(k, name)` gives the parameter value at step `k`.
pub fn isolation_device_forces(
    state_names: &[String],
    states: &[Vec<f64>],
    value: impl Fn(usize, &str) -> Option<f64>,
) -> Result<DeviceForces> {
    let idx = |n: &str| state_names.iter().position(|s| s == n);
    let missing = |n: &str| Error::Benchmark(format!("no `{n}` to reconstruct device forces"));
    let (ix0, iz) = (idx("x0").ok_or_else(|| missing("x0"))?, idx("z").ok_or_else(|| missing("z"))?);
    let inerter = idx("x_in");
    let get = |k: usize, n: &str| value(k, n).ok_or_else(|| missing(n));
    let mut out = DeviceForces {
        x0: Vec::with_capacity(states.len()),
        f_lrb: Vec::with_capacity(states.len()),
        f_in: Vec::new(),
    };
    for (k, x) in states.iter().enumerate() {
        out.x0.push(x[ix0]);
        out.f_lrb
            .push(lrb_force_law(x[ix0], x[iz], get(k, "k_lrb")?, get(k, "alpha")?, get(k, "u_y")?));
        if let Some(i) = inerter {
            out.f_in.push(get(k, "k_in")? * (x[ix0] - x[i]));
        }
    }
    Ok(out)
}
