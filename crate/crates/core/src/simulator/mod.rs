//! Fixed-step simulation of models, measurement synthesis and excitation records.

mod ode;
mod series;

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use ode::{OdeSystem, Workspace, DIVERGENCE_LIMIT};
pub use series::{load_series, store_series, TimeSeries};

use crate::error::{Error, Result};
use crate::model::ModelDef;
use crate::symbolic::{Binding, Sym};

/// Input records by input symbol; channel 0 of each series is used.
pub type Inputs = HashMap<Sym, TimeSeries>;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub state_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn state(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|r| r[i]).collect()
    }

    pub fn output(&self, i: usize) -> Vec<f64> {
        self.outputs.iter().map(|r| r[i]).collect()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn output_series(&self) -> TimeSeries {
        TimeSeries {
            t0: self.times.first().copied().unwrap_or(0.0),
            dt: self.dt(),
            names: self.output_names.clone(),
            values: self.outputs.clone(),
        }
    }

    /// One row per step: `t, states..., outputs...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.state_names.iter().cloned());
        header.extend(self.output_names.iter().cloned());
        out.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![format!("{t}")];
            rec.extend(self.states[i].iter().map(|v| format!("{v}")));
            rec.extend(self.outputs[i].iter().map(|v| format!("{v}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn input_lookup<'a>(sys: &OdeSystem, inputs: &'a Inputs) -> Result<Vec<&'a TimeSeries>> {
    sys.inputs
        .iter()
        .map(|s| {
            inputs
                .get(s)
                .ok_or_else(|| Error::Config(format!("no series for input `{s}`")))
        })
        .collect()
}

/// Integrate a compiled system on the `dt` grid, `substeps` RK4 steps per
/// interval. Inputs are sampled on the grid and interpolated linearly inside.
pub fn integrate_system(
    sys: &OdeSystem,
    inputs: &Inputs,
    x0: &[f64],
    dt: f64,
    t_end: f64,
    substeps: usize,
) -> Result<Trajectory> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries for {} states",
            x0.len(),
            sys.dim()
        )));
    }
    if !(dt > 0.0) || substeps == 0 || !(t_end >= 0.0) {
        return Err(Error::Config("need dt > 0, substeps >= 1 and t_end >= 0".into()));
    }
    let series = input_lookup(sys, inputs)?;
    for (s, ts) in sys.inputs.iter().zip(&series) {
        if ts.t0 > 1e-9 * dt || ts.t_end() < t_end - 1e-9 * dt.max(t_end) {
            return Err(Error::Config(format!("series for `{s}` does not cover [0, {t_end}]")));
        }
    }
    let steps = (t_end / dt).round() as usize;
    let u_at = |t: f64| -> Vec<f64> { series.iter().map(|ts| ts.sample(t, 0)).collect() };
    let mut ws = Workspace::default();
    let mut x = x0.to_vec();
    let mut y = vec![0.0; sys.outputs_len()];
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        state_names: sys.states.iter().map(|s| s.name()).collect(),
        output_names: Vec::new(),
    };
    let mut u0 = u_at(0.0);
    for k in 0..=steps {
        let t = k as f64 * dt;
        sys.output(&x, &u0, &mut ws, &mut y)?;
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.outputs.push(y.clone());
        if k == steps {
            break;
        }
        let u1 = u_at(t + dt);
        sys.advance(&mut x, t, dt, substeps, &u0, &u1, &mut ws)?;
        u0 = u1;
    }
    Ok(traj)
}

/// Integrate a model with its constants overridden by `params`.
pub fn integrate(
    m: &ModelDef,
    params: &Binding,
    inputs: &Inputs,
    x0: &[f64],
    dt: f64,
    t_end: f64,
    substeps: usize,
) -> Result<Trajectory> {
    let sys = OdeSystem::from_model(m, params)?;
    let mut traj = integrate_system(&sys, inputs, x0, dt, t_end, substeps)?;
    traj.output_names = m.output_names.clone();
    Ok(traj)
}

/// Measurement noise level per output channel.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseLevel {
    /// Standard deviation as a fraction of the channel rms.
    RmsFraction(f64),
    /// Absolute standard deviation.
    Absolute(f64),
}

/// Outputs plus zero-mean Gaussian noise, `fraction × rms` per channel.
pub fn synthesize_measurements(traj: &Trajectory, noise_rms_fraction: f64, seed: u64) -> TimeSeries {
    synthesize_with(traj, &NoiseLevel::RmsFraction(noise_rms_fraction), seed)
}

pub fn synthesize_with(traj: &Trajectory, noise: &NoiseLevel, seed: u64) -> TimeSeries {
    let mut ts = traj.output_series();
    let sigma: Vec<f64> = match *noise {
        NoiseLevel::RmsFraction(f) => ts.rms().iter().map(|r| f * r).collect(),
        NoiseLevel::Absolute(s) => vec![s; ts.channels()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for row in &mut ts.values {
        for (v, s) in row.iter_mut().zip(&sigma) {
            if *s > 0.0 {
                *v += s * unit.sample(&mut rng);
            }
        }
    }
    ts
}

/// Kanai-Tajimi filter parameters of a synthetic ground acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundMotionSpec {
    /// Peak ground acceleration (m/s²).
    pub pga: f64,
    /// Soil filter frequency (rad/s) and damping ratio.
    pub omega_g: f64,
    pub zeta_g: f64,
}

impl GroundMotionSpec {
    /// Firm soil.
    pub fn firm(pga: f64) -> GroundMotionSpec {
        GroundMotionSpec {
            pga,
            omega_g: 15.6,
            zeta_g: 0.6,
        }
    }

    /// Soft soil with long-period content, as in near-fault strong motion.
    pub fn soft(pga: f64) -> GroundMotionSpec {
        GroundMotionSpec {
            pga,
            omega_g: 2.0 * std::f64::consts::PI * 0.8,
            zeta_g: 0.4,
        }
    }
}

/// Envelope-modulated Kanai-Tajimi ground acceleration on firm soil scaled to `pga` (m/s²).
pub fn synthetic_ground_motion(duration: f64, dt: f64, pga: f64, seed: u64) -> TimeSeries {
    ground_motion(duration, dt, &GroundMotionSpec::firm(pga), seed)
}

pub fn ground_motion(duration: f64, dt: f64, spec: &GroundMotionSpec, seed: u64) -> TimeSeries {
    let n = (duration / dt).round() as usize + 1;
    let (wg, zg) = (spec.omega_g, spec.zeta_g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (tp, ts) = (0.1 * duration, 0.4 * duration);
    let decay = (0.05f64).ln().abs() / (duration - ts).max(dt);
    let envelope = |t: f64| {
        if t < tp {
            (t / tp).powi(2)
        } else if t < ts {
            1.0
        } else {
            (-decay * (t - ts)).exp()
        }
    };
    let sub = 10;
    let h = dt / sub as f64;
    let (mut xf, mut vf) = (0.0f64, 0.0f64);
    let mut a = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let e = envelope(t) * unit.sample(&mut rng) / h.sqrt();
        for _ in 0..sub {
            let acc = -e - 2.0 * zg * wg * vf - wg * wg * xf;
            vf += h * acc;
            xf += h * vf;
        }
        a.push(-(2.0 * zg * wg * vf + wg * wg * xf));
    }
    let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { spec.pga / peak } else { 0.0 };
    TimeSeries::scalar("ug", 0.0, dt, a.into_iter().map(|v| v * scale).collect())
}

/// Linearly increasing wind load `slope · t · (1 + n(t))`, `n` low-pass
/// filtered Gaussian noise (1 Hz corner) with standard deviation `noise`.
pub fn wind_load(duration: f64, dt: f64, slope: f64, noise: f64, seed: u64) -> TimeSeries {
    let n = (duration / dt).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let tau = 1.0 / (2.0 * std::f64::consts::PI);
    let a = (-dt / tau).exp();
    // AR(1) with unit stationary variance
    let gain = (1.0 - a * a).sqrt();
    let mut state = 0.0;
    let values = (0..n)
        .map(|i| {
            state = a * state + gain * unit.sample(&mut rng);
            let t = i as f64 * dt;
            slope * t * (1.0 + noise * state)
        })
        .collect();
    TimeSeries::scalar("w", 0.0, dt, values)
}

/// Zero record for every input of the model.
pub fn zero_inputs(m: &ModelDef, dt: f64, t_end: f64) -> Inputs {
    let n = (t_end / dt).round() as usize + 1;
    m.inputs_measured
        .iter()
        .chain(&m.inputs_unmeasured)
        .map(|s| (*s, TimeSeries::scalar(&s.name(), 0.0, dt, vec![0.0; n])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    #[test]
    fn ground_motion_is_scaled_and_reproducible() {
        let a = synthetic_ground_motion(10.0, 0.01, 3.0, 4);
        let b = synthetic_ground_motion(10.0, 0.01, 3.0, 4);
        assert_eq!(a, b);
        assert_eq!(a.len(), 1001);
        let peak = a.channel(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 3.0).abs() < 1e-12);
        assert_eq!(a.values[0][0], 0.0);
    }

    #[test]
    fn wind_grows_linearly() {
        let w = wind_load(100.0, 0.1, 2.0, 0.0, 1);
        assert!((w.values[500][0] - 100.0).abs() < 1e-9);
        let noisy = wind_load(100.0, 0.1, 2.0, 0.2, 1);
        let mean: f64 = noisy.channel(0).iter().sum::<f64>() / noisy.len() as f64;
        assert!((mean - 100.0).abs() < 15.0);
    }

    #[test]
    fn missing_input_series_is_reported() {
        let m = parse_model("[states]\nx\n[inputs_measured]\nu\n[dynamics]\nx = -x + u\n[outputs]\ny = x\n").unwrap();
        let err = integrate(&m, &Binding::new(), &Inputs::new(), &[0.0], 0.01, 1.0, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let ok = integrate(&m, &Binding::new(), &zero_inputs(&m, 0.01, 1.0), &[1.0], 0.01, 1.0, 1).unwrap();
        assert!((ok.states[100][0] - (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(ok.output_names, vec!["y".to_string()]);
    }
}
