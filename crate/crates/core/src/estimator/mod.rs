//! Adaptive unscented Kalman filter for joint state and parameter estimation.
//!
//! The sigma points live on the augmented vector `q ⊕ v_F ⊕ v_H` (state,
//! process noise, measurement noise), so both noises pass through the same
//! transform as the state. Unknown parameters enter as normalized
//! coefficients `η = α η₀` carried as states with zero dynamics.

mod sigma;

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use sigma::{adapt_noise, cholesky_lower, repair_psd, sigma_points, symmetrize, weighted_cross, weighted_mean, SigmaPoints};

use crate::error::{Error, Result};
use crate::lie::DerivativeDefinition;
use crate::model::{augment_parameters, ModelDef};
use crate::observability::{analyze, AnalysisOptions};
use crate::simulator::{Inputs, OdeSystem, TimeSeries, Workspace};
use crate::symbolic::{Binding, Expr, Sym};

/// Innovation covariances worse conditioned than this are refused.
pub const MAX_INNOVATION_CONDITION: f64 = 1e14;

#[derive(Clone, Debug, PartialEq)]
pub struct UkfConfig {
    /// `None`: `3 - N`, the usual choice matching Gaussian kurtosis.
    pub kappa: Option<f64>,
    pub alpha_q: f64,
    pub alpha_r: f64,
    pub q0: DMatrix<f64>,
    pub r0: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    /// RK4 steps per measurement interval.
    pub substeps: usize,
}

impl UkfConfig {
    /// Plain configuration with diagonal covariances and no adaptation.
    pub fn diagonal(q: &[f64], r: &[f64], p: &[f64]) -> UkfConfig {
        UkfConfig {
            kappa: None,
            alpha_q: 0.0,
            alpha_r: 0.0,
            q0: DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            r0: DMatrix::from_diagonal(&DVector::from_column_slice(r)),
            p0: DMatrix::from_diagonal(&DVector::from_column_slice(p)),
            substeps: 30,
        }
    }

    /// Structural preset: state noise `(1e-4 rms y)²`, coefficient noise
    /// `2e-5`, measurement noise `(2e-2 rms y)²`, coefficient prior `2e-4`,
    /// adaptation rates 1/30 and 30 substeps.
    pub fn structural(states: usize, coefficients: usize, rms_y: &[f64]) -> UkfConfig {
        let y_ref = rms_y.iter().fold(0.0f64, |a, v| a.max(*v));
        let state_var = (1e-4 * y_ref).powi(2);
        let mut q = vec![state_var; states];
        q.extend(std::iter::repeat_n(2e-5, coefficients));
        let mut p = vec![state_var; states];
        p.extend(std::iter::repeat_n(2e-4, coefficients));
        let r: Vec<f64> = rms_y.iter().map(|v| (2e-2 * v).powi(2)).collect();
        UkfConfig {
            alpha_q: 1.0 / 30.0,
            alpha_r: 1.0 / 30.0,
            ..UkfConfig::diagonal(&q, &r, &p)
        }
    }

    pub fn state_dim(&self) -> usize {
        self.q0.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.r0.nrows()
    }

    /// Dimension of `q ⊕ v_F ⊕ v_H`.
    pub fn augmented_dim(&self) -> usize {
        2 * self.state_dim() + self.output_dim()
    }

    pub fn resolved_kappa(&self) -> f64 {
        let n = self.augmented_dim() as f64;
        match self.kappa {
            Some(k) => k,
            None if 3.0 - n > -n => 3.0 - n,
            None => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let square = |m: &DMatrix<f64>, k: usize| m.nrows() == k && m.ncols() == k;
        if !square(&self.q0, n) || !square(&self.p0, n) || !square(&self.r0, self.output_dim()) {
            return Err(Error::Config("Q0 and P0 must be square of the same size, R0 square".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_q) || !(0.0..=1.0).contains(&self.alpha_r) {
            return Err(Error::Config("adaptation rates must lie in [0, 1]".into()));
        }
        if !(self.augmented_dim() as f64 + self.resolved_kappa() > 0.0) {
            return Err(Error::Config("N + kappa must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        for (name, m) in [("Q0", &self.q0), ("R0", &self.r0), ("P0", &self.p0)] {
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(Error::Config(format!("{name} is not symmetric")));
            }
            let low = SymmetricEigen::new(m.clone()).eigenvalues.min();
            if low < -1e-12 * m.amax().max(1.0) {
                return Err(Error::Config(format!("{name} is not positive semidefinite")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UkfState {
    pub mean: DVector<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub step: usize,
}

impl UkfState {
    pub fn new(mean: Vec<f64>, cfg: &UkfConfig) -> Result<UkfState> {
        cfg.validate()?;
        if mean.len() != cfg.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean has {} entries, Q0 is {}x{}",
                mean.len(),
                cfg.state_dim(),
                cfg.state_dim()
            )));
        }
        Ok(UkfState {
            mean: DVector::from_vec(mean),
            p: cfg.p0.clone(),
            q: cfg.q0.clone(),
            r: cfg.r0.clone(),
            step: 0,
        })
    }
}

/// One measurement interval: inputs at both ends.
#[derive(Clone, Copy, Debug)]
pub struct Interval<'a> {
    pub t: f64,
    pub dt: f64,
    pub u0: &'a [f64],
    pub u1: &'a [f64],
}

/// By-products of a step.
#[derive(Clone, Debug)]
pub struct StepInfo {
    pub prior_mean: DVector<f64>,
    pub predicted_output: DVector<f64>,
    pub innovation: DVector<f64>,
    pub gain: DMatrix<f64>,
}

fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = DMatrix::zeros(n, n);
    let mut o = 0;
    for b in blocks {
        m.view_mut((o, o), (b.nrows(), b.ncols())).copy_from(b);
        o += b.nrows();
    }
    m
}

fn augmented_points(s: &UkfState, mean: &DVector<f64>, p: &DMatrix<f64>, kappa: f64) -> Result<SigmaPoints> {
    let n = mean.len();
    let m = s.r.nrows();
    let mut a = DVector::zeros(2 * n + m);
    a.rows_mut(0, n).copy_from(mean);
    sigma_points(&a, &block_diag(&[p, &s.q, &s.r]), kappa)
}

fn condition(p: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(p.clone()).eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Prediction over one interval and the measurement update with `y`.
pub fn ukf_step(
    s: &UkfState,
    sys: &OdeSystem,
    iv: Interval<'_>,
    y: &[f64],
    cfg: &UkfConfig,
    ws: &mut Workspace,
) -> Result<(UkfState, StepInfo)> {
    let n = s.mean.len();
    let m = s.r.nrows();
    if n != sys.dim() || y.len() != m || sys.outputs_len() != m {
        return Err(Error::DimensionMismatch(format!(
            "filter {n} states / {m} outputs, model {} / {}, measurement {}",
            sys.dim(),
            sys.outputs_len(),
            y.len()
        )));
    }
    let kappa = cfg.resolved_kappa();

    // prediction: only points that move the state need their own propagation
    let pts = augmented_points(s, &s.mean, &s.p, kappa)?;
    let mut base = s.mean.as_slice().to_vec();
    sys.advance(&mut base, iv.t, iv.dt, cfg.substeps, iv.u0, iv.u1, ws)?;
    let mut propagated = Vec::with_capacity(pts.points.len());
    for (j, a) in pts.points.iter().enumerate() {
        let mut x = match pts.column(j) {
            Some(c) if c < n => {
                let mut x = a.as_slice()[..n].to_vec();
                sys.advance(&mut x, iv.t, iv.dt, cfg.substeps, iv.u0, iv.u1, ws)?;
                DVector::from_vec(x)
            }
            _ => DVector::from_column_slice(&base),
        };
        x += a.rows(n, n);
        propagated.push(x);
    }
    let prior = weighted_mean(&propagated, &pts.weights);
    let mut p_prior = weighted_cross(&propagated, &prior, &propagated, &prior, &pts.weights);
    symmetrize(&mut p_prior);
    repair_psd(&mut p_prior);

    // measurement: fresh points around the prior
    let pts = augmented_points(s, &prior, &p_prior, kappa)?;
    let mut states = Vec::with_capacity(pts.points.len());
    let mut outputs = Vec::with_capacity(pts.points.len());
    let mut yj = vec![0.0; m];
    for a in &pts.points {
        let x = a.rows(0, n).into_owned();
        sys.output(x.as_slice(), iv.u1, ws, &mut yj)?;
        outputs.push(DVector::from_column_slice(&yj) + a.rows(2 * n, m));
        states.push(x);
    }
    let y_hat = weighted_mean(&outputs, &pts.weights);
    let mut p_y = weighted_cross(&outputs, &y_hat, &outputs, &y_hat, &pts.weights);
    symmetrize(&mut p_y);
    let x_mean = weighted_mean(&states, &pts.weights);
    let p_xy = weighted_cross(&states, &x_mean, &outputs, &y_hat, &pts.weights);
    let cond = condition(&p_y);
    if !(cond <= MAX_INNOVATION_CONDITION) {
        return Err(Error::InnovationCovarianceSingular(cond));
    }
    let p_y_inv = p_y.clone().try_inverse().ok_or(Error::InnovationCovarianceSingular(cond))?;
    let gain = &p_xy * p_y_inv;
    let d = DVector::from_column_slice(y) - &y_hat;
    let mean = &prior + &gain * &d;
    let mut p = &p_prior - &gain * &p_y * gain.transpose();
    symmetrize(&mut p);
    repair_psd(&mut p);
    if !mean.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState(iv.t + iv.dt));
    }
    let (q, r) = adapt_noise(&s.q, &s.r, &d, &gain, cfg.alpha_q, cfg.alpha_r);
    let next = UkfState {
        mean,
        p,
        q,
        r,
        step: s.step + 1,
    };
    Ok((
        next,
        StepInfo {
            prior_mean: prior,
            predicted_output: y_hat,
            innovation: d,
            gain,
        },
    ))
}

/// Symbol carrying the normalized coefficient of `p`.
/// Model constants with every parameter outside `unknowns` scaled by an
/// independent `1 + U(-fraction, fraction)`: the filter's imperfect knowledge
/// of the rest of the structure.
pub fn perturbed_values(m: &ModelDef, unknowns: &[Sym], fraction: f64, seed: u64) -> Binding {
    let mut values = m.constants_binding();
    if fraction <= 0.0 {
        return values;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &m.params {
        if unknowns.contains(p) {
            continue;
        }
        if let Some(v) = values.get_mut(p) {
            *v *= 1.0 + rng.random_range(-fraction..fraction);
        }
    }
    values
}

pub fn coefficient_symbol(p: Sym) -> Sym {
    Sym::new(&format!("{}__coef", p.name()))
}

/// The model with each unknown `η` replaced by `α_η η` and `α_η` appended
/// to the states with zero dynamics.
pub fn joint_system(m: &ModelDef, unknowns: &[Sym], values: &Binding) -> Result<OdeSystem> {
    for u in unknowns {
        if !m.params.contains(u) {
            return Err(Error::UnknownParameter(u.name()));
        }
    }
    let map: HashMap<Sym, Expr> = unknowns
        .iter()
        .map(|p| (*p, Expr::var(coefficient_symbol(*p)) * Expr::var(*p)))
        .collect();
    let mut dynamics: Vec<Expr> = m.dynamics.iter().map(|e| e.substitute(&map)).collect();
    dynamics.extend(unknowns.iter().map(|_| Expr::zero()));
    let outputs: Vec<Expr> = m.outputs.iter().map(|e| e.substitute(&map)).collect();
    let mut states = m.states.clone();
    states.extend(unknowns.iter().map(|p| coefficient_symbol(*p)));
    let mut inputs = m.inputs_measured.clone();
    inputs.extend(&m.inputs_unmeasured);
    let mut bound = m.constants_binding();
    bound.extend(values.iter().map(|(k, v)| (*k, *v)));
    OdeSystem::new(&dynamics, &outputs, &states, &inputs, &bound)
}

/// Guard applied before estimating.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservabilityGuard {
    /// Refuse layouts whose analysis reports a deficiency.
    Enforce { seed: u64 },
    Skip,
}

pub struct JointEstimation<'a> {
    pub model: &'a ModelDef,
    /// One channel per model output, sampled on the filter clock.
    pub measurements: &'a TimeSeries,
    /// Measured inputs; missing unmeasured ones are taken as zero.
    pub inputs: &'a Inputs,
    pub unknowns: &'a [Sym],
    /// Values overriding the model constants; for unknowns these are `η₀`.
    pub values: &'a Binding,
    /// Initial `α_η`, one per unknown.
    pub initial_coefficients: &'a [f64],
    /// Initial dynamic state.
    pub x0: &'a [f64],
    pub cfg: &'a UkfConfig,
    pub guard: ObservabilityGuard,
}

/// Refuses an unobservable layout.
pub fn check_observability(m: &ModelDef, unknowns: &[Sym], seed: u64) -> Result<()> {
    let aug = augment_parameters(m, unknowns)?;
    let base = AnalysisOptions {
        seed,
        ..AnalysisOptions::default()
    };
    let report = if m.inputs_unmeasured.is_empty() {
        match analyze(&aug, &base) {
            Err(Error::DefinitionNotApplicable(_)) => analyze(
                &aug,
                &AnalysisOptions {
                    definition: DerivativeDefinition::GeneralExtended,
                    ..base
                },
            ),
            r => r,
        }
    } else {
        analyze(
            &aug,
            &AnalysisOptions {
                definition: DerivativeDefinition::AffineWithInputs,
                ..base
            },
        )
    }?;
    if report.observable || report.practically_observable {
        Ok(())
    } else {
        Err(Error::ObservabilityRefused(report.deficiency))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationRecord {
    pub times: Vec<f64>,
    pub state_names: Vec<String>,
    pub states: Vec<Vec<f64>>,
    pub unknowns: Vec<String>,
    pub coefficients: Vec<Vec<f64>>,
    pub trace_p: Vec<f64>,
    pub trace_q: Vec<f64>,
    pub trace_r: Vec<f64>,
    pub output_names: Vec<String>,
    pub innovations: Vec<Vec<f64>>,
}

impl EstimationRecord {
    pub fn final_coefficients(&self) -> &[f64] {
        self.coefficients.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// First step from which every coefficient stays within `band` of 1.
    pub fn convergence_step(&self, band: f64) -> Option<usize> {
        let inside = |c: &Vec<f64>| c.iter().all(|a| (a - 1.0).abs() <= band);
        let last_out = self.coefficients.iter().rposition(|c| !inside(c));
        match last_out {
            None => Some(0),
            Some(k) if k + 1 < self.coefficients.len() => Some(k + 1),
            Some(_) => None,
        }
    }

    pub fn state(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.state_names.iter().position(|n| n == name)?;
        Some(self.states.iter().map(|r| r[i]).collect())
    }

    /// Estimated value of `p` at step `k`: `α η₀` for unknowns, else `values`.
    pub fn value_at(&self, k: usize, p: &str, values: &Binding) -> Option<f64> {
        let v = values.get(&Sym::new(p)).copied()?;
        match self.unknowns.iter().position(|u| u == p) {
            Some(i) => Some(self.coefficients[k][i] * v),
            None => Some(v),
        }
    }

    /// `t, states..., alpha_<p>..., trace_p, trace_q, trace_r, innov_<y>...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.state_names.iter().cloned());
        header.extend(self.unknowns.iter().map(|u| format!("alpha_{u}")));
        header.extend(["trace_p", "trace_q", "trace_r"].map(String::from));
        header.extend(self.output_names.iter().map(|y| format!("innov_{y}")));
        out.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut rec = vec![format!("{}", self.times[k])];
            rec.extend(self.states[k].iter().map(|v| format!("{v}")));
            rec.extend(self.coefficients[k].iter().map(|v| format!("{v}")));
            rec.extend([self.trace_p[k], self.trace_q[k], self.trace_r[k]].map(|v| format!("{v}")));
            rec.extend(self.innovations[k].iter().map(|v| format!("{v}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self, cfg: &UkfConfig) -> serde_json::Value {
        let diag = |m: &DMatrix<f64>| m.diagonal().iter().copied().collect::<Vec<f64>>();
        let finals: serde_json::Map<String, serde_json::Value> = self
            .unknowns
            .iter()
            .zip(self.final_coefficients())
            .map(|(u, a)| (u.clone(), serde_json::json!(a)))
            .collect();
        serde_json::json!({
            "final_coefficients": finals,
            "convergence_step": self.convergence_step(0.05),
            "steps": self.times.len(),
            "config": {
                "kappa": cfg.resolved_kappa(),
                "alpha_q": cfg.alpha_q,
                "alpha_r": cfg.alpha_r,
                "substeps": cfg.substeps,
                "q0_diag": diag(&cfg.q0),
                "r0_diag": diag(&cfg.r0),
                "p0_diag": diag(&cfg.p0),
            }
        })
    }
}

pub fn run_joint_estimation(job: &JointEstimation<'_>) -> Result<EstimationRecord> {
    let m = job.model;
    if job.initial_coefficients.len() != job.unknowns.len() || job.x0.len() != m.states.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} unknowns, {} initial states for {}",
            job.initial_coefficients.len(),
            job.unknowns.len(),
            job.x0.len(),
            m.states.len()
        )));
    }
    if job.measurements.channels() != m.outputs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} measurement channels for {} outputs",
            job.measurements.channels(),
            m.outputs.len()
        )));
    }
    if let ObservabilityGuard::Enforce { seed } = job.guard {
        check_observability(m, job.unknowns, seed)?;
    }
    let sys = joint_system(m, job.unknowns, job.values)?;
    let meas = job.measurements;
    let series: Vec<Option<&TimeSeries>> = sys.inputs.iter().map(|s| job.inputs.get(s)).collect();
    for (s, ts) in sys.inputs.iter().zip(&series) {
        if ts.is_none() && m.inputs_measured.contains(s) {
            return Err(Error::Config(format!("no series for measured input `{s}`")));
        }
    }
    let u_at = |t: f64| -> Vec<f64> { series.iter().map(|ts| ts.map_or(0.0, |ts| ts.sample(t, 0))).collect() };

    let mut mean = job.x0.to_vec();
    mean.extend_from_slice(job.initial_coefficients);
    let mut s = UkfState::new(mean, job.cfg)?;
    let n_dyn = m.states.len();
    let mut rec = EstimationRecord {
        times: Vec::with_capacity(meas.len()),
        state_names: m.states.iter().map(|s| s.name()).collect(),
        states: Vec::with_capacity(meas.len()),
        unknowns: job.unknowns.iter().map(|s| s.name()).collect(),
        coefficients: Vec::with_capacity(meas.len()),
        trace_p: Vec::with_capacity(meas.len()),
        trace_q: Vec::with_capacity(meas.len()),
        trace_r: Vec::with_capacity(meas.len()),
        output_names: m.output_names.clone(),
        innovations: Vec::with_capacity(meas.len()),
    };
    let push = |rec: &mut EstimationRecord, s: &UkfState, t: f64, d: Vec<f64>| {
        rec.times.push(t);
        rec.states.push(s.mean.as_slice()[..n_dyn].to_vec());
        rec.coefficients.push(s.mean.as_slice()[n_dyn..].to_vec());
        rec.trace_p.push(s.p.trace());
        rec.trace_q.push(s.q.trace());
        rec.trace_r.push(s.r.trace());
        rec.innovations.push(d);
    };
    push(&mut rec, &s, meas.t0, vec![0.0; m.outputs.len()]);
    let mut ws = Workspace::default();
    let mut u0 = u_at(meas.t0);
    for k in 1..meas.len() {
        let t = meas.time(k - 1);
        let u1 = u_at(meas.time(k));
        let iv = Interval {
            t,
            dt: meas.dt,
            u0: &u0,
            u1: &u1,
        };
        let (next, info) = ukf_step(&s, &sys, iv, &meas.values[k], job.cfg, &mut ws)?;
        s = next;
        push(&mut rec, &s, meas.time(k), info.innovation.as_slice().to_vec());
        u0 = u1;
    }
    Ok(rec)
}
