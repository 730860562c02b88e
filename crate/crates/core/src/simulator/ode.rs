//! Compiled right-hand sides and the fixed-step RK4 integrator.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::ModelDef;
use crate::symbolic::{Binding, Expr, Sym, Tape};

/// States beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// `ẋ = f(x, u; p)`, `y = h(x, u; p)` compiled over `[x, u, p]`.
#[derive(Clone, Debug)]
pub struct OdeSystem {
    rhs: Tape,
    out: Tape,
    pub states: Vec<Sym>,
    pub inputs: Vec<Sym>,
    /// Every other symbol, with its value.
    pub fixed: Vec<(Sym, f64)>,
    n_out: usize,
}

/// Reusable buffers for one integration thread.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    arg: Vec<f64>,
    scratch: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    u: Vec<f64>,
}

impl OdeSystem {
    pub fn new(
        dynamics: &[Expr],
        outputs: &[Expr],
        states: &[Sym],
        inputs: &[Sym],
        values: &Binding,
    ) -> Result<OdeSystem> {
        if dynamics.len() != states.len() {
            return Err(Error::ArityMismatch {
                dynamics: dynamics.len(),
                states: states.len(),
            });
        }
        let bound: HashSet<Sym> = states.iter().chain(inputs).copied().collect();
        let mut rest = Vec::new();
        let mut seen = HashSet::new();
        for e in dynamics.iter().chain(outputs) {
            for s in e.free_symbols() {
                if !bound.contains(&s) && seen.insert(s) {
                    let v = *values.get(&s).ok_or_else(|| Error::UnboundVariable(s.name()))?;
                    rest.push((s, v));
                }
            }
        }
        rest.sort_by_key(|(s, _)| *s);
        let mut vars: Vec<Sym> = states.to_vec();
        vars.extend_from_slice(inputs);
        vars.extend(rest.iter().map(|(s, _)| *s));
        Ok(OdeSystem {
            rhs: Tape::compile(dynamics, &vars)?,
            out: Tape::compile(outputs, &vars)?,
            states: states.to_vec(),
            inputs: inputs.to_vec(),
            fixed: rest,
            n_out: outputs.len(),
        })
    }

    /// Model with its constants, overridden by `params`; inputs are the
    /// measured ones followed by the unmeasured ones.
    pub fn from_model(m: &ModelDef, params: &Binding) -> Result<OdeSystem> {
        let mut values = m.constants_binding();
        values.extend(params.iter().map(|(k, v)| (*k, *v)));
        let mut inputs = m.inputs_measured.clone();
        inputs.extend(&m.inputs_unmeasured);
        OdeSystem::new(&m.dynamics, &m.outputs, &m.states, &inputs, &values)
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn outputs_len(&self) -> usize {
        self.n_out
    }

    /// Change the value of a fixed symbol; `false` if it is not one.
    pub fn set_value(&mut self, s: Sym, v: f64) -> bool {
        match self.fixed.iter_mut().find(|(f, _)| *f == s) {
            Some(slot) => {
                slot.1 = v;
                true
            }
            None => false,
        }
    }

    fn load(&self, ws_arg: &mut Vec<f64>, x: &[f64], u: &[f64]) {
        ws_arg.clear();
        ws_arg.extend_from_slice(x);
        ws_arg.extend_from_slice(u);
        ws_arg.extend(self.fixed.iter().map(|(_, v)| *v));
    }

    pub fn derivative(&self, x: &[f64], u: &[f64], ws: &mut Workspace, out: &mut [f64]) -> Result<()> {
        self.load(&mut ws.arg, x, u);
        self.rhs.eval_into(&ws.arg, &mut ws.scratch, out)
    }

    pub fn output(&self, x: &[f64], u: &[f64], ws: &mut Workspace, out: &mut [f64]) -> Result<()> {
        self.load(&mut ws.arg, x, u);
        self.out.eval_into(&ws.arg, &mut ws.scratch, out)
    }

    /// Advance `x` from `t` over `dt` in `substeps` RK4 steps, with the input
    /// interpolated linearly from `u0` (at `t`) to `u1` (at `t + dt`).
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &self,
        x: &mut [f64],
        t: f64,
        dt: f64,
        substeps: usize,
        u0: &[f64],
        u1: &[f64],
        ws: &mut Workspace,
    ) -> Result<()> {
        let n = x.len();
        let h = dt / substeps as f64;
        for k in &mut ws.k {
            k.resize(n, 0.0);
        }
        ws.tmp.resize(n, 0.0);
        let mut u = std::mem::take(&mut ws.u);
        u.resize(u0.len(), 0.0);
        let lerp = |u: &mut Vec<f64>, f: f64| {
            for ((o, a), b) in u.iter_mut().zip(u0).zip(u1) {
                *o = a + (b - a) * f;
            }
        };
        for s in 0..substeps {
            let f0 = s as f64 / substeps as f64;
            let fm = (s as f64 + 0.5) / substeps as f64;
            let f1 = (s + 1) as f64 / substeps as f64;
            let mut k = std::mem::take(&mut ws.k);
            let mut tmp = std::mem::take(&mut ws.tmp);

            lerp(&mut u, f0);
            self.derivative(x, &u, ws, &mut k[0])?;
            lerp(&mut u, fm);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k[0][i];
            }
            self.derivative(&tmp, &u, ws, &mut k[1])?;
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k[1][i];
            }
            self.derivative(&tmp, &u, ws, &mut k[2])?;
            lerp(&mut u, f1);
            for i in 0..n {
                tmp[i] = x[i] + h * k[2][i];
            }
            self.derivative(&tmp, &u, ws, &mut k[3])?;
            let mut ok = true;
            for i in 0..n {
                x[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
                ok &= x[i].is_finite() && x[i].abs() <= DIVERGENCE_LIMIT;
            }
            ws.k = k;
            ws.tmp = tmp;
            if !ok {
                ws.u = u;
                return Err(Error::NonFiniteState(t + (s + 1) as f64 * h));
            }
        }
        ws.u = u;
        Ok(())
    }
}
