use std::collections::HashMap;

use super::ModelDef;
use crate::error::{Error, Result};
use crate::symbolic::{Binding, Expr, Sym};

/// Model with unknown parameters (and optionally an unmeasured-input
/// derivative chain) lifted into the state.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedModel {
    pub base: ModelDef,
    pub unknowns: Vec<Sym>,
    /// Highest unmeasured-input derivative in the state; `-1` when not augmented.
    pub order: i32,
    /// `x_t ⊕ θ ⊕ w^(0) ⊕ … ⊕ w^(n)`.
    pub q: Vec<Sym>,
    pub dynamics: Vec<Expr>,
    pub outputs: Vec<Expr>,
}

/// Symbol of the `i`-th derivative of an unmeasured input; `w^(0)` is `w`.
pub fn chain_symbol(w: Sym, i: usize) -> Sym {
    if i == 0 {
        w
    } else {
        w.derivative(i)
    }
}

impl AugmentedModel {
    pub fn measured_inputs(&self) -> &[Sym] {
        &self.base.inputs_measured
    }

    pub fn unmeasured_inputs(&self) -> &[Sym] {
        &self.base.inputs_unmeasured
    }

    /// Number of leading entries of `q` that are dynamic states or parameters.
    pub fn core_dim(&self) -> usize {
        self.base.states.len() + self.unknowns.len()
    }

    /// `x = x_t ⊕ θ` without the input chain.
    pub fn core_states(&self) -> &[Sym] {
        &self.q[..self.core_dim()]
    }

    pub fn core_dynamics(&self) -> &[Expr] {
        &self.dynamics[..self.core_dim()]
    }

    /// `[w^(0) … w^(n)]` for every unmeasured input, ordered by derivative then input.
    pub fn chain(&self, n: usize) -> Vec<Sym> {
        let mut out = Vec::new();
        for i in 0..=n {
            for &w in self.unmeasured_inputs() {
                out.push(chain_symbol(w, i));
            }
        }
        out
    }

    pub fn index_of(&self, s: Sym) -> Option<usize> {
        self.q.iter().position(|x| *x == s)
    }

    /// Is `s` a strict derivative `w^(j)`, `j ≥ 1`, of some unmeasured input?
    pub fn is_higher_chain_symbol(&self, s: Sym) -> bool {
        let name = s.name();
        self.unmeasured_inputs().iter().any(|w| {
            name.strip_prefix(&format!("{}_d", w.name()))
                .is_some_and(|rest| rest.parse::<usize>().is_ok_and(|j| j >= 1))
        })
    }

    /// Known values used to specialize the model: constants not among the unknowns.
    pub fn known_binding(&self) -> Binding {
        let mut b = self.base.constants_binding();
        for s in &self.unknowns {
            b.remove(s);
        }
        b
    }
}

/// Lift `unknowns` into the state with zero dynamics and substitute every other
/// parameter and constant by its value.
pub fn augment_parameters(m: &ModelDef, unknowns: &[Sym]) -> Result<AugmentedModel> {
    for u in unknowns {
        if !m.params.contains(u) {
            return Err(Error::UnknownParameter(u.name()));
        }
    }
    let mut subs: HashMap<Sym, Expr> = HashMap::new();
    for p in &m.params {
        if unknowns.contains(p) {
            continue;
        }
        let v = m.constant(*p).ok_or_else(|| Error::MissingConstant(p.name()))?;
        subs.insert(*p, Expr::constant(v.clone()));
    }
    for s in m.pure_constants() {
        subs.insert(s, Expr::constant(m.constant(s).unwrap().clone()));
    }
    let mut q = m.states.clone();
    q.extend(unknowns.iter().copied());
    let mut dynamics: Vec<Expr> = m.dynamics.iter().map(|e| e.substitute(&subs)).collect();
    dynamics.extend(unknowns.iter().map(|_| Expr::zero()));
    let outputs = m.outputs.iter().map(|e| e.substitute(&subs)).collect();
    Ok(AugmentedModel {
        base: m.clone(),
        unknowns: unknowns.to_vec(),
        order: -1,
        q,
        dynamics,
        outputs,
    })
}

/// Append `w^(0) … w^(n)` with `ẇ^(i) = w^(i+1)`; `w^(n+1)` stays a free symbol.
pub fn augment_unmeasured_inputs(m: &AugmentedModel, n: usize) -> Result<AugmentedModel> {
    if m.unmeasured_inputs().is_empty() {
        return Err(Error::NoUnmeasuredInputs);
    }
    let core = m.core_dim();
    let mut q = m.q[..core].to_vec();
    let mut dynamics = m.dynamics[..core].to_vec();
    for i in 0..=n {
        for &w in m.unmeasured_inputs() {
            q.push(chain_symbol(w, i));
            dynamics.push(Expr::var(chain_symbol(w, i + 1)));
        }
    }
    Ok(AugmentedModel {
        base: m.base.clone(),
        unknowns: m.unknowns.clone(),
        order: n as i32,
        q,
        dynamics,
        outputs: m.outputs.clone(),
    })
}
