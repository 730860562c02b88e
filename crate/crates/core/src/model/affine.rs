use std::collections::HashMap;

use super::AugmentedModel;
use crate::error::{Error, Result};
use crate::symbolic::{Expr, Sym};

/// Input-affine split of an augmented model over `x = x_t ⊕ θ`.
#[derive(Clone, Debug)]
pub struct AffineDecomposition {
    pub core: Vec<Sym>,
    pub f_a: Vec<Expr>,
    /// `g_u[j][row]`, one column per measured input.
    pub g_u: Vec<Vec<Expr>>,
    /// `g_w[j][row]`, one column per unmeasured input.
    pub g_w: Vec<Vec<Expr>>,
    pub h_0: Vec<Expr>,
    pub h_u: Vec<Vec<Expr>>,
    pub h_w: Vec<Vec<Expr>>,
    /// `S_j^(n)` over the model's full `q`; empty when the model has no input chain.
    pub selectors: Vec<Vec<Expr>>,
}

/// Split `e = e_0 + Σ c_j s_j` with every `c_j` free of `inputs`.
pub(crate) fn affine_split(e: &Expr, inputs: &[Sym]) -> Result<(Expr, Vec<Expr>)> {
    let zero: HashMap<Sym, Expr> = inputs.iter().map(|s| (*s, Expr::zero())).collect();
    let mut coeffs = Vec::with_capacity(inputs.len());
    for &s in inputs {
        let c = e.differentiate(s);
        for &t in inputs {
            if c.depends_on(t) && !c.differentiate(t).is_identically_zero() {
                return Err(Error::NotAffineInInputs(e.to_string()));
            }
        }
        coeffs.push(c.substitute(&zero));
    }
    Ok((e.substitute(&zero), coeffs))
}

fn transpose(rows: Vec<Vec<Expr>>, cols: usize) -> Vec<Vec<Expr>> {
    (0..cols)
        .map(|j| rows.iter().map(|r| r[j].clone()).collect())
        .collect()
}

/// Decompose dynamics and outputs into drift, input columns and output terms.
pub fn decompose_affine(m: &AugmentedModel) -> Result<AffineDecomposition> {
    let u = m.measured_inputs().to_vec();
    let w = m.unmeasured_inputs().to_vec();
    let mut all = u.clone();
    all.extend(&w);

    let mut f_a = Vec::new();
    let mut rows = Vec::new();
    for e in m.core_dynamics() {
        let (f0, c) = affine_split(e, &all)?;
        f_a.push(f0);
        rows.push(c);
    }
    let cols = transpose(rows, all.len());
    let (g_u, g_w) = (cols[..u.len()].to_vec(), cols[u.len()..].to_vec());

    let mut h_0 = Vec::new();
    let mut rows = Vec::new();
    for e in &m.outputs {
        let (h0, c) = affine_split(e, &all)?;
        h_0.push(h0);
        rows.push(c);
    }
    let cols = transpose(rows, all.len());
    let (h_u, h_w) = (cols[..u.len()].to_vec(), cols[u.len()..].to_vec());

    let mut selectors = Vec::new();
    if m.order >= 0 {
        let n = m.order as usize;
        for j in 0..w.len() {
            let mut s = vec![Expr::zero(); m.q.len()];
            s[m.core_dim() + n * w.len() + j] = Expr::one();
            selectors.push(s);
        }
    }
    Ok(AffineDecomposition {
        core: m.core_states().to_vec(),
        f_a,
        g_u,
        g_w,
        h_0,
        h_u,
        h_w,
        selectors,
    })
}
