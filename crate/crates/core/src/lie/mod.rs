//! Stacked Lie derivatives of the output map and their Jacobian.

pub mod jet;
pub mod modp;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{chain_symbol, decompose_affine, AffineDecomposition, AugmentedModel};
use crate::symbolic::{Expr, Sym};

/// The three output Lie-derivative definitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeDefinition {
    /// Words over `{f_a, g_u1, …}`; no unmeasured inputs, input-free outputs.
    AffineNoInput,
    /// Branches over `{f_xw, g_uj}` with the unmeasured-input chain in `z`.
    #[serde(rename = "affine-inputs")]
    AffineWithInputs,
    /// Total time derivative with input derivatives as fresh symbols.
    #[serde(rename = "general")]
    GeneralExtended,
}

impl DerivativeDefinition {
    pub fn label(self) -> &'static str {
        match self {
            DerivativeDefinition::AffineNoInput => "affine-no-input",
            DerivativeDefinition::AffineWithInputs => "affine-inputs",
            DerivativeDefinition::GeneralExtended => "general",
        }
    }

    /// Does `z` grow with the unmeasured-input chain?
    pub fn extends_state(self) -> bool {
        !matches!(self, DerivativeDefinition::AffineNoInput)
    }
}

impl fmt::Display for DerivativeDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DerivativeDefinition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "affine-no-input" | "affine" => Ok(DerivativeDefinition::AffineNoInput),
            "2" | "affine-inputs" | "affine-with-inputs" => Ok(DerivativeDefinition::AffineWithInputs),
            "3" | "general" | "general-extended" => Ok(DerivativeDefinition::GeneralExtended),
            other => Err(Error::Config(format!("unknown derivative definition `{other}`"))),
        }
    }
}

/// State vector `z` used at chain order `n`.
pub fn z_at_order(m: &AugmentedModel, d: DerivativeDefinition, n: usize) -> Vec<Sym> {
    let mut z = m.core_states().to_vec();
    if d.extends_state() {
        z.extend(m.chain(n));
    }
    z
}

/// Symbol for the `i`-th time derivative of a measured input.
pub fn input_derivative(u: Sym, i: usize) -> Sym {
    chain_symbol(u, i)
}

/// Affine split required by the definition, or why the definition does not apply.
pub fn check_applicable(m: &AugmentedModel, d: DerivativeDefinition) -> Result<Option<AffineDecomposition>> {
    let not = |why: String| Error::DefinitionNotApplicable(why);
    match d {
        DerivativeDefinition::AffineNoInput => {
            if !m.unmeasured_inputs().is_empty() {
                return Err(not("affine-no-input requires a model without unmeasured inputs".into()));
            }
            let a = decompose_affine(m).map_err(|e| not(e.to_string()))?;
            if a.h_u.iter().flatten().any(|e| !e.is_zero()) {
                return Err(not("affine-no-input requires outputs free of inputs".into()));
            }
            Ok(Some(a))
        }
        DerivativeDefinition::AffineWithInputs => Ok(Some(decompose_affine(m).map_err(|e| not(e.to_string()))?)),
        DerivativeDefinition::GeneralExtended => Ok(None),
    }
}

/// `(∂Ω/∂z)·S`, simplified.
pub fn lie_derivative_along(omega: &[Expr], s: &[Expr], z: &[Sym]) -> Result<Vec<Expr>> {
    if s.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "vector field has {} entries for {} coordinates",
            s.len(),
            z.len()
        )));
    }
    Ok(omega.iter().map(|w| directional(w, s, z)).collect())
}

fn directional(w: &Expr, s: &[Expr], z: &[Sym]) -> Expr {
    let terms: Vec<Expr> = z
        .iter()
        .zip(s)
        .filter(|(v, f)| !f.is_zero() && w.depends_on(**v))
        .map(|(v, f)| Expr::product(vec![w.differentiate(*v), f.clone()]))
        .collect();
    Expr::sum(terms).simplify()
}

#[derive(Clone, Debug)]
pub struct LieChain {
    pub definition: DerivativeDefinition,
    pub model: AugmentedModel,
    /// `Ω_0 … Ω_n` after pruning constant and repeated entries.
    pub orders: Vec<Vec<Expr>>,
    /// Block `j` holds `∂Ω_j/∂z_j` with `|z_j|` columns.
    pub jacobian_rows: Vec<Vec<Vec<Expr>>>,
    pub z: Vec<Sym>,
    pub n: usize,
    /// Fresh measured-input derivative symbols introduced so far.
    pub input_derivatives: Vec<Sym>,
    affine: Option<AffineDecomposition>,
    seen: HashSet<Expr>,
    prune: bool,
}

impl LieChain {
    /// Order-0 chain.
    pub fn new(m: &AugmentedModel, d: DerivativeDefinition) -> Result<LieChain> {
        LieChain::with_pruning(m, d, true)
    }

    pub fn with_pruning(m: &AugmentedModel, d: DerivativeDefinition, prune: bool) -> Result<LieChain> {
        let affine = check_applicable(m, d)?;
        let omega0: Vec<Expr> = match (&affine, d) {
            (Some(a), DerivativeDefinition::AffineNoInput) => a.h_0.clone(),
            (Some(a), _) => {
                let mut o: Vec<Expr> = (0..a.h_0.len())
                    .map(|i| {
                        let mut t = vec![a.h_0[i].clone()];
                        for (j, &w) in m.unmeasured_inputs().iter().enumerate() {
                            t.push(Expr::product(vec![a.h_w[j][i].clone(), Expr::var(w)]));
                        }
                        Expr::sum(t).simplify()
                    })
                    .collect();
                for col in &a.h_u {
                    o.extend(col.iter().cloned());
                }
                o
            }
            (None, _) => m.outputs.clone(),
        };
        let mut chain = LieChain {
            definition: d,
            model: m.clone(),
            orders: Vec::new(),
            jacobian_rows: Vec::new(),
            z: z_at_order(m, d, 0),
            n: 0,
            input_derivatives: Vec::new(),
            affine,
            seen: HashSet::new(),
            prune,
        };
        let omega0 = chain.filter(omega0);
        chain.push_block(omega0);
        Ok(chain)
    }

    fn filter(&mut self, omega: Vec<Expr>) -> Vec<Expr> {
        if !self.prune {
            return omega;
        }
        let z: HashSet<Sym> = self.z.iter().copied().collect();
        omega
            .into_iter()
            .filter(|e| e.free_symbols().iter().any(|s| z.contains(s)))
            .filter(|e| self.seen.insert(e.clone()))
            .collect()
    }

    fn push_block(&mut self, omega: Vec<Expr>) {
        let rows = omega.iter().map(|w| w.gradient(&self.z)).collect();
        self.jacobian_rows.push(rows);
        self.orders.push(omega);
    }

    /// Vector field of the drift over the current `z` (one row per coordinate).
    fn drift(&self) -> Vec<Expr> {
        let m = &self.model;
        let mut s: Vec<Expr> = match (&self.affine, self.definition) {
            (Some(a), DerivativeDefinition::AffineNoInput) => a.f_a.clone(),
            (Some(a), _) => (0..a.f_a.len())
                .map(|i| {
                    let mut t = vec![a.f_a[i].clone()];
                    for (j, &w) in m.unmeasured_inputs().iter().enumerate() {
                        t.push(Expr::product(vec![a.g_w[j][i].clone(), Expr::var(w)]));
                    }
                    Expr::sum(t).simplify()
                })
                .collect(),
            (None, _) => m.core_dynamics().to_vec(),
        };
        if self.definition.extends_state() {
            for i in 0..=self.n {
                for &w in m.unmeasured_inputs() {
                    s.push(Expr::var(chain_symbol(w, i + 1)));
                }
            }
        }
        s
    }

    /// Input vector fields `g_uj` padded to the current `z`.
    fn input_fields(&self) -> Vec<Vec<Expr>> {
        let Some(a) = &self.affine else {
            return Vec::new();
        };
        a.g_u
            .iter()
            .map(|g| {
                let mut col = g.clone();
                col.resize(self.z.len(), Expr::zero());
                col
            })
            .collect()
    }

    /// One more order.
    pub fn extend(&mut self) -> Result<()> {
        let prev = self.orders.last().cloned().unwrap_or_default();
        let z_prev = self.z.clone();
        let drift = self.drift();
        let mut next = lie_derivative_along(&prev, &drift, &z_prev)?;
        match self.definition {
            DerivativeDefinition::GeneralExtended => {
                let k = self.n;
                let us: Vec<Sym> = self.model.measured_inputs().to_vec();
                for &u in &us {
                    let (from, to) = (input_derivative(u, k), input_derivative(u, k + 1));
                    if !self.input_derivatives.contains(&to) {
                        self.input_derivatives.push(to);
                    }
                    let _ = from;
                }
                for (i, w) in next.iter_mut().enumerate() {
                    let mut extra = Vec::new();
                    for &u in &us {
                        for j in 0..=k {
                            let (uj, uj1) = (input_derivative(u, j), input_derivative(u, j + 1));
                            if prev[i].depends_on(uj) {
                                extra.push(Expr::product(vec![prev[i].differentiate(uj), Expr::var(uj1)]));
                            }
                        }
                    }
                    if !extra.is_empty() {
                        extra.push(w.clone());
                        *w = Expr::sum(extra).simplify();
                    }
                }
            }
            _ => {
                for g in self.input_fields() {
                    next.extend(lie_derivative_along(&prev, &g, &z_prev)?);
                }
            }
        }
        self.n += 1;
        self.z = z_at_order(&self.model, self.definition, self.n);
        let next = self.filter(next);
        self.push_block(next);
        Ok(())
    }

    /// Stacked Jacobian `d^(n)Ω`, earlier blocks zero-padded to `|z|`.
    pub fn jacobian(&self) -> Vec<Vec<Expr>> {
        let width = self.z.len();
        self.jacobian_rows
            .iter()
            .flatten()
            .map(|r| {
                let mut row = r.clone();
                row.resize(width, Expr::zero());
                row
            })
            .collect()
    }

    /// Rows in block order with their order index.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.jacobian_rows.iter().map(Vec::len).collect()
    }

    pub fn total_size(&self) -> usize {
        self.orders.iter().flatten().map(Expr::size).sum()
    }

    /// Symbols other than `z` appearing in the Jacobian (input derivative symbols).
    pub fn extra_symbols(&self) -> Vec<Sym> {
        let z: HashSet<Sym> = self.z.iter().copied().collect();
        let mut out: Vec<Sym> = self
            .jacobian_rows
            .iter()
            .flatten()
            .flatten()
            .flat_map(|e| e.free_symbols())
            .filter(|s| !z.contains(s))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        out.sort();
        out
    }
}

/// Chain extended to order `k_max`.
pub fn build_chain(m: &AugmentedModel, d: DerivativeDefinition, k_max: usize) -> Result<LieChain> {
    let mut c = LieChain::new(m, d)?;
    for _ in 0..k_max {
        c.extend()?;
    }
    Ok(c)
}

/// Advance an existing chain by one order.
pub fn extend_chain(c: &LieChain) -> Result<LieChain> {
    let mut next = c.clone();
    next.extend()?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{augment_parameters, parse_model};
    use crate::symbolic::parse_expr;

    fn exprs(v: &[&str]) -> Vec<Expr> {
        v.iter().map(|s| parse_expr(s).unwrap()).collect()
    }

    #[test]
    fn lie_derivative_examples() {
        let z = [Sym::new("x1"), Sym::new("x2")];
        let s = exprs(&["x2", "-k*x1"]);
        assert_eq!(lie_derivative_along(&exprs(&["x1"]), &s, &z).unwrap(), exprs(&["x2"]));
        assert_eq!(lie_derivative_along(&exprs(&["x2"]), &s, &z).unwrap(), exprs(&["-k*x1"]));
        assert!(lie_derivative_along(&exprs(&["c"]), &s, &z).unwrap()[0].is_zero());
        assert!(lie_derivative_along(&exprs(&["c"]), &s[..1], &z).is_err());
    }

    fn sdof() -> AugmentedModel {
        let m = parse_model(
            "[states]\nx, v\n[params]\nk\n[constants]\nk = 4\n[dynamics]\nx = v\nv = -k*x\n[outputs]\ny = x\n",
        )
        .unwrap();
        augment_parameters(&m, &[Sym::new("k")]).unwrap()
    }

    #[test]
    fn sdof_identity_jacobian() {
        let m = parse_model(
            "[states]\nx, v\n[params]\nk\n[constants]\nk = 4\n[dynamics]\nx = v\nv = -k*x\n[outputs]\ny = x\n",
        )
        .unwrap();
        let a = augment_parameters(&m, &[]).unwrap();
        let c = build_chain(&a, DerivativeDefinition::AffineNoInput, 1).unwrap();
        let j = c.jacobian();
        assert_eq!(j, vec![exprs(&["1", "0"]), exprs(&["0", "1"])]);
    }

    #[test]
    fn sdof_parameter_chain_has_three_columns() {
        let c = build_chain(&sdof(), DerivativeDefinition::AffineNoInput, 3).unwrap();
        assert_eq!(c.z.len(), 3);
        assert!(c.jacobian().iter().all(|r| r.len() == 3));
        assert_eq!(c.orders[2], exprs(&["-k*x"]));
    }

    #[test]
    fn affine_no_input_rejects_unmeasured_inputs() {
        let m = parse_model(
            "[states]\nx, v\n[inputs_unmeasured]\nw\n[dynamics]\nx = v\nv = -x + w\n[outputs]\ny = x\n",
        )
        .unwrap();
        let a = augment_parameters(&m, &[]).unwrap();
        assert!(matches!(
            build_chain(&a, DerivativeDefinition::AffineNoInput, 2),
            Err(Error::DefinitionNotApplicable(_))
        ));
    }

    #[test]
    fn general_definition_adds_input_derivative_terms() {
        let m = parse_model(
            "[states]\nx, v\n[params]\nm\n[inputs_measured]\nu\n[inputs_unmeasured]\nw\n\
             [dynamics]\nx = v\nv = (u + w - x)/m\n[outputs]\na = (u + w - x)/m\n",
        )
        .unwrap();
        let a = augment_parameters(&m, &[Sym::new("m")]).unwrap();
        let c = build_chain(&a, DerivativeDefinition::GeneralExtended, 1).unwrap();
        let expected = parse_expr("(u_d1 + w_d1 - v)/m").unwrap();
        assert!(c.orders[1][0].equivalent(&expected));
        assert_eq!(c.z.len(), 3 + 2);
        assert_eq!(c.input_derivatives, vec![Sym::new("u_d1")]);
    }

    #[test]
    fn linear_chain_spans_observability_matrix() {
        // double integrator with a force input: Ω_1 = [CAx; CB], CB pruned
        let m = parse_model(
            "[states]\nx, v\n[inputs_measured]\nu\n[dynamics]\nx = v\nv = u\n[outputs]\ny = x\n",
        )
        .unwrap();
        let a = augment_parameters(&m, &[]).unwrap();
        let c = build_chain(&a, DerivativeDefinition::AffineNoInput, 2).unwrap();
        assert_eq!(c.jacobian(), vec![exprs(&["1", "0"]), exprs(&["0", "1"])]);
    }
}
