//! State-space input-output models and their augmentations.

mod affine;
mod augment;
mod file;

use std::collections::{BTreeSet, HashMap, HashSet};

pub use affine::{decompose_affine, AffineDecomposition};
pub use augment::{augment_parameters, augment_unmeasured_inputs, chain_symbol, AugmentedModel};
pub use file::{parse_model, serialize_model};

use crate::error::{Error, Result};
use crate::symbolic::{rational_to_f64, Binding, Expr, Rational, Sym};

/// `ẋ = f(x, θ, u, w)`, `y = h(x, θ, u, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDef {
    pub states: Vec<Sym>,
    pub params: Vec<Sym>,
    pub inputs_measured: Vec<Sym>,
    pub inputs_unmeasured: Vec<Sym>,
    /// Pure constants and design values of parameters, in declaration order.
    pub constants: Vec<(Sym, Rational)>,
    /// One right-hand side per state, in state order.
    pub dynamics: Vec<Expr>,
    pub output_names: Vec<String>,
    pub outputs: Vec<Expr>,
    /// Raw `[benchmark]` entries, carried through serialization.
    pub benchmark: Vec<(String, String)>,
}

impl ModelDef {
    /// Check declarations and symbol resolution.
    pub fn validate(&self) -> Result<()> {
        if self.dynamics.len() != self.states.len() {
            return Err(Error::ArityMismatch {
                dynamics: self.dynamics.len(),
                states: self.states.len(),
            });
        }
        if self.output_names.len() != self.outputs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} output names for {} outputs",
                self.output_names.len(),
                self.outputs.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in self.declared_variables() {
            if !seen.insert(s) {
                return Err(Error::DuplicateSymbol(s.name()));
            }
        }
        let params: HashSet<Sym> = self.params.iter().copied().collect();
        let mut constant_names = HashSet::new();
        for (s, _) in &self.constants {
            if !constant_names.insert(*s) {
                return Err(Error::DuplicateSymbol(s.name()));
            }
            if seen.contains(s) && !params.contains(s) {
                return Err(Error::DuplicateSymbol(s.name()));
            }
        }
        for e in self.dynamics.iter().chain(&self.outputs) {
            for s in e.free_symbols() {
                if !seen.contains(&s) && !constant_names.contains(&s) {
                    return Err(Error::UndeclaredSymbol(s.name()));
                }
            }
        }
        Ok(())
    }

    fn declared_variables(&self) -> impl Iterator<Item = Sym> + '_ {
        self.states
            .iter()
            .chain(&self.params)
            .chain(&self.inputs_measured)
            .chain(&self.inputs_unmeasured)
            .copied()
    }

    pub fn constant(&self, s: Sym) -> Option<&Rational> {
        self.constants.iter().find(|(c, _)| *c == s).map(|(_, v)| v)
    }

    /// Constants that are not parameter values.
    pub fn pure_constants(&self) -> Vec<Sym> {
        let params: HashSet<Sym> = self.params.iter().copied().collect();
        self.constants
            .iter()
            .map(|(s, _)| *s)
            .filter(|s| !params.contains(s))
            .collect()
    }

    /// Every constant, including parameter design values, as numbers.
    pub fn constants_binding(&self) -> Binding {
        self.constants
            .iter()
            .map(|(s, v)| (*s, rational_to_f64(v)))
            .collect()
    }

    pub fn constants_map(&self) -> HashMap<Sym, Expr> {
        self.constants
            .iter()
            .map(|(s, v)| (*s, Expr::constant(v.clone())))
            .collect()
    }

    pub fn state_index(&self, s: Sym) -> Option<usize> {
        self.states.iter().position(|x| *x == s)
    }

    pub fn free_symbols(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        for e in self.dynamics.iter().chain(&self.outputs) {
            out.extend(e.free_symbols());
        }
        out
    }

    pub fn benchmark_entry(&self, key: &str) -> Option<&str> {
        self.benchmark
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}
