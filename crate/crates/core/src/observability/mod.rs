//! Observability rank tests, per-state observability and the linear case.

mod linear;
mod rank;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use linear::{
    chain_matches_observability_matrix, discrete_observability_matrix, linear_model, linear_observability_matrix,
};
pub use rank::{
    matrix_symbols, numeric_rank, rank_of, sample_matrix, symbolic_rank, RankMethod, RankResult,
    Samples, DEFAULT_TRIALS, PIVOT_THRESHOLD,
};

use crate::error::Result;
use crate::lie::jet::{jet_chain, JetChain, JetOptions};
use crate::lie::{modp, DerivativeDefinition, LieChain};
use crate::model::AugmentedModel;
use crate::symbolic::{Node, Sym};

/// Largest core (states plus unknowns) the symbolic chain is used for under `Auto`.
pub const SYMBOLIC_CORE_LIMIT: usize = 10;

/// How the derivative chain is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Symbolic for small rational models, jets otherwise.
    #[default]
    Auto,
    Symbolic,
    /// Taylor jets over `F_p`; ranks are always modular.
    Jet,
}

impl std::str::FromStr for Engine {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Engine::Auto),
            "symbolic" => Ok(Engine::Symbolic),
            "jet" => Ok(Engine::Jet),
            other => Err(crate::Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    pub definition: DerivativeDefinition,
    /// Highest order; defaults to `|z_0|`.
    pub k_max: Option<usize>,
    pub method: RankMethod,
    pub engine: Engine,
    pub seed: u64,
    pub trials: usize,
    /// Measured-input realizations for the jet engine.
    pub realizations: usize,
    pub early_stop: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            definition: DerivativeDefinition::AffineNoInput,
            k_max: None,
            method: RankMethod::Probabilistic,
            engine: Engine::Auto,
            seed: 0,
            trials: DEFAULT_TRIALS,
            realizations: 3,
            early_stop: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRank {
    pub order: usize,
    pub rank: usize,
    pub target: usize,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFlag {
    pub name: String,
    pub observable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub definition: DerivativeDefinition,
    pub engine: Engine,
    pub method: RankMethod,
    pub seed: u64,
    pub trials: usize,
    pub per_order: Vec<OrderRank>,
    pub rank: usize,
    pub target: usize,
    pub deficiency: usize,
    pub observable: bool,
    pub states: Vec<StateFlag>,
    pub unobservable: Vec<String>,
    pub practically_observable: bool,
}

impl ObservabilityReport {
    pub fn order(&self) -> usize {
        self.per_order.last().map_or(0, |o| o.order)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `order,rank,target,rows` table.
    pub fn rank_csv(&self) -> String {
        let mut s = String::from("order,rank,target,rows\n");
        for o in &self.per_order {
            let _ = writeln!(s, "{},{},{},{}", o.order, o.rank, o.target, o.rows);
        }
        s
    }
}

/// Saturation test on the per-order history. For chains that grow `z`, the
/// deficiency rather than the rank must hold still.
fn saturated(h: &[OrderRank], extends: bool) -> bool {
    let n = h.len();
    if n < 3 {
        return false;
    }
    let key = |o: &OrderRank| if extends { o.target - o.rank } else { o.rank };
    key(&h[n - 1]) == key(&h[n - 2]) && key(&h[n - 2]) == key(&h[n - 3])
}

fn is_transcendental(m: &AugmentedModel) -> bool {
    fn walk(e: &crate::symbolic::Expr) -> bool {
        match e.node() {
            Node::Tanh(_) => true,
            Node::Pow(b, q) => !q.is_integer() || walk(b),
            _ => e.children().into_iter().any(walk),
        }
    }
    m.dynamics.iter().chain(&m.outputs).any(walk)
}

fn resolve_engine(m: &AugmentedModel, opts: &AnalysisOptions) -> Engine {
    match opts.engine {
        Engine::Auto if is_transcendental(m) || m.core_dim() > SYMBOLIC_CORE_LIMIT => Engine::Jet,
        Engine::Auto => Engine::Symbolic,
        e => e,
    }
}

fn flags(z: &[Sym], observable: &[bool], m: &AugmentedModel) -> (Vec<StateFlag>, Vec<String>, bool) {
    let states: Vec<StateFlag> = z
        .iter()
        .zip(observable)
        .map(|(s, &o)| StateFlag {
            name: s.name(),
            observable: o,
        })
        .collect();
    let unobservable: Vec<String> = states.iter().filter(|f| !f.observable).map(|f| f.name.clone()).collect();
    let practical = z
        .iter()
        .zip(observable)
        .all(|(s, &o)| o || m.is_higher_chain_symbol(*s));
    (states, unobservable, practical)
}

/// Per-state flags from samples: column `m` is observable iff removing it drops the rank by one.
fn column_flags(s: &Samples, cols: usize, rank: usize) -> Vec<bool> {
    (0..cols).map(|c| s.rank_with(cols, Some(c)) + 1 == rank).collect()
}

/// Per-state column-removal test on a built chain.
pub fn partial_observability(c: &LieChain, method: RankMethod, seed: u64) -> Result<Vec<bool>> {
    let j = c.jacobian();
    let cols = c.z.len();
    if method == RankMethod::Symbolic {
        let r = symbolic_rank(&j, None)?;
        return (0..cols).map(|m| Ok(symbolic_rank(&j, Some(m))? + 1 == r)).collect();
    }
    let s = sample_matrix(&j, method == RankMethod::Modular, seed, DEFAULT_TRIALS)?;
    let r = s.rank_with(cols, None);
    Ok(column_flags(&s, cols, r))
}

/// Per-order verdicts on a jet chain.
pub fn jet_partial_observability(j: &JetChain, n: usize) -> Vec<bool> {
    let rows = j.stacked(n);
    let cols = j.width_at(n);
    let r = modp::rank(&rows, cols);
    let s = Samples::Modular(vec![rows]);
    column_flags(&s, cols, r)
}

/// Full rank study with per-order ranks and per-state flags.
pub fn analyze(m: &AugmentedModel, opts: &AnalysisOptions) -> Result<ObservabilityReport> {
    let d = opts.definition;
    let k_max = opts.k_max.unwrap_or(crate::lie::z_at_order(m, d, 0).len());
    let engine = resolve_engine(m, opts);
    let mut history: Vec<OrderRank> = Vec::new();

    if engine == Engine::Jet {
        let j = jet_chain(
            m,
            d,
            &JetOptions {
                order: k_max,
                realizations: opts.realizations,
                seed: opts.seed,
            },
        )?;
        let mut basis = modp::Basis::default();
        let mut rows = 0;
        let mut last = 0;
        for n in 0..=k_max {
            let width = j.width_at(n);
            for r in &j.blocks[n] {
                basis.insert(r, width);
            }
            rows += j.blocks[n].len();
            history.push(OrderRank {
                order: n,
                rank: basis.rank(),
                target: width,
                rows,
            });
            last = n;
            if basis.rank() == width || (opts.early_stop && saturated(&history, d.extends_state())) {
                break;
            }
        }
        let z = &j.z[..j.width_at(last)];
        let observable = jet_partial_observability(&j, last);
        return Ok(finish(m, opts, engine, RankMethod::Modular, 1, history, z, &observable));
    }

    let mut c = LieChain::new(m, d)?;
    let mut trials;
    loop {
        let jac = c.jacobian();
        let r = rank_of(&jac, opts.method, opts.seed.wrapping_add(c.n as u64), opts.trials)?;
        trials = r.trials;
        history.push(OrderRank {
            order: c.n,
            rank: r.rank,
            target: r.target,
            rows: jac.len(),
        });
        if r.rank == r.target || c.n >= k_max || (opts.early_stop && saturated(&history, d.extends_state())) {
            break;
        }
        c.extend()?;
    }
    let observable = partial_observability(&c, opts.method, opts.seed)?;
    let z = c.z.clone();
    Ok(finish(m, opts, engine, opts.method, trials, history, &z, &observable))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    m: &AugmentedModel,
    opts: &AnalysisOptions,
    engine: Engine,
    method: RankMethod,
    trials: usize,
    per_order: Vec<OrderRank>,
    z: &[Sym],
    observable: &[bool],
) -> ObservabilityReport {
    let last = per_order.last().cloned().expect("at least order 0");
    let (states, unobservable, practically_observable) = flags(z, observable, m);
    ObservabilityReport {
        definition: opts.definition,
        engine,
        method,
        seed: opts.seed,
        trials,
        rank: last.rank,
        target: last.target,
        deficiency: last.target - last.rank,
        observable: last.rank == last.target,
        per_order,
        states,
        unobservable,
        practically_observable,
    }
}
