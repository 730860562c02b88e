//! Rank of expression matrices: exact elimination and random specialization.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::modp;
use crate::symbolic::poly::{gcd, Poly};
use crate::symbolic::{Expr, Node, RatFun, Sym, Tape};

pub const PIVOT_THRESHOLD: f64 = 1e-9;
pub const DEFAULT_TRIALS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    /// Fraction-free elimination over the rational-function field.
    Symbolic,
    /// Double-precision evaluation at points drawn uniformly from `[1, 2]`.
    Probabilistic,
    /// Exact elimination over `F_p` at uniformly random residues.
    Modular,
}

impl std::str::FromStr for RankMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symbolic" => Ok(RankMethod::Symbolic),
            "probabilistic" => Ok(RankMethod::Probabilistic),
            "modular" => Ok(RankMethod::Modular),
            other => Err(Error::Config(format!("unknown rank method `{other}`"))),
        }
    }
}

impl std::fmt::Display for RankMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankMethod::Symbolic => "symbolic",
            RankMethod::Probabilistic => "probabilistic",
            RankMethod::Modular => "modular",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankResult {
    pub rank: usize,
    pub target: usize,
    pub method: RankMethod,
    pub trials: usize,
    pub seed: u64,
}

/// Rank of a dense double matrix after row equilibration, by complete pivoting.
pub fn numeric_rank(rows: &[Vec<f64>], cols: usize) -> usize {
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| {
            let s = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            (s > 0.0 && s.is_finite()).then(|| r.iter().map(|x| x / s).collect())
        })
        .collect();
    if a.is_empty() {
        return 0;
    }
    let scale = a
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tol = PIVOT_THRESHOLD * scale;
    let (m, n) = (a.len(), cols);
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while rank < m.min(n) {
        let (mut pi, mut pj, mut best) = (rank, rank, 0.0);
        for (i, row) in a.iter().enumerate().skip(rank) {
            for j in rank..n {
                let v = row[col_perm[j]].abs();
                if v > best {
                    (pi, pj, best) = (i, j, v);
                }
            }
        }
        if best <= tol {
            break;
        }
        a.swap(rank, pi);
        col_perm.swap(rank, pj);
        let pc = col_perm[rank];
        let pivot = a[rank].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[pc] / pivot[pc];
            if f != 0.0 {
                for &c in &col_perm[rank..] {
                    row[c] -= f * pivot[c];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Symbols of `j` in a stable order.
pub fn matrix_symbols(j: &[Vec<Expr>]) -> Vec<Sym> {
    let set: BTreeSet<Sym> = j.iter().flatten().flat_map(Expr::free_symbols).collect();
    set.into_iter().collect()
}

/// Numeric copies of an expression matrix at independent random points.
#[derive(Clone, Debug)]
pub enum Samples {
    Real(Vec<Vec<Vec<f64>>>),
    Modular(Vec<Vec<Vec<u64>>>),
}

impl Samples {
    pub fn trials(&self) -> usize {
        match self {
            Samples::Real(v) => v.len(),
            Samples::Modular(v) => v.len(),
        }
    }

    /// Max rank over samples, keeping only `keep` columns.
    pub fn rank_with(&self, cols: usize, skip: Option<usize>) -> usize {
        let sel = |n: usize| (0..n).filter(move |c| Some(*c) != skip);
        match self {
            Samples::Real(v) => v
                .iter()
                .map(|m| {
                    let sub: Vec<Vec<f64>> = m.iter().map(|r| sel(cols).map(|c| r[c]).collect()).collect();
                    numeric_rank(&sub, cols - skip.is_some() as usize)
                })
                .max()
                .unwrap_or(0),
            Samples::Modular(v) => v
                .iter()
                .map(|m| {
                    let sub: Vec<Vec<u64>> = m.iter().map(|r| sel(cols).map(|c| r[c]).collect()).collect();
                    modp::rank(&sub, cols - skip.is_some() as usize)
                })
                .max()
                .unwrap_or(0),
        }
    }
}

/// Evaluate `j` at `trials` random points; division by zero triggers a resample.
pub fn sample_matrix(j: &[Vec<Expr>], modular: bool, seed: u64, trials: usize) -> Result<Samples> {
    let cols = j.first().map_or(0, Vec::len);
    let syms = matrix_symbols(j);
    let flat: Vec<Expr> = j.iter().flatten().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 10 * trials.max(1);
    if modular {
        let mut out = Vec::new();
        let mut attempts = 0;
        while out.len() < trials {
            attempts += 1;
            if attempts > budget {
                return Err(Error::DegenerateEvaluation(out.len()));
            }
            let vals: HashMap<Sym, u64> = syms.iter().map(|s| (*s, rng.random_range(1..modp::P))).collect();
            let mut memo = HashMap::new();
            let mut m = Vec::with_capacity(j.len());
            let mut ok = true;
            for r in j {
                let mut row = Vec::with_capacity(cols);
                for e in r {
                    match eval_modp(e, &vals, &mut memo) {
                        Some(v) => row.push(v),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    break;
                }
                m.push(row);
            }
            if ok {
                out.push(m);
            }
        }
        return Ok(Samples::Modular(out));
    }
    let tape = Tape::compile(&flat, &syms)?;
    let mut out = Vec::new();
    let mut attempts = 0;
    let mut scratch = Vec::new();
    let mut buf = vec![0.0; flat.len()];
    while out.len() < trials {
        attempts += 1;
        if attempts > budget {
            return Err(Error::DegenerateEvaluation(out.len()));
        }
        let x: Vec<f64> = syms.iter().map(|_| rng.random_range(1.0..2.0)).collect();
        if tape.eval_into(&x, &mut scratch, &mut buf).is_err() || buf.iter().any(|v| !v.is_finite()) {
            continue;
        }
        out.push(buf.chunks(cols.max(1)).map(<[f64]>::to_vec).take(j.len()).collect());
    }
    Ok(Samples::Real(out))
}

/// Reduce an expression mod `p`; `None` on a vanishing denominator or a
/// fractional power without an exact residue. `memo` is keyed by shared-node
/// address and must not outlive the expressions.
pub(crate) fn eval_modp(e: &Expr, vals: &HashMap<Sym, u64>, memo: &mut HashMap<usize, u64>) -> Option<u64> {
    if let Some(v) = memo.get(&e.ptr()) {
        return Some(*v);
    }
    let v = match e.node() {
        Node::Const(q) => modp::from_rational(q)?,
        Node::Var(s) => *vals.get(s)?,
        Node::Sum(t) => {
            let mut acc = 0;
            for x in t {
                acc = modp::add(acc, eval_modp(x, vals, memo)?);
            }
            acc
        }
        Node::Product(t) => {
            let mut acc = 1;
            for x in t {
                acc = modp::mul(acc, eval_modp(x, vals, memo)?);
            }
            acc
        }
        Node::Pow(b, q) => modp::rational_power(eval_modp(b, vals, memo)?, q)?,
        Node::Quot(a, b) => modp::mul(eval_modp(a, vals, memo)?, modp::inv(eval_modp(b, vals, memo)?)?),
        Node::Neg(a) => modp::neg(eval_modp(a, vals, memo)?),
        Node::Tanh(a) => modp::hash_element(eval_modp(a, vals, memo)?, 0x7a11),
    };
    memo.insert(e.ptr(), v);
    Some(v)
}

/// Bareiss elimination on polynomial rows; columns in `skip` are ignored.
fn bareiss_rank(mut a: Vec<Vec<Poly>>) -> usize {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let mut prev = Poly::one();
    let mut rank = 0;
    let mut cols: Vec<usize> = (0..n).collect();
    while rank < m.min(n) {
        // sparsest nonzero pivot in the trailing block
        let mut best: Option<(usize, usize, usize)> = None;
        for (i, row) in a.iter().enumerate().skip(rank) {
            for (jj, &c) in cols.iter().enumerate().skip(rank) {
                let p = &row[c];
                if !p.is_zero() && best.is_none_or(|(_, _, l)| p.len() < l) {
                    best = Some((i, jj, p.len()));
                }
            }
        }
        let Some((pi, pj, _)) = best else { break };
        a.swap(rank, pi);
        cols.swap(rank, pj);
        let pc = cols[rank];
        let pivot_row = a[rank].clone();
        let pivot = pivot_row[pc].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[pc].clone();
            for &c in &cols[rank..] {
                let v = pivot.mul(&row[c]).sub(&f.mul(&pivot_row[c]));
                row[c] = v.div_exact(&prev).expect("Bareiss division is exact");
            }
        }
        prev = pivot;
        rank += 1;
    }
    rank
}

/// Clear denominators row by row.
fn polynomial_rows(j: &[Vec<Expr>], skip: Option<usize>) -> Result<Vec<Vec<Poly>>> {
    j.iter()
        .map(|r| {
            let fs: Vec<RatFun> = r
                .iter()
                .enumerate()
                .filter(|(c, _)| Some(*c) != skip)
                .map(|(_, e)| RatFun::from_expr(e))
                .collect::<Result<_>>()?;
            let mut l = Poly::one();
            for f in &fs {
                let g = gcd(&l, f.denom());
                l = l.mul(&f.denom().div_exact(&g).expect("gcd divides"));
            }
            Ok(fs
                .iter()
                .map(|f| f.numer().mul(&l.div_exact(f.denom()).expect("lcm multiple")))
                .collect())
        })
        .collect()
}

pub fn symbolic_rank(j: &[Vec<Expr>], skip: Option<usize>) -> Result<usize> {
    Ok(bareiss_rank(polynomial_rows(j, skip)?))
}

/// Rank of an expression matrix.
pub fn rank_of(j: &[Vec<Expr>], method: RankMethod, seed: u64, trials: usize) -> Result<RankResult> {
    let target = j.first().map_or(0, Vec::len);
    if j.iter().any(|r| r.len() != target) {
        return Err(Error::DimensionMismatch("ragged Jacobian".into()));
    }
    let (rank, trials) = match method {
        RankMethod::Symbolic => (symbolic_rank(j, None)?, 0),
        RankMethod::Probabilistic | RankMethod::Modular => {
            if method == RankMethod::Probabilistic && trials < 3 {
                return Err(Error::Config("probabilistic rank needs at least 3 trials".into()));
            }
            let s = sample_matrix(j, method == RankMethod::Modular, seed, trials.max(1))?;
            (s.rank_with(target, None), s.trials())
        }
    };
    Ok(RankResult {
        rank,
        target,
        method,
        trials,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::parse_expr;

    fn mat(rows: &[&[&str]]) -> Vec<Vec<Expr>> {
        rows.iter()
            .map(|r| r.iter().map(|s| parse_expr(s).unwrap()).collect())
            .collect()
    }

    #[test]
    fn trivial_ranks() {
        let j = mat(&[&["1", "0"], &["0", "1"], &["-k", "-c"]]);
        for m in [RankMethod::Symbolic, RankMethod::Probabilistic, RankMethod::Modular] {
            assert_eq!(rank_of(&j, m, 1, 5).unwrap().rank, 2);
        }
        let z = mat(&[&["0", "0", "0"], &["0", "0", "0"], &["0", "0", "0"]]);
        for m in [RankMethod::Symbolic, RankMethod::Probabilistic, RankMethod::Modular] {
            assert_eq!(rank_of(&z, m, 1, 5).unwrap().rank, 0);
        }
    }

    #[test]
    fn generic_rank_deficiency() {
        // second row is (x + y) times the first; third is independent
        let j = mat(&[&["x", "y", "1/x"], &["x*(x+y)", "y*(x+y)", "(x+y)/x"], &["1", "tanh(x)", "0"]]);
        for m in [RankMethod::Symbolic, RankMethod::Probabilistic, RankMethod::Modular] {
            assert_eq!(rank_of(&j, m, 3, 5).unwrap().rank, 2, "{m}");
        }
        assert!(rank_of(&j, RankMethod::Probabilistic, 3, 2).is_err());
    }

    #[test]
    fn degenerate_entries_fail_after_resampling() {
        let x = Expr::named("x");
        let zero = Expr::sum(vec![x.clone(), Expr::from_node(Node::Neg(x))]);
        let j = vec![vec![Expr::quot(Expr::one(), zero)]];
        for m in [RankMethod::Probabilistic, RankMethod::Modular] {
            assert!(matches!(rank_of(&j, m, 1, 3), Err(Error::DegenerateEvaluation(0))));
        }
    }

    #[test]
    fn equilibration_handles_mixed_scales() {
        let rows = vec![vec![1e-12, 2e-12], vec![3e9, 1e9], vec![1.0, 2.0]];
        assert_eq!(numeric_rank(&rows, 2), 2);
        let rows = vec![vec![1e-12, 2e-12], vec![3e9, 6e9]];
        assert_eq!(numeric_rank(&rows, 2), 1);
    }
}
