//! Lie symmetries of unobservable mappings: infinitesimals, flows and the
//! restoration checks.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::jet::JetChain;
use crate::lie::{modp, LieChain};
use crate::observability::{matrix_symbols, sample_matrix, Samples};
use crate::symbolic::poly::{gcd, Poly};
use crate::symbolic::{Binding, Expr, Node, RatFun, Sym, Tape};

/// Largest `z` for which the symbolic null space is attempted.
pub const SYMBOLIC_LIMIT: usize = 20;
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
const RESIDUAL_POINTS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Infinitesimal {
    /// Normalized components over `z`; `None` when only the pattern is known.
    pub xi: Option<Vec<Expr>>,
    /// Structurally nonzero components.
    pub support: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfinitesimalBasis {
    pub z: Vec<Sym>,
    pub vectors: Vec<Infinitesimal>,
}

impl InfinitesimalBasis {
    pub fn r(&self) -> usize {
        self.vectors.len()
    }

    /// Components acted on by some symmetry.
    pub fn acted_on(&self) -> Vec<Sym> {
        self.z
            .iter()
            .enumerate()
            .filter(|(i, _)| self.vectors.iter().any(|v| v.support[*i]))
            .map(|(_, s)| *s)
            .collect()
    }
}

fn is_rational(e: &Expr) -> bool {
    match e.node() {
        Node::Tanh(_) => false,
        Node::Pow(b, q) => q.is_integer() && is_rational(b),
        _ => e.children().into_iter().all(is_rational),
    }
}

/// Determinant by Bareiss elimination with row pivoting.
pub fn poly_det(mut a: Vec<Vec<Poly>>) -> Poly {
    let n = a.len();
    if n == 0 {
        return Poly::one();
    }
    let mut prev = Poly::one();
    let mut negate = false;
    for k in 0..n {
        let Some(p) = (k..n).filter(|&i| !a[i][k].is_zero()).min_by_key(|&i| a[i][k].len()) else {
            return Poly::zero();
        };
        if p != k {
            a.swap(p, k);
            negate = !negate;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = a[k][k].mul(&a[i][j]).sub(&a[i][k].mul(&a[k][j]));
                a[i][j] = v.div_exact(&prev).expect("Bareiss division is exact");
            }
            a[i][k] = Poly::zero();
        }
        prev = a[k][k].clone();
    }
    if negate {
        prev.neg()
    } else {
        prev
    }
}

fn clear_row(r: &[RatFun]) -> Vec<Poly> {
    let mut l = Poly::one();
    for f in r {
        let g = gcd(&l, f.denom());
        l = l.mul(&f.denom().div_exact(&g).expect("gcd divides"));
    }
    r.iter()
        .map(|f| f.numer().mul(&l.div_exact(f.denom()).expect("lcm multiple")))
        .collect()
}

fn modular_rows(s: &Samples) -> &Vec<Vec<u64>> {
    match s {
        Samples::Modular(v) => &v[0],
        Samples::Real(_) => unreachable!("modular sample requested"),
    }
}

/// Supports of the reduced null-space basis of a residue matrix.
fn null_supports(rows: &[Vec<u64>], cols: usize) -> Vec<Vec<bool>> {
    modp::null_space(rows, cols)
        .into_iter()
        .map(|v| v.iter().map(|&x| x != 0).collect())
        .collect()
}

/// Null space of the stacked chain Jacobian, normalized so
/// that the first nonzero component is 1.
pub fn infinitesimal_basis(c: &LieChain, seed: u64) -> Result<InfinitesimalBasis> {
    let j = c.jacobian();
    let cols = c.z.len();
    let sample = sample_matrix(&j, true, seed, 1)?;
    let rows = modular_rows(&sample);
    let rank = modp::rank(rows, cols);
    if rank == cols {
        return Ok(InfinitesimalBasis {
            z: c.z.clone(),
            vectors: Vec::new(),
        });
    }
    // every null vector vanishes on the observable columns
    let unobservable: Vec<usize> = (0..cols)
        .filter(|&m| sample.rank_with(cols, Some(m)) == rank)
        .collect();
    let symbolic_ok = cols <= SYMBOLIC_LIMIT && j.iter().flatten().all(is_rational);
    if symbolic_ok {
        if let Some(vectors) = symbolic_null_space(&j, &unobservable, cols, seed)? {
            let basis = InfinitesimalBasis { z: c.z.clone(), vectors };
            if residual_ok(&j, &basis, seed)? {
                return Ok(basis);
            }
        }
    }
    Ok(InfinitesimalBasis {
        z: c.z.clone(),
        vectors: null_supports(rows, cols)
            .into_iter()
            .map(|support| Infinitesimal { xi: None, support })
            .collect(),
    })
}

/// Pattern-only basis from jet rows at order `n`.
pub fn jet_infinitesimal_basis(j: &JetChain, n: usize) -> InfinitesimalBasis {
    let cols = j.width_at(n);
    InfinitesimalBasis {
        z: j.z[..cols].to_vec(),
        vectors: null_supports(&j.stacked(n), cols)
            .into_iter()
            .map(|support| Infinitesimal { xi: None, support })
            .collect(),
    }
}

/// Cramer-rule null vectors of the Jacobian restricted to `u`.
fn symbolic_null_space(j: &[Vec<Expr>], u: &[usize], cols: usize, seed: u64) -> Result<Option<Vec<Infinitesimal>>> {
    let ju: Vec<Vec<Expr>> = j.iter().map(|r| u.iter().map(|&c| r[c].clone()).collect()).collect();
    let sample = sample_matrix(&ju, true, seed ^ 0x5a5a, 1)?;
    let rows = modular_rows(&sample);
    let target = modp::rank(rows, u.len());
    // simplest independent rows first
    let mut order: Vec<usize> = (0..ju.len()).collect();
    order.sort_by_key(|&i| ju[i].iter().map(Expr::size).sum::<usize>());
    let mut basis = modp::Basis::default();
    let mut picked = Vec::new();
    for i in order {
        if basis.rank() == target {
            break;
        }
        if basis.insert(&rows[i], u.len()) {
            picked.push(i);
        }
    }
    let mut reduced: Vec<Vec<u64>> = picked.iter().map(|&i| rows[i].clone()).collect();
    let pivots = modp::row_reduce(&mut reduced, u.len());
    let free: Vec<usize> = (0..u.len()).filter(|c| !pivots.contains(c)).collect();

    let poly_rows: Vec<Vec<Poly>> = picked
        .iter()
        .map(|&i| {
            let fs = ju[i].iter().map(RatFun::from_expr).collect::<Result<Vec<_>>>()?;
            Ok(clear_row(&fs))
        })
        .collect::<Result<_>>()?;
    let minor = |replace: Option<(usize, usize)>| -> Poly {
        let m: Vec<Vec<Poly>> = poly_rows
            .iter()
            .map(|r| {
                pivots
                    .iter()
                    .map(|&pc| match replace {
                        Some((at, with)) if at == pc => r[with].clone(),
                        _ => r[pc].clone(),
                    })
                    .collect()
            })
            .collect();
        poly_det(m)
    };
    let base = minor(None);
    if base.is_zero() {
        return Ok(None);
    }
    let mut out = Vec::new();
    for &f in &free {
        let mut v = vec![Poly::zero(); u.len()];
        v[f] = base.clone();
        for &pc in &pivots {
            v[pc] = minor(Some((pc, f))).neg();
        }
        let g = v.iter().filter(|p| !p.is_zero()).fold(Poly::zero(), |g, p| gcd(&g, p));
        let v: Vec<Poly> = v.iter().map(|p| p.div_exact(&g).unwrap_or_else(|| p.clone())).collect();
        let lead = v.iter().find(|p| !p.is_zero()).expect("nonzero null vector").clone();
        let mut xi = vec![Expr::zero(); cols];
        let mut support = vec![false; cols];
        for (k, &c) in u.iter().enumerate() {
            if !v[k].is_zero() {
                xi[c] = RatFun::new(v[k].clone(), lead.clone())?.to_expr().simplify();
                support[c] = true;
            }
        }
        out.push(Infinitesimal { xi: Some(xi), support });
    }
    Ok(Some(out))
}

/// `max ‖J ξ‖ / (‖J‖ ‖ξ‖)` over random bindings.
pub fn null_residual(j: &[Vec<Expr>], xi: &[Expr], seed: u64) -> Result<f64> {
    let mut all: Vec<Expr> = j.iter().flatten().cloned().collect();
    all.extend(xi.iter().cloned());
    let syms = matrix_symbols(&[all.clone()]);
    let tape = Tape::compile(&all, &syms)?;
    let cols = xi.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < RESIDUAL_POINTS {
        attempts += 1;
        if attempts > 10 * RESIDUAL_POINTS {
            return Err(Error::DegenerateEvaluation(done));
        }
        let x: Vec<f64> = syms.iter().map(|_| rng.random_range(1.0..2.0)).collect();
        let Ok(v) = tape.eval(&x) else { continue };
        let (jv, xv) = v.split_at(v.len() - cols);
        let xn = xv.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut jn: f64 = 0.0;
        let mut res: f64 = 0.0;
        for row in jv.chunks(cols.max(1)) {
            // scale rows so huge high-order entries do not mask small ones
            let s = row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if s == 0.0 {
                continue;
            }
            let dot: f64 = row.iter().zip(xv).map(|(a, b)| a * b).sum();
            res = res.max((dot / s).abs());
            jn = jn.max(row.iter().map(|a| (a / s).powi(2)).sum::<f64>().sqrt());
        }
        if jn > 0.0 && xn > 0.0 {
            worst = worst.max(res / (jn * xn));
        }
        done += 1;
    }
    Ok(worst)
}

fn residual_ok(j: &[Vec<Expr>], b: &InfinitesimalBasis, seed: u64) -> Result<bool> {
    for v in &b.vectors {
        if let Some(xi) = &v.xi {
            if null_residual(j, xi, seed)? > RESIDUAL_TOLERANCE {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Truncated Lie series `φ(z, ε) = Σ c_m ε^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryFlow {
    pub z: Vec<Sym>,
    /// `coefficients[i][m]` multiplies `ε^m` in component `i`.
    pub coefficients: Vec<Vec<Expr>>,
    pub order: usize,
    /// The series is exact: the next coefficient vanishes identically.
    pub terminates: bool,
}

impl SymmetryFlow {
    pub fn evaluate(&self, b: &Binding, eps: f64) -> Result<Vec<f64>> {
        self.coefficients
            .iter()
            .map(|cs| {
                let mut acc = 0.0;
                for c in cs.iter().rev() {
                    acc = acc * eps + c.evaluate(b)?;
                }
                Ok(acc)
            })
            .collect()
    }

    /// Components as polynomials in the symbol `eps`.
    pub fn expressions(&self, eps: Sym) -> Vec<Expr> {
        self.coefficients
            .iter()
            .map(|cs| {
                let terms = cs
                    .iter()
                    .enumerate()
                    .map(|(m, c)| Expr::product(vec![c.clone(), Expr::powi(Expr::var(eps), m as i64)]))
                    .collect();
                Expr::sum(terms).simplify()
            })
            .collect()
    }
}

/// `c_0 = z`, `c_{m+1} = (∂c_m/∂z · ξ)/(m+1)` up to `ε^K`.
pub fn lie_series_flow(xi: &[Expr], z: &[Sym], k: usize) -> Result<SymmetryFlow> {
    if xi.len() != z.len() {
        return Err(Error::DimensionMismatch(format!("ξ has {} entries for {} coordinates", xi.len(), z.len())));
    }
    let k = k.max(1);
    let mut coefficients: Vec<Vec<Expr>> = z.iter().map(|s| vec![Expr::var(*s)]).collect();
    let mut terminates = false;
    for m in 0..=k {
        let next: Vec<Expr> = coefficients
            .iter()
            .map(|cs| {
                let c = &cs[m];
                let d = crate::lie::lie_derivative_along(std::slice::from_ref(c), xi, z).expect("lengths checked");
                (d[0].clone() / Expr::int(m as i64 + 1)).simplify()
            })
            .collect();
        if next.iter().all(|e| e.is_zero() || e.is_identically_zero()) {
            terminates = true;
            break;
        }
        if m == k {
            break;
        }
        for (cs, e) in coefficients.iter_mut().zip(next) {
            cs.push(e);
        }
    }
    let order = coefficients[0].len() - 1;
    for cs in coefficients.iter_mut() {
        while cs.len() > 1 && cs.last().is_some_and(|e| e.is_zero() || e.is_identically_zero()) {
            cs.pop();
        }
    }
    Ok(SymmetryFlow {
        z: z.to_vec(),
        coefficients,
        order,
        terminates,
    })
}

fn contraction(t: &Expr, xi: &[Expr], z: &[Sym]) -> Expr {
    crate::lie::lie_derivative_along(std::slice::from_ref(t), xi, z).expect("lengths checked")[0].clone()
}

/// Structural contraction for pattern-only vectors.
fn touches(t: &Expr, v: &Infinitesimal, z: &[Sym]) -> bool {
    z.iter().zip(&v.support).any(|(s, &on)| on && t.depends_on(*s))
}

/// Scheme 1: does measuring `h_new` break each symmetry?
pub fn destroys_by_measurement(b: &InfinitesimalBasis, h_new: &Expr) -> Vec<bool> {
    b.vectors
        .iter()
        .map(|v| match &v.xi {
            Some(xi) => !contraction(h_new, xi, &b.z).is_identically_zero(),
            None => touches(h_new, v, &b.z),
        })
        .collect()
}

/// Scheme 3: is every coordinate of `t` invariant under each symmetry?
pub fn destroys_by_transformation(b: &InfinitesimalBasis, t: &[Expr]) -> Result<Vec<bool>> {
    if t.len() > b.z.len() {
        return Err(Error::DimensionMismatch(format!(
            "transformation has {} coordinates for a {}-dimensional state",
            t.len(),
            b.z.len()
        )));
    }
    Ok(b.vectors
        .iter()
        .map(|v| {
            t.iter().all(|ti| match &v.xi {
                Some(xi) => contraction(ti, xi, &b.z).is_identically_zero(),
                None => !touches(ti, v, &b.z),
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub terminates: bool,
    pub order: usize,
    /// `component -> [c_0, c_1, …]`, only for components that move.
    pub components: Vec<(String, Vec<String>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub r: usize,
    pub z: Vec<String>,
    /// Components of each infinitesimal, or `"*"` for pattern-only nonzeros.
    pub infinitesimals: Vec<Vec<String>>,
    pub flows: Vec<FlowReport>,
    pub measurement_checks: Vec<(String, Vec<bool>)>,
    pub transformation_checks: Vec<(Vec<String>, Vec<bool>)>,
}

impl SymmetryReport {
    pub fn new(b: &InfinitesimalBasis, k: usize) -> Result<SymmetryReport> {
        let mut infinitesimals = Vec::new();
        let mut flows = Vec::new();
        for v in &b.vectors {
            match &v.xi {
                Some(xi) => {
                    infinitesimals.push(xi.iter().map(Expr::to_string).collect());
                    let f = lie_series_flow(xi, &b.z, k)?;
                    let components = f
                        .coefficients
                        .iter()
                        .zip(&b.z)
                        .filter(|(cs, _)| cs.len() > 1)
                        .map(|(cs, s)| (s.name(), cs.iter().map(Expr::to_string).collect()))
                        .collect();
                    flows.push(FlowReport {
                        terminates: f.terminates,
                        order: f.order,
                        components,
                    });
                }
                None => infinitesimals.push(
                    v.support
                        .iter()
                        .map(|&on| if on { "*".to_string() } else { "0".to_string() })
                        .collect(),
                ),
            }
        }
        Ok(SymmetryReport {
            r: b.r(),
            z: b.z.iter().map(|s| s.name()).collect(),
            infinitesimals,
            flows,
            measurement_checks: Vec::new(),
            transformation_checks: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Apply a flow to a numeric point given over `z`; other entries pass through.
pub fn transform_point(flow: &SymmetryFlow, point: &HashMap<Sym, f64>, eps: f64) -> Result<HashMap<Sym, f64>> {
    let values = flow.evaluate(point, eps)?;
    let mut out = point.clone();
    for (s, v) in flow.z.iter().zip(values) {
        out.insert(*s, v);
    }
    Ok(out)
}
