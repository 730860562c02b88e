//! Output time-derivative Jacobians from truncated Taylor series over `F_p`.
//!
//! The state is expanded as a power series in `t` around a random point. Each
//! series coefficient carries its gradient with respect to the initial state
//! and the unmeasured-input Taylor coefficients, so the rows of `∂y^(k)/∂z` fall
//! out of one forward sweep per measured-input realization. Transcendental
//! values at `t = 0` (tanh, roots without an exact residue) are drawn from a
//! keyed hash and propagated by their differential relations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::modp::{self, add, mul, neg, sub};
use super::{check_applicable, z_at_order, DerivativeDefinition};
use crate::error::{Error, Result};
use crate::model::AugmentedModel;
use crate::symbolic::{Op, Sym, Tape};

const TAG_TANH: u64 = 0x7a11;

#[derive(Clone, Copy, Debug)]
pub struct JetOptions {
    /// Highest output derivative order.
    pub order: usize,
    /// Random measured-input realizations stacked per order.
    pub realizations: usize,
    pub seed: u64,
}

/// Row blocks of `∂y^(k)/∂z_k` over `F_p`.
#[derive(Clone, Debug)]
pub struct JetChain {
    pub definition: DerivativeDefinition,
    /// `z` at the highest order.
    pub z: Vec<Sym>,
    /// Block `k` has `|z_k|` columns.
    pub blocks: Vec<Vec<Vec<u64>>>,
    pub core_dim: usize,
    pub n_unmeasured: usize,
}

impl JetChain {
    pub fn width(&self, k: usize) -> usize {
        self.width_at(k)
    }

    /// All rows up to order `n`, padded to `|z_n|`.
    pub fn stacked(&self, n: usize) -> Vec<Vec<u64>> {
        let w = self.width_at(n);
        self.blocks[..=n]
            .iter()
            .flatten()
            .map(|r| {
                let mut r = r.clone();
                r.resize(w, 0);
                r
            })
            .collect()
    }

    /// `|z_n|`.
    pub fn width_at(&self, n: usize) -> usize {
        if self.definition.extends_state() {
            self.core_dim + self.n_unmeasured * (n + 1)
        } else {
            self.core_dim
        }
    }
}

struct Layout {
    order: usize,
    /// Tangent dimension.
    dim: usize,
    stride: usize,
}

impl Layout {
    fn coef(&self, op: usize, k: usize) -> usize {
        op * self.stride + k * (self.dim + 1)
    }
}

/// `out += a ⊗ b` on dual numbers `[value, tangent…]`.
#[inline]
fn dual_mul_acc(out: &mut [u64], a: &[u64], b: &[u64]) {
    let (a0, b0) = (a[0], b[0]);
    out[0] = add(out[0], mul(a0, b0));
    for d in 1..out.len() {
        let t = add(mul(a0, b[d]), mul(b0, a[d]));
        out[d] = add(out[d], t);
    }
}

#[inline]
fn dual_scale(out: &mut [u64], s: u64) {
    for x in out.iter_mut() {
        *x = mul(*x, s);
    }
}

/// `1/b` for a dual number.
fn dual_inv(b: &[u64]) -> Option<Vec<u64>> {
    let i = modp::inv(b[0])?;
    let i2 = neg(mul(i, i));
    let mut out = vec![0; b.len()];
    out[0] = i;
    for d in 1..b.len() {
        out[d] = mul(i2, b[d]);
    }
    Some(out)
}

fn dual_mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0; a.len()];
    dual_mul_acc(&mut out, a, b);
    out
}

/// Coefficient rows of `∂y^(k)/∂z_k` for `k = 0..=order`.
pub fn jet_chain(m: &AugmentedModel, d: DerivativeDefinition, opts: &JetOptions) -> Result<JetChain> {
    check_applicable(m, d)?;
    let core = m.core_states().to_vec();
    let (w, u) = (m.unmeasured_inputs().to_vec(), m.measured_inputs().to_vec());
    let (nc, nw, ny) = (core.len(), w.len(), m.outputs.len());
    let mut vars = core.clone();
    vars.extend(&w);
    vars.extend(&u);
    let mut exprs = m.core_dynamics().to_vec();
    exprs.extend(m.outputs.iter().cloned());
    let tape = Tape::compile(&exprs, &vars)?;

    let order = opts.order;
    let dim = nc + nw * (order + 1);
    let lay = Layout {
        order,
        dim,
        stride: (order + 1) * (dim + 1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut draw = || rng.random_range(1..modp::P);
    let z0: Vec<u64> = (0..nc).map(|_| draw()).collect();
    let wc: Vec<Vec<u64>> = (0..=order).map(|_| (0..nw).map(|_| draw()).collect()).collect();
    // the general definition takes the rank at one point, input derivatives
    // included; stacking realizations would mix in other input histories
    let realizations = if u.is_empty() || d == DerivativeDefinition::GeneralExtended {
        1
    } else {
        opts.realizations.max(1)
    };
    let uc: Vec<Vec<Vec<u64>>> = (0..realizations)
        .map(|_| (0..=order).map(|_| (0..u.len()).map(|_| draw()).collect()).collect())
        .collect();

    let mut blocks: Vec<Vec<Vec<u64>>> = vec![Vec::new(); order + 1];
    for uc in &uc {
        let rows = sweep(&tape, &lay, nc, nw, &z0, &wc, uc)?;
        for (k, block) in rows.into_iter().enumerate() {
            let width = if d.extends_state() { nc + nw * (k + 1) } else { nc };
            blocks[k].extend(block.into_iter().map(|mut r| {
                r.truncate(width);
                r
            }));
        }
    }
    debug_assert!(blocks.iter().all(|b| b.len() == ny * realizations));
    Ok(JetChain {
        definition: d,
        z: z_at_order(m, d, order),
        blocks,
        core_dim: nc,
        n_unmeasured: nw,
    })
}

/// One forward sweep; returns the output tangent rows per order.
fn sweep(
    tape: &Tape,
    lay: &Layout,
    nc: usize,
    nw: usize,
    z0: &[u64],
    wc: &[Vec<u64>],
    uc: &[Vec<u64>],
) -> Result<Vec<Vec<Vec<u64>>>> {
    let n_ops = tape.ops.len();
    let d1 = lay.dim + 1;
    let mut buf = vec![0u64; n_ops * lay.stride];
    // tanh nodes keep the series of 1 - tanh^2
    let mut aux: Vec<Option<Vec<u64>>> = vec![None; n_ops];
    // exact exponents as field elements
    let expo: Vec<Option<u64>> = tape
        .ops
        .iter()
        .enumerate()
        .map(|(i, op)| match op {
            Op::Powi(_, n) => Some(modp::from_i64(*n as i64)),
            Op::Powq(..) => tape.exact.get(&i).and_then(modp::from_rational),
            _ => None,
        })
        .collect();
    let consts: Vec<Option<u64>> = tape
        .ops
        .iter()
        .enumerate()
        .map(|(i, op)| match op {
            Op::Const(_) => tape.exact.get(&i).and_then(modp::from_rational),
            _ => None,
        })
        .collect();
    let mut state: Vec<Vec<u64>> = (0..nc)
        .map(|i| {
            let mut s = vec![0; (lay.order + 1) * d1];
            s[0] = z0[i];
            s[1 + i] = 1;
            s
        })
        .collect();
    let mut out_rows = Vec::with_capacity(lay.order + 1);
    let ny = tape.outputs.len() - nc;

    for k in 0..=lay.order {
        let kk = k * d1;
        for i in 0..n_ops {
            let (done, rest) = buf.split_at_mut(i * lay.stride);
            let cur = &mut rest[..lay.stride];
            let get = |op: usize, j: usize| -> &[u64] {
                let o = lay.coef(op, j);
                &done[o..o + d1]
            };
            let mut c = vec![0u64; d1];
            match tape.ops[i] {
                Op::Const(_) => {
                    if k == 0 {
                        c[0] = consts[i].ok_or(Error::DegenerateEvaluation(0))?;
                    }
                }
                Op::Var(v) => {
                    if v < nc {
                        c.copy_from_slice(&state[v][kk..kk + d1]);
                    } else if v < nc + nw {
                        let j = v - nc;
                        c[0] = wc[k][j];
                        c[1 + nc + k * nw + j] = 1;
                    } else {
                        c[0] = uc[k][v - nc - nw];
                    }
                }
                Op::Add(ref args) => {
                    for &a in args {
                        for (x, &y) in c.iter_mut().zip(get(a, k)) {
                            *x = add(*x, y);
                        }
                    }
                }
                Op::Neg(a) => {
                    for (x, &y) in c.iter_mut().zip(get(a, k)) {
                        *x = neg(y);
                    }
                }
                Op::Mul(a, b) => {
                    for j in 0..=k {
                        dual_mul_acc(&mut c, get(a, j), get(b, k - j));
                    }
                }
                Op::Div(a, b) => {
                    c.copy_from_slice(get(a, k));
                    for j in 1..=k {
                        let prev = &cur[(k - j) * d1..(k - j) * d1 + d1];
                        let t = dual_mul(get(b, j), prev);
                        for (x, y) in c.iter_mut().zip(t) {
                            *x = sub(*x, y);
                        }
                    }
                    let ib = dual_inv(get(b, 0)).ok_or(Error::DegenerateEvaluation(k))?;
                    c = dual_mul(&c, &ib);
                }
                Op::Powi(b, _) | Op::Powq(b, _) => {
                    let p = expo[i].ok_or(Error::DegenerateEvaluation(k))?;
                    let b0 = get(b, 0);
                    if k == 0 {
                        let v = match tape.ops[i] {
                            Op::Powi(_, n) if n >= 0 => modp::pow(b0[0], n as u64),
                            Op::Powi(_, n) => {
                                modp::pow(modp::inv(b0[0]).ok_or(Error::DegenerateEvaluation(0))?, n.unsigned_abs() as u64)
                            }
                            _ => {
                                let q = &tape.exact[&i];
                                modp::rational_power(b0[0], q)
                                    .unwrap_or_else(|| modp::hash_element(b0[0], p))
                            }
                        };
                        c[0] = v;
                        if b0[0] != 0 {
                            // d(b^p) = p b^p / b db
                            let s = mul(mul(p, v), modp::inv(b0[0]).unwrap());
                            for d in 1..d1 {
                                c[d] = mul(s, b0[d]);
                            }
                        } else if let Op::Powi(_, n) = tape.ops[i] {
                            if n == 1 {
                                c[1..].copy_from_slice(&b0[1..]);
                            } else if n < 0 {
                                return Err(Error::DegenerateEvaluation(0));
                            }
                        } else {
                            return Err(Error::DegenerateEvaluation(0));
                        }
                    } else {
                        let kf = modp::from_i64(k as i64);
                        for j in 1..=k {
                            let coef = sub(mul(p, modp::from_i64(j as i64)), modp::from_i64((k - j) as i64));
                            if coef == 0 {
                                continue;
                            }
                            let prev = &cur[(k - j) * d1..(k - j) * d1 + d1];
                            let mut t = dual_mul(get(b, j), prev);
                            dual_scale(&mut t, coef);
                            for (x, y) in c.iter_mut().zip(t) {
                                *x = add(*x, y);
                            }
                        }
                        let mut den = b0.to_vec();
                        dual_scale(&mut den, kf);
                        let id = dual_inv(&den).ok_or(Error::DegenerateEvaluation(k))?;
                        c = dual_mul(&c, &id);
                    }
                }
                Op::Tanh(g) => {
                    let s = aux[i].get_or_insert_with(|| vec![0; (lay.order + 1) * d1]);
                    if k == 0 {
                        let g0 = get(g, 0);
                        let t0 = modp::hash_element(g0[0], TAG_TANH);
                        let s0 = sub(1, mul(t0, t0));
                        c[0] = t0;
                        for d in 1..d1 {
                            c[d] = mul(s0, g0[d]);
                        }
                    } else {
                        for j in 1..=k {
                            let mut t = dual_mul(get(g, j), &s[(k - j) * d1..(k - j) * d1 + d1]);
                            dual_scale(&mut t, modp::from_i64(j as i64));
                            for (x, y) in c.iter_mut().zip(t) {
                                *x = add(*x, y);
                            }
                        }
                        dual_scale(&mut c, modp::inv(modp::from_i64(k as i64)).unwrap());
                    }
                    // S_k = δ_k0 - Σ T_i T_{k-i}, with T_k = c
                    let mut sk = vec![0u64; d1];
                    if k == 0 {
                        sk[0] = 1;
                    }
                    for j in 0..=k {
                        let tj: &[u64] = if j == k { &c } else { &cur[j * d1..j * d1 + d1] };
                        let tkj: &[u64] = if k - j == k { &c } else { &cur[(k - j) * d1..(k - j) * d1 + d1] };
                        let t = dual_mul(tj, tkj);
                        for (x, y) in sk.iter_mut().zip(t) {
                            *x = sub(*x, y);
                        }
                    }
                    s[kk..kk + d1].copy_from_slice(&sk);
                }
            }
            cur[kk..kk + d1].copy_from_slice(&c);
        }
        // next state coefficients: z_{k+1} = F_k / (k + 1)
        if k < lay.order {
            let s = modp::inv(modp::from_i64(k as i64 + 1)).unwrap();
            for (i, st) in state.iter_mut().enumerate() {
                let o = lay.coef(tape.outputs[i], k);
                let nk = (k + 1) * d1;
                for d in 0..d1 {
                    st[nk + d] = mul(buf[o + d], s);
                }
            }
        }
        let rows = (0..ny)
            .map(|r| {
                let o = lay.coef(tape.outputs[nc + r], k);
                buf[o + 1..o + d1].to_vec()
            })
            .collect();
        out_rows.push(rows);
    }
    Ok(out_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{build_chain, modp::rank};
    use crate::model::{augment_parameters, parse_model};

    fn model(text: &str, unknowns: &[&str]) -> AugmentedModel {
        let m = parse_model(text).unwrap();
        let u: Vec<Sym> = unknowns.iter().map(|s| Sym::new(s)).collect();
        augment_parameters(&m, &u).unwrap()
    }

    /// Symbolic Jacobian reduced mod p at the same kind of random point.
    fn symbolic_rank(m: &AugmentedModel, d: DerivativeDefinition, n: usize) -> usize {
        let c = build_chain(m, d, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut syms: Vec<Sym> = c.z.clone();
        syms.extend(c.extra_symbols());
        let vals: std::collections::HashMap<Sym, u64> =
            syms.iter().map(|s| (*s, rng.random_range(1..modp::P))).collect();
        let rows: Vec<Vec<u64>> = c
            .jacobian()
            .iter()
            .map(|r| r.iter().map(|e| eval_modp(e, &vals)).collect())
            .collect();
        rank(&rows, c.z.len())
    }

    fn eval_modp(e: &crate::symbolic::Expr, vals: &std::collections::HashMap<Sym, u64>) -> u64 {
        use crate::symbolic::Node;
        match e.node() {
            Node::Const(q) => modp::from_rational(q).unwrap(),
            Node::Var(s) => vals[s],
            Node::Sum(v) => v.iter().fold(0, |a, t| add(a, eval_modp(t, vals))),
            Node::Product(v) => v.iter().fold(1, |a, t| mul(a, eval_modp(t, vals))),
            Node::Pow(b, q) => {
                let x = eval_modp(b, vals);
                let n: i64 = q.to_integer().try_into().unwrap();
                if n >= 0 {
                    modp::pow(x, n as u64)
                } else {
                    modp::pow(modp::inv(x).unwrap(), (-n) as u64)
                }
            }
            Node::Quot(a, b) => mul(eval_modp(a, vals), modp::inv(eval_modp(b, vals)).unwrap()),
            Node::Neg(a) => neg(eval_modp(a, vals)),
            Node::Tanh(_) => unreachable!(),
        }
    }

    const DUFFING: &str = "\
[states]
x, v
[params]
k, c, a
[inputs_measured]
u
[constants]
c = 1/10
[dynamics]
x = v
v = -k*x - c*v - a*x^3 + u
[outputs]
y = x
";

    #[test]
    fn jets_agree_with_symbolic_rank() {
        let m = model(DUFFING, &["k", "a"]);
        let d = DerivativeDefinition::GeneralExtended;
        let j = jet_chain(&m, d, &JetOptions { order: 5, realizations: 1, seed: 3 }).unwrap();
        for n in 0..=5 {
            assert_eq!(rank(&j.stacked(n), j.width_at(n)), symbolic_rank(&m, d, n), "order {n}");
        }
        assert_eq!(rank(&j.stacked(5), 4), 4);
        let w = "[inputs_unmeasured]\nw\n[dynamics]";
        let forced = DUFFING.replace("[dynamics]", w).replace("+ u\n", "+ u + x*w\n");
        let m = model(&forced, &["k", "a"]);
        let j = jet_chain(&m, d, &JetOptions { order: 4, realizations: 1, seed: 4 }).unwrap();
        for n in 0..=4 {
            assert_eq!(rank(&j.stacked(n), j.width_at(n)), symbolic_rank(&m, d, n), "order {n}");
        }
    }

    #[test]
    fn general_rank_ignores_extra_realizations() {
        let w = "[inputs_unmeasured]\nw\n[dynamics]";
        let forced = DUFFING.replace("[dynamics]", w).replace("+ u\n", "+ k*u + w\n");
        let m = model(&forced, &["k", "a"]);
        let d = DerivativeDefinition::GeneralExtended;
        let j = jet_chain(&m, d, &JetOptions { order: 4, realizations: 3, seed: 5 }).unwrap();
        for n in 0..=4 {
            assert_eq!(j.blocks[n].len(), 1);
            assert_eq!(rank(&j.stacked(n), j.width_at(n)), symbolic_rank(&m, d, n), "order {n}");
        }
    }

    #[test]
    fn transcendental_values_respect_their_arguments() {
        // a and b enter only through a + b, so one direction stays unobservable
        for rhs in ["tanh(a + b)*x", "((a + b)^2)^(1/3)*x", "(a + b)^(1/2) + x"] {
            let text = format!(
                "[states]\nx\n[params]\na, b\n[dynamics]\nx = {rhs}\n[outputs]\ny = x\n"
            );
            let m = model(&text, &["a", "b"]);
            let j = jet_chain(
                &m,
                DerivativeDefinition::AffineNoInput,
                &JetOptions { order: 5, realizations: 1, seed: 11 },
            )
            .unwrap();
            assert_eq!(rank(&j.stacked(5), 3), 2, "{rhs}");
        }
    }

    #[test]
    fn first_derivative_row_is_velocity() {
        let m = model(DUFFING, &["k", "a"]);
        let j = jet_chain(
            &m,
            DerivativeDefinition::AffineNoInput,
            &JetOptions { order: 1, realizations: 1, seed: 9 },
        )
        .unwrap();
        assert_eq!(j.blocks[0][0], vec![1, 0, 0, 0]);
        assert_eq!(j.blocks[1][0], vec![0, 1, 0, 0]);
    }
}
