use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use super::expr::{Expr, Node, Rational};

impl Expr {
    /// Canonical form: flattened sums/products, folded constants, collected like
    /// terms and like factors, sorted children. Quotients are not cancelled.
    pub fn simplify(&self) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Neg(a) => build_product(vec![Expr::int(-1), a.simplify()]),
            Node::Sum(v) => build_sum(v.iter().map(Expr::simplify).collect()),
            Node::Product(v) => build_product(v.iter().map(Expr::simplify).collect()),
            Node::Pow(b, e) => build_pow(b.simplify(), e.clone()),
            Node::Quot(n, d) => build_quot(n.simplify(), d.simplify()),
            Node::Tanh(a) => build_tanh(a.simplify()),
        }
    }
}

/// Split a canonical term into its rational coefficient and the remaining factor.
fn split_coefficient(term: &Expr) -> (Rational, Option<Expr>) {
    match term.node() {
        Node::Const(q) => (q.clone(), None),
        Node::Product(v) => match v.first().and_then(|f| f.as_const()) {
            Some(c) => {
                let rest = &v[1..];
                let rest = if rest.len() == 1 {
                    rest[0].clone()
                } else {
                    Expr::product(rest.to_vec())
                };
                (c.clone(), Some(rest))
            }
            None => (Rational::one(), Some(term.clone())),
        },
        _ => (Rational::one(), Some(term.clone())),
    }
}

pub(crate) fn build_sum(terms: Vec<Expr>) -> Expr {
    let mut constant = Rational::zero();
    let mut collected: BTreeMap<Expr, Rational> = BTreeMap::new();
    let mut pending = terms;
    while let Some(term) = pending.pop() {
        if let Node::Sum(inner) = term.node() {
            pending.extend(inner.iter().cloned());
            continue;
        }
        match split_coefficient(&term) {
            (c, None) => constant += c,
            (c, Some(rest)) => {
                *collected.entry(rest).or_insert_with(Rational::zero) += c;
            }
        }
    }
    let mut out: Vec<Expr> = Vec::with_capacity(collected.len() + 1);
    for (rest, c) in collected {
        if c.is_zero() {
            continue;
        }
        if c.is_one() {
            out.push(rest);
        } else {
            out.push(build_product(vec![Expr::constant(c), rest]));
        }
    }
    if !constant.is_zero() {
        out.push(Expr::constant(constant));
    }
    out.sort();
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::sum(out),
    }
}

pub(crate) fn build_product(factors: Vec<Expr>) -> Expr {
    let mut coefficient = Rational::one();
    let mut powers: BTreeMap<Expr, Rational> = BTreeMap::new();
    let mut pending = factors;
    while let Some(factor) = pending.pop() {
        match factor.node() {
            Node::Product(inner) => pending.extend(inner.iter().cloned()),
            Node::Const(q) => {
                if q.is_zero() {
                    return Expr::zero();
                }
                coefficient *= q;
            }
            Node::Pow(b, e) => {
                *powers.entry(b.clone()).or_insert_with(Rational::zero) += e;
            }
            _ => {
                *powers.entry(factor.clone()).or_insert_with(Rational::zero) += Rational::one();
            }
        }
    }
    let mut out: Vec<Expr> = Vec::with_capacity(powers.len() + 1);
    for (base, e) in powers {
        if e.is_zero() {
            continue;
        }
        let f = if e.is_one() { base } else { build_pow(base, e) };
        // powers of products or constants can reintroduce those shapes
        match f.node() {
            Node::Const(q) => coefficient *= q,
            Node::Product(inner) => {
                for g in inner {
                    match g.node() {
                        Node::Const(q) => coefficient *= q,
                        _ => out.push(g.clone()),
                    }
                }
            }
            _ => out.push(f),
        }
    }
    if coefficient.is_zero() {
        return Expr::zero();
    }
    out.sort();
    // re-collect only if distribution produced duplicates
    if out.windows(2).any(|w| w[0] == w[1]) {
        let mut again: Vec<Expr> = out;
        again.push(Expr::constant(coefficient));
        return build_product(again);
    }
    if out.is_empty() {
        return Expr::constant(coefficient);
    }
    if coefficient.is_one() && out.len() == 1 {
        return out.pop().unwrap();
    }
    if !coefficient.is_one() {
        out.insert(0, Expr::constant(coefficient));
    }
    Expr::product(out)
}

pub(crate) fn build_pow(base: Expr, e: Rational) -> Expr {
    if e.is_zero() {
        return Expr::one();
    }
    if e.is_one() {
        return base;
    }
    match base.node() {
        Node::Const(q) if e.is_integer() => {
            if q.is_zero() && e.is_negative() {
                return Expr::pow(base.clone(), e);
            }
            let n: i32 = e.to_integer().try_into().unwrap_or(i32::MAX);
            if n.unsigned_abs() > 4096 {
                return Expr::pow(base.clone(), e);
            }
            Expr::constant(num_traits::pow::Pow::pow(q.clone(), n))
        }
        Node::Pow(inner, e2) if e.is_integer() => build_pow(inner.clone(), e2 * &e),
        Node::Product(fs) if e.is_integer() => {
            build_product(fs.iter().map(|f| build_pow(f.clone(), e.clone())).collect())
        }
        _ => Expr::pow(base, e),
    }
}

pub(crate) fn build_quot(num: Expr, den: Expr) -> Expr {
    if den.is_one() {
        return num;
    }
    if num.is_zero() {
        return Expr::zero();
    }
    match (num.node(), den.node()) {
        (_, Node::Const(d)) if !d.is_zero() => {
            build_product(vec![Expr::constant(Rational::one() / d), num])
        }
        _ => Expr::quot(num, den),
    }
}

pub(crate) fn build_tanh(arg: Expr) -> Expr {
    if arg.is_zero() {
        return Expr::zero();
    }
    Expr::tanh(arg)
}
