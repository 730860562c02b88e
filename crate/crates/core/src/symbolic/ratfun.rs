//! Canonical rational functions: coprime numerator and denominator, the
//! denominator primitive with positive leading coefficient.
//!
//! Non-rational subexpressions (tanh, fractional powers) enter as opaque atoms,
//! i.e. fresh indeterminates recorded in a global table so they map back to
//! their expressions.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive};
use once_cell::sync::Lazy;
use parking_lot::RwLock;

use super::expr::{Expr, Node, Rational};
use super::poly::{gcd, Poly};
use super::symbol::Sym;
use crate::error::{Error, Result};

struct AtomTable {
    by_expr: HashMap<Expr, Sym>,
    by_sym: HashMap<Sym, Expr>,
}

static ATOMS: Lazy<RwLock<AtomTable>> = Lazy::new(|| {
    RwLock::new(AtomTable {
        by_expr: HashMap::new(),
        by_sym: HashMap::new(),
    })
});

fn atom_for(e: &Expr) -> Sym {
    if let Some(&s) = ATOMS.read().by_expr.get(e) {
        return s;
    }
    let mut t = ATOMS.write();
    if let Some(&s) = t.by_expr.get(e) {
        return s;
    }
    let s = Sym::new(&format!("atom#{}", t.by_expr.len()));
    t.by_expr.insert(e.clone(), s);
    t.by_sym.insert(s, e.clone());
    s
}

/// The expression an opaque atom stands for; ordinary symbols map to themselves.
pub fn atom_expr(s: Sym) -> Expr {
    ATOMS.read().by_sym.get(&s).cloned().unwrap_or_else(|| Expr::var(s))
}

pub fn is_atom(s: Sym) -> bool {
    ATOMS.read().by_sym.contains_key(&s)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatFun {
    num: Poly,
    den: Poly,
}

impl RatFun {
    pub fn zero() -> RatFun {
        RatFun {
            num: Poly::zero(),
            den: Poly::one(),
        }
    }

    pub fn one() -> RatFun {
        RatFun::from_poly(Poly::one())
    }

    pub fn from_poly(p: Poly) -> RatFun {
        RatFun { num: p, den: Poly::one() }
    }

    pub fn constant(q: Rational) -> RatFun {
        RatFun::from_poly(Poly::constant(q))
    }

    pub fn var(s: Sym) -> RatFun {
        RatFun::from_poly(Poly::var(s))
    }

    pub fn numer(&self) -> &Poly {
        &self.num
    }

    pub fn denom(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.den.is_one() && self.num.is_one()
    }

    /// Build `num/den` in canonical form.
    pub fn new(num: Poly, den: Poly) -> Result<RatFun> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(RatFun::zero());
        }
        let g = gcd(&num, &den);
        let (mut n, mut d) = if g.is_one() {
            (num, den)
        } else {
            (
                num.div_exact(&g).expect("gcd divides numerator"),
                den.div_exact(&g).expect("gcd divides denominator"),
            )
        };
        let c = d.content();
        if !c.is_one() {
            let inv = Rational::one() / c;
            n = n.scale(&inv);
            d = d.scale(&inv);
        }
        Ok(RatFun { num: n, den: d })
    }

    pub fn add(&self, o: &RatFun) -> RatFun {
        if self.den == o.den {
            return RatFun::new(self.num.add(&o.num), self.den.clone()).unwrap();
        }
        let num = self.num.mul(&o.den).add(&o.num.mul(&self.den));
        RatFun::new(num, self.den.mul(&o.den)).unwrap()
    }

    pub fn sub(&self, o: &RatFun) -> RatFun {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> RatFun {
        RatFun {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, o: &RatFun) -> RatFun {
        if self.is_zero() || o.is_zero() {
            return RatFun::zero();
        }
        RatFun::new(self.num.mul(&o.num), self.den.mul(&o.den)).unwrap()
    }

    pub fn div(&self, o: &RatFun) -> Result<RatFun> {
        if o.is_zero() {
            return Err(Error::DivisionByZero);
        }
        RatFun::new(self.num.mul(&o.den), self.den.mul(&o.num))
    }

    pub fn recip(&self) -> Result<RatFun> {
        RatFun::one().div(self)
    }

    pub fn powi(&self, n: i64) -> Result<RatFun> {
        let k = n.unsigned_abs() as u32;
        let p = RatFun {
            num: self.num.pow(k),
            den: self.den.pow(k),
        };
        if n < 0 {
            p.recip()
        } else {
            Ok(p)
        }
    }

    /// Convert an expression, mapping tanh and fractional powers to atoms.
    pub fn from_expr(e: &Expr) -> Result<RatFun> {
        Ok(match e.node() {
            Node::Const(q) => RatFun::constant(q.clone()),
            Node::Var(s) => RatFun::var(*s),
            Node::Sum(ts) => {
                let mut acc = RatFun::zero();
                for t in ts {
                    acc = acc.add(&RatFun::from_expr(t)?);
                }
                acc
            }
            Node::Product(fs) => {
                let mut acc = RatFun::one();
                for f in fs {
                    acc = acc.mul(&RatFun::from_expr(f)?);
                }
                acc
            }
            Node::Pow(b, q) if q.is_integer() => {
                let n = q
                    .to_integer()
                    .to_i64()
                    .ok_or_else(|| Error::NotRational(e.to_string()))?;
                RatFun::from_expr(b)?.powi(n)?
            }
            Node::Pow(..) | Node::Tanh(_) => RatFun::var(atom_for(e)),
            Node::Quot(n, d) => RatFun::from_expr(n)?.div(&RatFun::from_expr(d)?)?,
            Node::Neg(a) => RatFun::from_expr(a)?.neg(),
        })
    }

    pub fn to_expr(&self) -> Expr {
        let n = self.num.to_expr(&atom_expr);
        if self.den.is_one() {
            return n;
        }
        let d = self.den.to_expr(&atom_expr);
        Expr::quot(n, d).simplify()
    }

    pub fn evaluate_f64(&self, value: &dyn Fn(Sym) -> f64) -> f64 {
        self.num.evaluate_f64(value) / self.den.evaluate_f64(value)
    }

    /// Sign-normalized so the numerator's leading coefficient is positive.
    pub fn sign_normalized(&self) -> RatFun {
        match self.num.leading() {
            Some((_, c)) if c.is_negative() => self.neg(),
            _ => self.clone(),
        }
    }
}

impl From<i64> for RatFun {
    fn from(n: i64) -> RatFun {
        RatFun::constant(Rational::from_integer(BigInt::from(n)))
    }
}

impl fmt::Display for RatFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}

impl fmt::Debug for RatFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Expr {
    /// Cancel common factors by routing through the rational-function field.
    pub fn cancel(&self) -> Result<Expr> {
        Ok(RatFun::from_expr(self)?.to_expr())
    }

    /// Exact equality in the rational-function field (atoms compared structurally).
    pub fn equivalent(&self, other: &Expr) -> bool {
        match (RatFun::from_expr(self), RatFun::from_expr(other)) {
            (Ok(a), Ok(b)) => a.sub(&b).is_zero(),
            _ => false,
        }
    }
}

impl Default for RatFun {
    fn default() -> RatFun {
        RatFun::zero()
    }
}
