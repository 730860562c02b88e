use num_traits::ToPrimitive;

use super::expr::{rational_to_f64, Expr, Node};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ratfun::RatFun;
use super::symbol::{Binding, Sym};
use crate::error::{Error, Result};

const DENOMINATOR_FLOOR: f64 = 1e-300;

impl Expr {
    /// Recursive IEEE double evaluation.
    pub fn evaluate(&self, b: &Binding) -> Result<f64> {
        Ok(match self.node() {
            Node::Const(q) => rational_to_f64(q),
            Node::Var(s) => *b.get(s).ok_or_else(|| Error::UnboundVariable(s.name()))?,
            Node::Sum(v) => {
                let mut acc = 0.0;
                for t in v {
                    acc += t.evaluate(b)?;
                }
                acc
            }
            Node::Product(v) => {
                let mut acc = 1.0;
                for t in v {
                    acc *= t.evaluate(b)?;
                }
                acc
            }
            Node::Pow(base, e) => {
                let x = base.evaluate(b)?;
                if e.is_integer() {
                    let n = e.to_integer().to_i32().unwrap_or(i32::MAX);
                    if n < 0 && x.abs() < DENOMINATOR_FLOOR {
                        return Err(Error::DivisionByZero);
                    }
                    x.powi(n)
                } else {
                    x.powf(rational_to_f64(e))
                }
            }
            Node::Quot(n, d) => {
                let den = d.evaluate(b)?;
                if den.abs() < DENOMINATOR_FLOOR {
                    return Err(Error::DivisionByZero);
                }
                n.evaluate(b)? / den
            }
            Node::Tanh(a) => a.evaluate(b)?.tanh(),
            Node::Neg(a) => -a.evaluate(b)?,
        })
    }
}

impl Expr {
    /// Zero test: canonical form first, then random specialization, then exact
    /// rational-function arithmetic for moderate sizes.
    pub fn is_identically_zero(&self) -> bool {
        let e = self.simplify();
        if e.is_zero() {
            return true;
        }
        if e.as_const().is_some() {
            return false;
        }
        let syms: Vec<Sym> = e.free_symbols().into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2e70);
        for _ in 0..3 {
            let b: Binding = syms.iter().map(|s| (*s, rng.random_range(1.0..2.0))).collect();
            match e.evaluate(&b) {
                Ok(v) if v.abs() > 1e-8 * (1.0 + e.magnitude(&b)) => return false,
                _ => {}
            }
        }
        if e.size() <= 4000 {
            if let Ok(r) = RatFun::from_expr(&e) {
                return r.is_zero();
            }
        }
        true
    }

    /// Evaluation with every sum replaced by the sum of absolute values.
    fn magnitude(&self, b: &Binding) -> f64 {
        match self.node() {
            Node::Sum(v) => v.iter().map(|t| t.magnitude(b)).sum(),
            Node::Product(v) => v.iter().map(|t| t.magnitude(b)).product(),
            Node::Neg(a) => a.magnitude(b),
            _ => self.evaluate(b).map(f64::abs).unwrap_or(0.0),
        }
    }
}
