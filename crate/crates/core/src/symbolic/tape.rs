//! Straight-line compilation of expression DAGs for repeated numeric evaluation.

use std::collections::HashMap;

use num_traits::ToPrimitive;

use super::expr::{rational_to_f64, Expr, Node, Rational};
use super::symbol::Sym;
use crate::error::{Error, Result};

const DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Const(f64),
    Var(usize),
    Add(Vec<usize>),
    /// Binary product; n-ary products are chained.
    Mul(usize, usize),
    Neg(usize),
    Div(usize, usize),
    Powi(usize, i32),
    /// Fractional power with its exact exponent.
    Powq(usize, f64),
    Tanh(usize),
}

/// Instruction list with shared subexpressions evaluated once.
#[derive(Clone, Debug)]
pub struct Tape {
    pub ops: Vec<Op>,
    /// Exact value of each `Const` and exponent of each `Powq`, by op index.
    pub exact: HashMap<usize, Rational>,
    pub outputs: Vec<usize>,
    pub vars: Vec<Sym>,
}

struct Compiler<'a> {
    ops: Vec<Op>,
    exact: HashMap<usize, Rational>,
    memo: HashMap<usize, usize>,
    consts: HashMap<Rational, usize>,
    vars: &'a HashMap<Sym, usize>,
}

impl Compiler<'_> {
    fn push(&mut self, op: Op) -> usize {
        self.ops.push(op);
        self.ops.len() - 1
    }

    fn constant(&mut self, q: &Rational) -> usize {
        if let Some(&i) = self.consts.get(q) {
            return i;
        }
        let i = self.push(Op::Const(rational_to_f64(q)));
        self.exact.insert(i, q.clone());
        self.consts.insert(q.clone(), i);
        i
    }

    fn compile(&mut self, e: &Expr) -> Result<usize> {
        if let Some(&i) = self.memo.get(&e.ptr()) {
            return Ok(i);
        }
        let i = match e.node() {
            Node::Const(q) => self.constant(q),
            Node::Var(s) => {
                let k = *self.vars.get(s).ok_or_else(|| Error::UnboundVariable(s.name()))?;
                self.push(Op::Var(k))
            }
            Node::Sum(v) => {
                let args = v.iter().map(|t| self.compile(t)).collect::<Result<Vec<_>>>()?;
                match args.len() {
                    0 => self.constant(&Rational::from_integer(0.into())),
                    1 => args[0],
                    _ => self.push(Op::Add(args)),
                }
            }
            Node::Product(v) => {
                let args = v.iter().map(|t| self.compile(t)).collect::<Result<Vec<_>>>()?;
                let Some((&first, rest)) = args.split_first() else {
                    return Ok(self.constant(&Rational::from_integer(1.into())));
                };
                rest.iter().fold(first, |acc, &b| self.push(Op::Mul(acc, b)))
            }
            Node::Pow(b, q) => {
                let base = self.compile(b)?;
                match q.is_integer().then(|| q.to_integer().to_i32()).flatten() {
                    Some(1) => base,
                    Some(n) => self.push(Op::Powi(base, n)),
                    None => {
                        let i = self.push(Op::Powq(base, rational_to_f64(q)));
                        self.exact.insert(i, q.clone());
                        i
                    }
                }
            }
            Node::Quot(n, d) => {
                let (n, d) = (self.compile(n)?, self.compile(d)?);
                self.push(Op::Div(n, d))
            }
            Node::Tanh(a) => {
                let a = self.compile(a)?;
                self.push(Op::Tanh(a))
            }
            Node::Neg(a) => {
                let a = self.compile(a)?;
                self.push(Op::Neg(a))
            }
        };
        self.memo.insert(e.ptr(), i);
        Ok(i)
    }
}

impl Tape {
    /// Compile `exprs` over the ordered variables `vars`; any other symbol is an error.
    pub fn compile(exprs: &[Expr], vars: &[Sym]) -> Result<Tape> {
        let index: HashMap<Sym, usize> = vars.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut c = Compiler {
            ops: Vec::new(),
            exact: HashMap::new(),
            memo: HashMap::new(),
            consts: HashMap::new(),
            vars: &index,
        };
        let outputs = exprs.iter().map(|e| c.compile(e)).collect::<Result<Vec<_>>>()?;
        Ok(Tape {
            ops: c.ops,
            exact: c.exact,
            outputs,
            vars: vars.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Evaluate every op into `scratch`, then copy the outputs into `out`.
    pub fn eval_into(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<()> {
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(k) => x[k],
                Op::Add(ref a) => a.iter().map(|&i| scratch[i]).sum(),
                Op::Mul(a, b) => scratch[a] * scratch[b],
                Op::Neg(a) => -scratch[a],
                Op::Div(a, b) => {
                    let d = scratch[b];
                    if d.abs() < DENOMINATOR_FLOOR {
                        return Err(Error::DivisionByZero);
                    }
                    scratch[a] / d
                }
                Op::Powi(a, n) => {
                    let b = scratch[a];
                    if n < 0 && b.abs() < DENOMINATOR_FLOOR {
                        return Err(Error::DivisionByZero);
                    }
                    b.powi(n)
                }
                Op::Powq(a, q) => scratch[a].powf(q),
                Op::Tanh(a) => scratch[a].tanh(),
            };
            scratch.push(v);
        }
        for (o, &i) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[i];
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(x, &mut scratch, &mut out)?;
        Ok(out)
    }
}
