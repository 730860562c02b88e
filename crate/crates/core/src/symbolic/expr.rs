use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::symbol::Sym;

/// Exact rational constant.
pub type Rational = BigRational;

pub fn rational(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rational_to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or_else(|| {
        // very large numerators/denominators: fall back to ratio of floats
        let n = q.numer().to_f64().unwrap_or(f64::NAN);
        let d = q.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Exact rational for a finite double (binary expansion, no rounding).
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    BigRational::from_float(x)
}

/// Decimal-faithful rational: 0.1 becomes 1/10 rather than its binary expansion.
pub fn rational_from_decimal(x: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let text = format!("{x:e}");
    parse_decimal(&text)
}

pub(crate) fn parse_decimal(text: &str) -> Option<Rational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let negative = mantissa.starts_with('-');
    let mantissa = mantissa.trim_start_matches(['-', '+']);
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(digits.parse::<BigInt>().ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Some(if negative { -value } else { value })
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Node {
    Const(Rational),
    Var(Sym),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// Base raised to a constant rational exponent; integer exponents are the common case.
    Pow(Expr, Rational),
    Quot(Expr, Expr),
    Tanh(Expr),
    Neg(Expr),
}

/// Immutable, reference-counted expression tree.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    /// Address of the shared node, used to memoize DAG traversals.
    pub(crate) fn ptr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(q: Rational) -> Expr {
        Expr::from_node(Node::Const(q))
    }

    pub fn int(n: i64) -> Expr {
        Expr::constant(Rational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn var(s: Sym) -> Expr {
        Expr::from_node(Node::Var(s))
    }

    pub fn named(name: &str) -> Expr {
        Expr::var(Sym::new(name))
    }

    /// Constant from a double, kept decimal-exact when possible.
    pub fn real(x: f64) -> Expr {
        Expr::constant(rational_from_decimal(x).expect("finite constant"))
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        Expr::from_node(Node::Sum(terms))
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        Expr::from_node(Node::Product(factors))
    }

    pub fn pow(base: Expr, exponent: Rational) -> Expr {
        Expr::from_node(Node::Pow(base, exponent))
    }

    pub fn powi(base: Expr, exponent: i64) -> Expr {
        Expr::pow(base, Rational::from_integer(BigInt::from(exponent)))
    }

    pub fn quot(num: Expr, den: Expr) -> Expr {
        Expr::from_node(Node::Quot(num, den))
    }

    pub fn tanh(arg: Expr) -> Expr {
        Expr::from_node(Node::Tanh(arg))
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self.node() {
            Node::Const(q) => Some(q),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<Sym> {
        match self.node() {
            Node::Var(s) => Some(*s),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(|q| q.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(|q| q.is_one())
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) => vec![],
            Node::Sum(v) | Node::Product(v) => v.iter().collect(),
            Node::Pow(b, _) => vec![b],
            Node::Quot(n, d) => vec![n, d],
            Node::Tanh(a) | Node::Neg(a) => vec![a],
        }
    }

    pub fn free_symbols(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Sym>) {
        if let Node::Var(s) = self.node() {
            out.insert(*s);
        }
        for c in self.children() {
            c.collect_symbols(out);
        }
    }

    pub fn depends_on(&self, s: Sym) -> bool {
        match self.node() {
            Node::Var(v) => *v == s,
            _ => self.children().iter().any(|c| c.depends_on(s)),
        }
    }

    pub fn depends_on_any(&self, syms: &[Sym]) -> bool {
        match self.node() {
            Node::Var(v) => syms.contains(v),
            _ => self.children().iter().any(|c| c.depends_on_any(syms)),
        }
    }

    /// Number of nodes counted as a tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// True when the tree contains only constants, variables, +, ×, ÷ and integer powers.
    pub fn is_rational(&self) -> bool {
        match self.node() {
            Node::Tanh(_) => false,
            Node::Pow(b, e) => e.is_integer() && b.is_rational(),
            _ => self.children().iter().all(|c| c.is_rational()),
        }
    }

    /// Replace variables by expressions (simultaneously). Result is simplified.
    pub fn substitute(&self, map: &HashMap<Sym, Expr>) -> Expr {
        self.substitute_raw(map).simplify()
    }

    pub(crate) fn substitute_raw(&self, map: &HashMap<Sym, Expr>) -> Expr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(s) => map.get(s).cloned().unwrap_or_else(|| self.clone()),
            Node::Sum(v) => Expr::sum(v.iter().map(|c| c.substitute_raw(map)).collect()),
            Node::Product(v) => Expr::product(v.iter().map(|c| c.substitute_raw(map)).collect()),
            Node::Pow(b, e) => Expr::pow(b.substitute_raw(map), e.clone()),
            Node::Quot(n, d) => Expr::quot(n.substitute_raw(map), d.substitute_raw(map)),
            Node::Tanh(a) => Expr::tanh(a.substitute_raw(map)),
            Node::Neg(a) => Expr::from_node(Node::Neg(a.substitute_raw(map))),
        }
    }

    /// Substitute known numeric values for symbols.
    pub fn substitute_values(&self, values: &HashMap<Sym, f64>) -> Expr {
        let map: HashMap<Sym, Expr> = values.iter().map(|(s, v)| (*s, Expr::real(*v))).collect();
        self.substitute(&map)
    }

    fn rank(&self) -> u8 {
        match self.node() {
            Node::Const(_) => 0,
            Node::Var(_) => 1,
            Node::Pow(..) => 2,
            Node::Product(_) => 3,
            Node::Quot(..) => 4,
            Node::Tanh(_) => 5,
            Node::Sum(_) => 6,
            Node::Neg(_) => 7,
        }
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total structural order used to sort children into canonical position.
impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        match self.rank().cmp(&other.rank()) {
            Ordering::Equal => {}
            o => return o,
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.cmp(b),
            (Node::Var(a), Node::Var(b)) => a.cmp(b),
            (Node::Sum(a), Node::Sum(b)) | (Node::Product(a), Node::Product(b)) => a.cmp(b),
            (Node::Pow(a, e), Node::Pow(b, f)) => a.cmp(b).then_with(|| e.cmp(f)),
            (Node::Quot(a, c), Node::Quot(b, d)) => a.cmp(b).then_with(|| c.cmp(d)),
            (Node::Tanh(a), Node::Tanh(b)) | (Node::Neg(a), Node::Neg(b)) => a.cmp(b),
            _ => unreachable!("ranks matched"),
        }
    }
}

impl From<Sym> for Expr {
    fn from(s: Sym) -> Expr {
        Expr::var(s)
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Expr {
        Expr::int(n)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, rhs]).simplify()
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, Expr::from_node(Node::Neg(rhs))]).simplify()
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::product(vec![self, rhs]).simplify()
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::quot(self, rhs).simplify()
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::from_node(Node::Neg(self)).simplify()
    }
}

macro_rules! ref_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                self.clone().$m(rhs.clone())
            }
        }
    )*};
}
ref_ops!(Add add, Sub sub, Mul mul, Div div);

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn write_rational(f: &mut fmt::Formatter<'_>, q: &Rational, parens: bool) -> fmt::Result {
    if q.is_integer() {
        if parens && q.is_negative() {
            write!(f, "({})", q.numer())
        } else {
            write!(f, "{}", q.numer())
        }
    } else if parens {
        write!(f, "({}/{})", q.numer(), q.denom())
    } else {
        write!(f, "{}/{}", q.numer(), q.denom())
    }
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Const(q) => {
                if q.is_integer() && !q.is_negative() {
                    PREC_ATOM
                } else {
                    PREC_PRODUCT
                }
            }
            Node::Var(_) | Node::Tanh(_) => PREC_ATOM,
            Node::Sum(v) if v.len() > 1 => PREC_SUM,
            Node::Sum(v) => v.first().map_or(PREC_ATOM, |c| c.precedence()),
            Node::Product(v) => {
                if v.len() == 1 {
                    v[0].precedence()
                } else if v.first().and_then(|c| c.as_const()).is_some_and(|q| *q == -Rational::one()) {
                    PREC_UNARY
                } else if v.is_empty() {
                    PREC_ATOM
                } else {
                    PREC_PRODUCT
                }
            }
            Node::Quot(..) => PREC_PRODUCT,
            Node::Pow(..) => PREC_POW,
            Node::Neg(_) => PREC_UNARY,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let p = self.precedence();
        if p < min_prec {
            f.write_str("(")?;
            self.write_inner(f)?;
            f.write_str(")")
        } else {
            self.write_inner(f)
        }
    }

    /// Coefficient sign split used when printing sums as `a - b`.
    fn negated_form(&self) -> Option<Expr> {
        match self.node() {
            Node::Const(q) if q.is_negative() => Some(Expr::constant(-q.clone())),
            Node::Product(v) => {
                let c = v.first()?.as_const()?;
                if !c.is_negative() {
                    return None;
                }
                let mut rest: Vec<Expr> = v[1..].to_vec();
                let pos = -c.clone();
                if !pos.is_one() {
                    rest.insert(0, Expr::constant(pos));
                }
                Some(if rest.len() == 1 { rest.pop().unwrap() } else { Expr::product(rest) })
            }
            Node::Neg(a) => Some(a.clone()),
            _ => None,
        }
    }

    fn write_inner(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(q) => write_rational(f, q, false),
            Node::Var(s) => write!(f, "{s}"),
            Node::Sum(v) => {
                if v.is_empty() {
                    return f.write_str("0");
                }
                for (i, term) in v.iter().enumerate() {
                    if i == 0 {
                        term.write_at(f, PREC_SUM + 1)?;
                    } else if let Some(pos) = term.negated_form() {
                        f.write_str(" - ")?;
                        pos.write_at(f, PREC_SUM + 1)?;
                    } else {
                        f.write_str(" + ")?;
                        term.write_at(f, PREC_SUM + 1)?;
                    }
                }
                Ok(())
            }
            Node::Product(v) => {
                if v.is_empty() {
                    return f.write_str("1");
                }
                let mut factors: &[Expr] = v;
                if v.len() > 1 && v[0].as_const().is_some_and(|q| *q == -Rational::one()) {
                    f.write_str("-")?;
                    factors = &v[1..];
                    if factors.len() == 1 {
                        return factors[0].write_at(f, PREC_POW);
                    }
                }
                for (i, factor) in factors.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    match factor.node() {
                        Node::Const(q) if !(q.is_integer() && !q.is_negative()) => {
                            write_rational(f, q, true)?
                        }
                        // quotients inside products are parenthesized to keep reparsing unambiguous
                        Node::Quot(..) => factor.write_at(f, PREC_UNARY)?,
                        _ => factor.write_at(f, PREC_PRODUCT + if i == 0 { 0 } else { 1 })?,
                    }
                }
                Ok(())
            }
            Node::Quot(n, d) => {
                n.write_at(f, PREC_PRODUCT)?;
                f.write_str("/")?;
                d.write_at(f, PREC_UNARY)
            }
            Node::Pow(b, e) => {
                b.write_at(f, PREC_ATOM)?;
                f.write_str("^")?;
                write_rational(f, e, true)
            }
            Node::Tanh(a) => {
                f.write_str("tanh(")?;
                a.write_at(f, 0)?;
                f.write_str(")")
            }
            Node::Neg(a) => {
                f.write_str("-")?;
                a.write_at(f, PREC_POW)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}
