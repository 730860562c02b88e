//! Sparse multivariate polynomials with exact rational coefficients.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::expr::{Expr, Rational};
use super::symbol::Sym;

/// Exponent vector stored sparsely as `(symbol, exponent)` pairs sorted by symbol id.
#[derive(Clone, PartialEq, Eq, Hash, Default, Debug)]
pub struct Mono(Vec<(Sym, u32)>);

impl Mono {
    pub fn one() -> Mono {
        Mono(Vec::new())
    }

    pub fn var(s: Sym) -> Mono {
        Mono(vec![(s, 1)])
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> &[(Sym, u32)] {
        &self.0
    }

    pub fn degree_in(&self, s: Sym) -> u32 {
        self.0.iter().find(|(v, _)| *v == s).map_or(0, |(_, e)| *e)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    fn mul(&self, other: &Mono) -> Mono {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.id().cmp(&b[j].0.id()) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Mono(out)
    }

    /// `self / other` when every exponent of `other` is covered.
    fn div(&self, other: &Mono) -> Option<Mono> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut j = 0;
        for &(s, e) in &self.0 {
            if j < other.0.len() && other.0[j].0 == s {
                let d = other.0[j].1;
                if d > e {
                    return None;
                }
                if e > d {
                    out.push((s, e - d));
                }
                j += 1;
            } else if j < other.0.len() && other.0[j].0.id() < s.id() {
                return None;
            } else {
                out.push((s, e));
            }
        }
        if j < other.0.len() {
            return None;
        }
        Some(Mono(out))
    }

    fn gcd(&self, other: &Mono) -> Mono {
        let mut out = Vec::new();
        for &(s, e) in &self.0 {
            let d = other.degree_in(s);
            if d > 0 {
                out.push((s, e.min(d)));
            }
        }
        Mono(out)
    }

    fn without(&self, s: Sym) -> Mono {
        Mono(self.0.iter().copied().filter(|(v, _)| *v != s).collect())
    }
}

impl Ord for Mono {
    /// Lexicographic with lower symbol ids more significant.
    fn cmp(&self, other: &Mono) -> Ordering {
        let (a, b) = (&self.0, &other.0);
        let mut i = 0;
        loop {
            match (a.get(i), b.get(i)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(sa, ea)), Some(&(sb, eb))) => {
                    if sa != sb {
                        return if sa.id() < sb.id() {
                            Ordering::Greater
                        } else {
                            Ordering::Less
                        };
                    }
                    if ea != eb {
                        return ea.cmp(&eb);
                    }
                }
            }
            i += 1;
        }
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Mono) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    terms: BTreeMap<Mono, Rational>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn one() -> Poly {
        Poly::constant(Rational::one())
    }

    pub fn constant(q: Rational) -> Poly {
        let mut p = Poly::zero();
        if !q.is_zero() {
            p.terms.insert(Mono::one(), q);
        }
        p
    }

    pub fn var(s: Sym) -> Poly {
        let mut p = Poly::zero();
        p.terms.insert(Mono::var(s), Rational::one());
        p
    }

    pub fn term(m: Mono, c: Rational) -> Poly {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().is_some_and(|c| c.is_one())
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Leading term under the lexicographic monomial order.
    pub fn leading(&self) -> Option<(&Mono, &Rational)> {
        self.terms.iter().next_back()
    }

    pub fn variables(&self) -> Vec<Sym> {
        let mut vs: Vec<Sym> = self
            .terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(s, _)| *s))
            .collect();
        vs.sort_by_key(|s| s.id());
        vs.dedup();
        vs
    }

    pub fn degree_in(&self, s: Sym) -> u32 {
        self.terms.keys().map(|m| m.degree_in(s)).max().unwrap_or(0)
    }

    fn add_term(&mut self, m: Mono, c: Rational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }

    pub fn scale(&self, q: &Rational) -> Poly {
        if q.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * q)).collect(),
        }
    }

    fn mul_term(&self, m: &Mono, q: &Rational) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(n, c)| (n.mul(m), c * q)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut out = Poly::zero();
        for (m, c) in &small.terms {
            for (n, d) in &large.terms {
                out.add_term(m.mul(n), c * d);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut acc = Poly::one();
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Exact quotient `self / d`, or `None` when `d` does not divide `self`.
    pub fn div_exact(&self, d: &Poly) -> Option<Poly> {
        if d.is_zero() {
            return None;
        }
        if let Some(c) = d.as_constant() {
            return Some(self.scale(&(Rational::one() / c)));
        }
        let (dm, dc) = d.leading().map(|(m, c)| (m.clone(), c.clone()))?;
        let mut rem = self.clone();
        let mut quot = Poly::zero();
        while let Some((rm, rc)) = rem.leading().map(|(m, c)| (m.clone(), c.clone())) {
            let qm = rm.div(&dm)?;
            let qc = rc / &dc;
            rem = rem.sub(&d.mul_term(&qm, &qc));
            quot.add_term(qm, qc);
        }
        Some(quot)
    }

    /// Coefficients in `s` indexed by degree.
    pub fn coefficients_in(&self, s: Sym) -> Vec<Poly> {
        let deg = self.degree_in(s) as usize;
        let mut out = vec![Poly::zero(); deg + 1];
        for (m, c) in &self.terms {
            let e = m.degree_in(s) as usize;
            out[e].add_term(m.without(s), c.clone());
        }
        out
    }

    fn from_coefficients(s: Sym, coeffs: &[Poly]) -> Poly {
        let mut out = Poly::zero();
        for (e, c) in coeffs.iter().enumerate() {
            let xe = if e == 0 { Mono::one() } else { Mono(vec![(s, e as u32)]) };
            for (m, q) in &c.terms {
                out.add_term(m.mul(&xe), q.clone());
            }
        }
        out
    }

    /// Rational content normalized so the primitive part has coprime integer
    /// coefficients and a positive leading coefficient.
    pub fn content(&self) -> Rational {
        let Some((_, lc)) = self.leading() else {
            return Rational::one();
        };
        let mut num = BigInt::zero();
        let mut den = BigInt::one();
        for c in self.terms.values() {
            num = num.gcd(c.numer());
            den = den.lcm(c.denom());
        }
        let g = Rational::new(num, den);
        if lc.is_negative() {
            -g
        } else {
            g
        }
    }

    pub fn primitive(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        self.scale(&(Rational::one() / self.content()))
    }

    /// Monic normalization: leading coefficient 1.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            Some((_, c)) => self.scale(&(Rational::one() / c)),
            None => Poly::zero(),
        }
    }

    pub fn substitute_value(&self, s: Sym, v: &Rational) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.degree_in(s);
            let factor = num_traits::pow::Pow::pow(v.clone(), e);
            out.add_term(m.without(s), c * factor);
        }
        out
    }

    pub fn evaluate_f64(&self, value: &dyn Fn(Sym) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut t = super::expr::rational_to_f64(c);
                for &(s, e) in &m.0 {
                    t *= value(s).powi(e as i32);
                }
                t
            })
            .sum()
    }

    pub fn differentiate(&self, s: Sym) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.degree_in(s);
            if e == 0 {
                continue;
            }
            let mut f = m.0.clone();
            for p in f.iter_mut() {
                if p.0 == s {
                    p.1 -= 1;
                }
            }
            f.retain(|p| p.1 > 0);
            out.add_term(Mono(f), c * Rational::from_integer(BigInt::from(e)));
        }
        out
    }

    pub fn to_expr(&self, atom: &dyn Fn(Sym) -> Expr) -> Expr {
        let terms: Vec<Expr> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut fs = vec![Expr::constant(c.clone())];
                for &(s, e) in &m.0 {
                    fs.push(Expr::powi(atom(s), e as i64));
                }
                Expr::product(fs)
            })
            .collect();
        Expr::sum(terms).simplify()
    }
}

/// Greatest common divisor, normalized to a primitive integer polynomial
/// with positive leading coefficient.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.primitive();
    }
    if b.is_zero() {
        return a.primitive();
    }
    if a.as_constant().is_some() || b.as_constant().is_some() {
        return Poly::one();
    }
    if a.len() == 1 || b.len() == 1 {
        let (single, other) = if a.len() == 1 { (a, b) } else { (b, a) };
        let mut g = single.leading().unwrap().0.clone();
        for m in other.terms.keys() {
            g = g.gcd(m);
            if g.is_one() {
                break;
            }
        }
        return Poly::term(g, Rational::one());
    }
    if a.div_exact(b).is_some() {
        return b.primitive();
    }
    if b.div_exact(a).is_some() {
        return a.primitive();
    }
    let va = a.variables();
    let vb = b.variables();
    // a variable present in only one operand cannot occur in the gcd
    if let Some(&s) = va.iter().find(|s| !vb.contains(s)) {
        return gcd_with_coefficients(a.coefficients_in(s), b);
    }
    if let Some(&s) = vb.iter().find(|s| !va.contains(s)) {
        return gcd_with_coefficients(b.coefficients_in(s), a);
    }
    let Some(&x) = va.iter().min_by_key(|s| (a.degree_in(**s).min(b.degree_in(**s)), s.id())) else {
        return Poly::one();
    };
    let ca = a.coefficients_in(x);
    let cb = b.coefficients_in(x);
    let conta = content_of(&ca);
    let contb = content_of(&cb);
    let c = gcd(&conta, &contb);
    let mut p = divide_all(&ca, &conta);
    let mut q = divide_all(&cb, &contb);
    if p.len() < q.len() {
        std::mem::swap(&mut p, &mut q);
    }
    loop {
        let r = pseudo_remainder(&p, &q);
        if r.iter().all(Poly::is_zero) {
            break;
        }
        if r.len() == 1 {
            q = vec![Poly::one()];
            break;
        }
        let cr = content_of(&r);
        p = q;
        q = divide_all(&r, &cr);
    }
    let g = Poly::from_coefficients(x, &q);
    c.mul(&g).primitive()
}

fn gcd_with_coefficients(coeffs: Vec<Poly>, other: &Poly) -> Poly {
    let mut g = other.clone();
    for c in coeffs.iter().filter(|c| !c.is_zero()) {
        g = gcd(&g, c);
        if g.as_constant().is_some() {
            return Poly::one();
        }
    }
    g.primitive()
}

fn content_of(coeffs: &[Poly]) -> Poly {
    let mut g = Poly::zero();
    for c in coeffs.iter().filter(|c| !c.is_zero()) {
        g = gcd(&g, c);
        if g.as_constant().is_some() {
            return Poly::one();
        }
    }
    g
}

fn divide_all(coeffs: &[Poly], d: &Poly) -> Vec<Poly> {
    coeffs
        .iter()
        .map(|c| c.div_exact(d).expect("content divides every coefficient"))
        .collect()
}

/// Pseudo-remainder of univariate polynomials with polynomial coefficients.
fn pseudo_remainder(a: &[Poly], b: &[Poly]) -> Vec<Poly> {
    let mut r: Vec<Poly> = a.to_vec();
    trim(&mut r);
    let db = b.len() - 1;
    let lb = &b[db];
    while r.len() > db && !r.is_empty() {
        let dr = r.len() - 1;
        let lr = r[dr].clone();
        let shift = dr - db;
        for c in r.iter_mut() {
            *c = c.mul(lb);
        }
        for (i, bc) in b.iter().enumerate() {
            r[i + shift] = r[i + shift].sub(&bc.mul(&lr));
        }
        trim(&mut r);
    }
    if r.is_empty() {
        r.push(Poly::zero());
    }
    r
}

fn trim(r: &mut Vec<Poly>) {
    while r.last().is_some_and(Poly::is_zero) {
        r.pop();
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr(&|s| Expr::var(s)))
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
