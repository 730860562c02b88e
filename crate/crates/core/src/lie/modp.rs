//! Arithmetic and elimination over the prime field `F_p`, `p = 2^61 - 1`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive};

use crate::symbolic::Rational;

pub const P: u64 = (1 << 61) - 1;

#[inline]
pub fn reduce128(x: u128) -> u64 {
    let lo = (x as u64) & P;
    let hi = (x >> 61) as u64;
    let s = lo + (hi & P) + ((x >> 122) as u64);
    let s = (s & P) + (s >> 61);
    if s >= P {
        s - P
    } else {
        s
    }
}

#[inline]
pub fn add(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= P {
        s - P
    } else {
        s
    }
}

#[inline]
pub fn sub(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + P - b
    }
}

#[inline]
pub fn neg(a: u64) -> u64 {
    if a == 0 {
        0
    } else {
        P - a
    }
}

#[inline]
pub fn mul(a: u64, b: u64) -> u64 {
    reduce128(a as u128 * b as u128)
}

pub fn pow(mut a: u64, mut e: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul(r, a);
        }
        a = mul(a, a);
        e >>= 1;
    }
    r
}

/// Multiplicative inverse; `None` for zero.
pub fn inv(a: u64) -> Option<u64> {
    (a != 0).then(|| pow(a, P - 2))
}

pub fn from_i64(x: i64) -> u64 {
    let r = x.rem_euclid(P as i64);
    r as u64
}

pub fn from_bigint(x: &BigInt) -> u64 {
    let p = BigInt::from(P);
    x.mod_floor(&p).to_u64().expect("reduced residue")
}

/// Image of a rational; `None` when the denominator vanishes mod `p`.
pub fn from_rational(q: &Rational) -> Option<u64> {
    let d = from_bigint(q.denom());
    Some(mul(from_bigint(q.numer()), inv(d)?))
}

/// Square root for `p ≡ 3 (mod 4)`, when one exists.
pub fn sqrt(a: u64) -> Option<u64> {
    let r = pow(a, (P + 1) / 4);
    (mul(r, r) == a).then_some(r)
}

/// Exact `a^(n/d)` when the root is unambiguous or a square root exists.
pub fn rational_power(a: u64, q: &Rational) -> Option<u64> {
    let (n, d) = (q.numer(), q.denom());
    let order = BigInt::from(P - 1);
    let base = if n.is_negative() { inv(a)? } else { a };
    let n = n.abs();
    if d.gcd(&order) == BigInt::from(1) {
        let e = (n * d.modinv(&order)?).mod_floor(&order);
        return Some(pow(base, e.to_u64()?));
    }
    if *d == BigInt::from(2) {
        return Some(pow(sqrt(base)?, n.mod_floor(&order).to_u64()?));
    }
    None
}

/// Deterministic pseudo-random field element keyed by `(x, tag)`.
pub fn hash_element(x: u64, tag: u64) -> u64 {
    let mut z = x ^ tag.rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    let r = z % P;
    if r == 0 {
        1
    } else {
        r
    }
}

/// Row-reduce in place; returns the pivot columns.
pub fn row_reduce(rows: &mut [Vec<u64>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c] != 0) else {
            continue;
        };
        rows.swap(r, p);
        let iv = inv(rows[r][c]).expect("nonzero pivot");
        for x in rows[r].iter_mut() {
            *x = mul(*x, iv);
        }
        let pivot = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row[c] != 0 {
                let f = row[c];
                for (x, &y) in row.iter_mut().zip(&pivot).skip(c) {
                    *x = sub(*x, mul(f, y));
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(rows: &[Vec<u64>], cols: usize) -> usize {
    let mut m = rows.to_vec();
    row_reduce(&mut m, cols).len()
}

/// Basis of the right null space, one vector per free column.
pub fn null_space(rows: &[Vec<u64>], cols: usize) -> Vec<Vec<u64>> {
    let mut m = rows.to_vec();
    let pivots = row_reduce(&mut m, cols);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![0; cols];
            v[f] = 1;
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = neg(m[r][f]);
            }
            v
        })
        .collect()
}

/// Incremental rank tracker: rows are reduced against the current basis.
#[derive(Clone, Debug, Default)]
pub struct Basis {
    rows: Vec<(usize, Vec<u64>)>,
}

impl Basis {
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Insert a row (shorter rows are zero-padded); returns whether rank grew.
    pub fn insert(&mut self, row: &[u64], cols: usize) -> bool {
        let mut v = row.to_vec();
        v.resize(cols, 0);
        for (pc, b) in &self.rows {
            let f = v[*pc];
            if f != 0 {
                for (x, &y) in v.iter_mut().zip(b) {
                    *x = sub(*x, mul(f, y));
                }
            }
        }
        let Some(pc) = v.iter().position(|&x| x != 0) else {
            return false;
        };
        let iv = inv(v[pc]).expect("nonzero");
        for x in v.iter_mut() {
            *x = mul(*x, iv);
        }
        for (_, b) in self.rows.iter_mut() {
            b.resize(cols, 0);
            let f = b[pc];
            if f != 0 {
                for (x, &y) in b.iter_mut().zip(&v) {
                    *x = sub(*x, mul(f, y));
                }
            }
        }
        self.rows.push((pc, v));
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::rational;

    #[test]
    fn field_identities() {
        for a in [1u64, 2, 12345, P - 1, 1 << 60] {
            assert_eq!(mul(a, inv(a).unwrap()), 1);
            assert_eq!(add(a, neg(a)), 0);
        }
        assert_eq!(from_i64(-1), P - 1);
        let half = from_rational(&rational(1, 2)).unwrap();
        assert_eq!(mul(half, 2), 1);
        assert_eq!(sqrt(mul(9, 9)).map(|r| mul(r, r)), Some(81));
    }

    #[test]
    fn rank_and_null_space() {
        let rows = vec![vec![1, 2, 3], vec![2, 4, 6], vec![0, 1, 1]];
        assert_eq!(rank(&rows, 3), 2);
        let ns = null_space(&rows, 3);
        assert_eq!(ns.len(), 1);
        for r in &rows {
            let dot = r.iter().zip(&ns[0]).fold(0, |acc, (&a, &b)| add(acc, mul(a, b)));
            assert_eq!(dot, 0);
        }
        let mut basis = Basis::default();
        assert!(basis.insert(&rows[0], 3));
        assert!(!basis.insert(&rows[1], 3));
        assert!(basis.insert(&rows[2], 3));
        assert!(!basis.insert(&[1, 3, 4], 3));
    }

    #[test]
    fn rational_powers() {
        let a = mul(7, 7);
        let r = rational_power(a, &rational(1, 2)).unwrap();
        assert_eq!(mul(r, r), a);
        let c = rational_power(5, &rational(1, 17)).unwrap();
        assert_eq!(pow(c, 17), 5);
    }
}
