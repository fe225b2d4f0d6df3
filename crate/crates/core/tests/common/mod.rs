//! Independent oracle: dense rational polynomials reduced modulo an integer
//! minimal polynomial, and a bisected root bracket. Shares no code with the
//! library's number field.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Coefficients from the constant term up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct P(pub Vec<Q>);

impl P {
    pub fn ints(c: &[i64]) -> P {
        P(c.iter().map(|&v| q(v)).collect()).trim()
    }

    pub fn x() -> P {
        P::ints(&[0, 1])
    }

    pub fn one() -> P {
        P::ints(&[1])
    }

    pub fn one_minus_x() -> P {
        P::ints(&[1, -1])
    }

    fn trim(mut self) -> P {
        while self.0.last().is_some_and(Zero::is_zero) {
            self.0.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    pub fn deg(&self) -> Option<usize> {
        let t = self.clone().trim();
        t.0.len().checked_sub(1)
    }

    pub fn add(&self, o: &P) -> P {
        let n = self.0.len().max(o.0.len());
        P((0..n)
            .map(|i| self.0.get(i).cloned().unwrap_or_else(Q::zero) + o.0.get(i).cloned().unwrap_or_else(Q::zero))
            .collect())
        .trim()
    }

    pub fn sub(&self, o: &P) -> P {
        self.add(&o.scale(&q(-1)))
    }

    pub fn scale(&self, k: &Q) -> P {
        P(self.0.iter().map(|c| c * k).collect()).trim()
    }

    pub fn mul(&self, o: &P) -> P {
        if self.0.is_empty() || o.0.is_empty() {
            return P(vec![]);
        }
        let mut out = vec![Q::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        P(out).trim()
    }

    pub fn pow(&self, e: u32) -> P {
        (0..e).fold(P::one(), |acc, _| acc.mul(self))
    }

    /// Remainder modulo a monic polynomial.
    pub fn rem_monic(&self, m: &P) -> P {
        let d = m.0.len() - 1;
        let mut c = self.clone().trim().0;
        while c.len() > d {
            let lead = c.pop().expect("nonempty");
            let shift = c.len() - d;
            for (i, mc) in m.0[..d].iter().enumerate() {
                c[shift + i] -= &lead * mc;
            }
        }
        P(c).trim()
    }

    pub fn eval(&self, x: &Q) -> Q {
        self.0.iter().rev().fold(Q::zero(), |acc, c| acc * x + c)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.0
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64().unwrap_or(f64::NAN))
    }
}

/// `x^a (1-x)^b`
pub fn cyl(a: u32, b: u32) -> P {
    P::x().pow(a).mul(&P::one_minus_x().pow(b))
}

pub struct Oracle {
    pub m: P,
    pub lo: Q,
    pub hi: Q,
}

impl Oracle {
    pub fn new(minpoly: &[i64], lo: Q, hi: Q) -> Oracle {
        let m = P::ints(minpoly);
        assert!(m.eval(&lo).signum() != m.eval(&hi).signum(), "no sign change");
        Oracle { m, lo, hi }
    }

    /// `x^n + x - 1` on (0,1).
    pub fn selmer(n: usize) -> Oracle {
        let mut c = vec![0i64; n + 1];
        c[0] = -1;
        c[1] += 1;
        c[n] += 1;
        Oracle::new(&c, q(0), q(1))
    }

    /// `x^4 - 2x^2 - x + 1`, the square of the root of `x^4 + x - 1`.
    pub fn s_field() -> Oracle {
        Oracle::new(&[1, -1, -2, 0, 1], qf(1, 2), qf(6, 10))
    }

    pub fn reduce(&self, p: &P) -> P {
        p.rem_monic(&self.m)
    }

    pub fn is_zero(&self, p: &P) -> bool {
        self.reduce(p).is_zero()
    }

    /// Bracket of width below `2^-bits`.
    pub fn bracket(&self, bits: u32) -> (Q, Q) {
        let (mut lo, mut hi) = (self.lo.clone(), self.hi.clone());
        let s_lo = self.m.eval(&lo).signum();
        for _ in 0..bits {
            let mid = (&lo + &hi) / q(2);
            let v = self.m.eval(&mid);
            if v.is_zero() {
                return (mid.clone(), mid);
            }
            if v.signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi)
    }

    pub fn root_f64(&self) -> f64 {
        let (lo, hi) = self.bracket(80);
        ((lo + hi) / q(2)).to_f64().expect("finite")
    }

    /// Sign of `p` at the root, from a value at a point 2^-200 close and a
    /// crude Lipschitz bound; `None` when that is inconclusive.
    pub fn sign(&self, p: &P) -> Option<i8> {
        let p = self.reduce(p);
        if p.is_zero() {
            return Some(0);
        }
        let (lo, hi) = self.bracket(200);
        let mid = (&lo + &hi) / q(2);
        let v = p.eval(&mid);
        let lip: Q =
            p.0.iter()
                .enumerate()
                .map(|(i, c)| c.abs() * q(i as i64))
                .fold(Q::zero(), |a, b| a + b);
        if v.abs() > lip * (hi - lo) {
            Some(if v.is_positive() { 1 } else { -1 })
        } else {
            None
        }
    }
}

/// Library element as an oracle polynomial.
pub fn from_lib(x: &cantor_core::numberfield::FieldElement) -> P {
    P(x.coeffs().to_vec()).trim()
}

/// All tree partitions of relative depth at most `depth`, as sorted lists of
/// suffixes below the root.
pub fn tree_partitions(depth: u32) -> Vec<Vec<Vec<u8>>> {
    if depth == 0 {
        return vec![vec![vec![]]];
    }
    let sub = tree_partitions(depth - 1);
    let mut out = vec![vec![vec![]]];
    for zero in &sub {
        for one in &sub {
            let mut t: Vec<Vec<u8>> = zero
                .iter()
                .map(|w| [&[0u8][..], w].concat())
                .chain(one.iter().map(|w| [&[1u8][..], w].concat()))
                .collect();
            t.sort();
            out.push(t);
        }
    }
    out
}

/// Size `(ones, zeros)` of a bit word.
pub fn word_size(w: &[u8]) -> (u32, u32) {
    let ones = w.iter().filter(|&&b| b == 1).count() as u32;
    (ones, w.len() as u32 - ones)
}

/// Re-check a certificate with oracle arithmetic only: the leaves are a
/// tree partition of the root, and each group of leaves sums to its part.
pub fn oracle_check_certificate(o: &Oracle, cert: &cantor_core::refiner::Certificate) -> Result<(), String> {
    let root = cert.partition.root.bits().to_vec();
    let (ra, rb) = word_size(&root);
    if (ra, rb) != (cert.cylinder.a, cert.cylinder.b) {
        return Err("root does not realize the cylinder".into());
    }
    let mut suffixes = Vec::new();
    for l in &cert.partition.leaves {
        let bits = l.bits();
        if !bits.starts_with(&root) {
            return Err(format!("leaf {l} outside the root"));
        }
        suffixes.push(bits[root.len()..].to_vec());
    }
    suffixes.sort();
    // Kraft equality plus prefix-freeness is a complete prefix code.
    for w in suffixes.windows(2) {
        if w[1].starts_with(&w[0]) {
            return Err("leaves are not prefix-free".into());
        }
    }
    let depth = suffixes.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let kraft: u128 = suffixes.iter().map(|w| 1u128 << (depth - w.len() as u32)).sum();
    if kraft != 1u128 << depth {
        return Err("leaves do not cover the root".into());
    }
    let parts = cert.parts.expand();
    if cert.grouping.len() != cert.partition.leaves.len() {
        return Err("grouping length".into());
    }
    let mut sums = vec![P(vec![]); parts.len()];
    for (l, &g) in cert.partition.leaves.iter().zip(&cert.grouping) {
        let (a, b) = word_size(l.bits());
        let slot = sums.get_mut(g).ok_or("grouping index out of range")?;
        *slot = slot.add(&cyl(a, b));
    }
    for (j, (s, p)) in sums.iter().zip(&parts).enumerate() {
        if !o.is_zero(&s.sub(&cyl(p.a, p.b))) {
            return Err(format!("part {j} does not match its leaves"));
        }
    }
    Ok(())
}

/// Whether the leaves of some tree partition of depth <= `depth` can be
/// grouped into parts with the given rational values.
pub fn brute_force_rational(r: &Q, parts: &[Q], depth: u32) -> bool {
    fn assign(vals: &[Q], rest: &mut [Q]) -> bool {
        let Some((v, tail)) = vals.split_first() else {
            return rest.iter().all(Zero::is_zero);
        };
        for j in 0..rest.len() {
            if rest[j] >= *v && !rest[..j].contains(&rest[j]) {
                rest[j] -= v;
                let ok = assign(tail, rest);
                rest[j] += v;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    let one_minus = q(1) - r;
    tree_partitions(depth).iter().any(|t| {
        let mut vals: Vec<Q> = t
            .iter()
            .map(|w| {
                let (a, b) = word_size(w);
                num_traits::pow(r.clone(), a as usize) * num_traits::pow(one_minus.clone(), b as usize)
            })
            .collect();
        vals.sort_by(|a, b| b.cmp(a));
        let mut rest = parts.to_vec();
        assign(&vals, &mut rest)
    })
}
