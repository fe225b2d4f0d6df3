//! Irreducibility screening for small-degree integer polynomials.
//!
//! Reducibility is proven by exhibiting a factor (rational root test, then a
//! Kronecker-style interpolation search). Irreducibility is proven when the
//! degree patterns of factorizations modulo several primes leave no room for
//! a nontrivial factor, or when the Kronecker search exhausts every admissible
//! factor degree. Anything else is reported as unverified.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::poly::Poly;

/// Degree above which only the modular screen is attempted.
pub const SOFT_DEGREE_CAP: usize = 12;

const KRONECKER_BUDGET: u64 = 60_000;
const DIVISOR_LIMIT: u64 = 1_000_000_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Irreducibility {
    Irreducible,
    Reducible { factor: String },
    Unverified,
}

/// `coeffs` are integer coefficients, lowest degree first, leading nonzero.
pub fn check(coeffs: &[BigInt]) -> Irreducibility {
    let d = coeffs.len() - 1;
    if d <= 1 {
        return Irreducibility::Irreducible;
    }
    if coeffs[0].is_zero() {
        return Irreducibility::Reducible {
            factor: "x".to_string(),
        };
    }
    let f = Poly::from_bigints(coeffs);
    let mut linear_screened = false;
    match rational_root(coeffs) {
        Some(Some(root)) => {
            let factor = Poly::new(vec![-root, BigRational::one()]);
            return Irreducibility::Reducible {
                factor: Poly::from_bigints(&factor.primitive_integer()).to_string(),
            };
        }
        Some(None) => linear_screened = true,
        None => {}
    }
    let allowed = modular_degree_screen(coeffs);
    let mut candidates: Vec<usize> = (1..=d / 2)
        .filter(|&e| allowed.is_none_or(|mask| mask & (1u64 << e) != 0))
        .filter(|&e| !(e == 1 && linear_screened))
        .collect();
    if candidates.is_empty() {
        return Irreducibility::Irreducible;
    }
    if d > SOFT_DEGREE_CAP {
        return Irreducibility::Unverified;
    }
    candidates.sort_unstable();
    let mut exhausted = true;
    for e in candidates {
        match kronecker_factor(&f, coeffs, e) {
            KroneckerOutcome::Factor(g) => {
                return Irreducibility::Reducible {
                    factor: Poly::from_bigints(&g.primitive_integer()).to_string(),
                }
            }
            KroneckerOutcome::NoFactor => {}
            KroneckerOutcome::GaveUp => exhausted = false,
        }
    }
    if exhausted {
        Irreducibility::Irreducible
    } else {
        Irreducibility::Unverified
    }
}

/// `None`: coefficients too large to screen. `Some(None)`: no rational root.
fn rational_root(coeffs: &[BigInt]) -> Option<Option<BigRational>> {
    let d = coeffs.len() - 1;
    let ps = divisors(&coeffs[0].abs())?;
    let qs = divisors(&coeffs[d].abs())?;
    let f = Poly::from_bigints(coeffs);
    for p in &ps {
        for q in &qs {
            for sign in [1i64, -1] {
                let cand = BigRational::new(BigInt::from(*p) * sign, BigInt::from(*q));
                if f.eval(&cand).is_zero() {
                    return Some(Some(cand));
                }
            }
        }
    }
    Some(None)
}

fn divisors(n: &BigInt) -> Option<Vec<u64>> {
    let n = n.to_u64()?;
    if n == 0 || n > DIVISOR_LIMIT {
        return None;
    }
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut i = 1u64;
    while i * i <= n {
        if n % i == 0 {
            small.push(i);
            if i * i != n {
                large.push(n / i);
            }
        }
        i += 1;
    }
    small.extend(large.into_iter().rev());
    Some(small)
}

// ---------------------------------------------------------------------------
// modular degree patterns

const PRIMES: [u64; 24] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

/// Bit mask of factor degrees compatible with every prime tried, or `None`
/// when no usable prime was found.
fn modular_degree_screen(coeffs: &[BigInt]) -> Option<u64> {
    let d = coeffs.len() - 1;
    if d >= 63 {
        return None;
    }
    let mut mask: Option<u64> = None;
    let mut used = 0;
    for &p in PRIMES.iter() {
        let pi = BigInt::from(p);
        let reduced: Vec<u64> = coeffs.iter().map(|c| c.mod_floor(&pi).to_u64().unwrap()).collect();
        if reduced[d] == 0 {
            continue;
        }
        let f = FpPoly::new(reduced, p).monic();
        let df = f.derivative();
        if df.is_zero() || f.gcd(&df).degree() != 0 {
            continue;
        }
        let degrees = f.factor_degrees();
        let mut sums = 1u64;
        for deg in degrees {
            sums |= sums << deg;
        }
        mask = Some(mask.map_or(sums, |m| m & sums));
        used += 1;
        if used >= 10 {
            break;
        }
    }
    mask
}

#[derive(Clone, Debug, PartialEq)]
struct FpPoly {
    c: Vec<u64>,
    p: u64,
}

impl FpPoly {
    fn new(mut c: Vec<u64>, p: u64) -> Self {
        for v in c.iter_mut() {
            *v %= p;
        }
        while c.last() == Some(&0) {
            c.pop();
        }
        FpPoly { c, p }
    }

    fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    fn degree(&self) -> usize {
        self.c.len().saturating_sub(1)
    }

    fn inv(&self, a: u64) -> u64 {
        pow_mod(a, self.p - 2, self.p)
    }

    fn monic(&self) -> Self {
        match self.c.last() {
            None => self.clone(),
            Some(&l) => {
                let inv = self.inv(l);
                FpPoly::new(self.c.iter().map(|v| v * inv % self.p).collect(), self.p)
            }
        }
    }

    fn derivative(&self) -> Self {
        FpPoly::new(
            self.c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, v)| v * (i as u64 % self.p) % self.p)
                .collect(),
            self.p,
        )
    }

    fn sub(&self, o: &Self) -> Self {
        let n = self.c.len().max(o.c.len());
        let p = self.p;
        FpPoly::new(
            (0..n)
                .map(|i| {
                    let a = self.c.get(i).copied().unwrap_or(0);
                    let b = o.c.get(i).copied().unwrap_or(0);
                    (a + p - b) % p
                })
                .collect(),
            p,
        )
    }

    fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return FpPoly::new(Vec::new(), self.p);
        }
        let mut out = vec![0u64; self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in o.c.iter().enumerate() {
                out[i + j] = (out[i + j] + a * b) % self.p;
            }
        }
        FpPoly::new(out, self.p)
    }

    fn div_rem(&self, d: &Self) -> (Self, Self) {
        let p = self.p;
        let dd = d.degree();
        let inv = self.inv(*d.c.last().unwrap());
        let mut rem = self.c.clone();
        if rem.len() <= dd {
            return (FpPoly::new(Vec::new(), p), self.clone());
        }
        let mut quot = vec![0u64; rem.len() - dd];
        for k in (dd..rem.len()).rev() {
            let q = rem[k] * inv % p;
            if q == 0 {
                continue;
            }
            for (j, c) in d.c.iter().enumerate() {
                rem[k - dd + j] = (rem[k - dd + j] + p - q * c % p) % p;
            }
            quot[k - dd] = q;
        }
        rem.truncate(dd);
        (FpPoly::new(quot, p), FpPoly::new(rem, p))
    }

    fn gcd(&self, o: &Self) -> Self {
        let mut a = self.clone();
        let mut b = o.clone();
        while !b.is_zero() {
            let r = a.div_rem(&b).1;
            a = b;
            b = r;
        }
        a.monic()
    }

    fn pow_mod(&self, mut e: u64, m: &Self) -> Self {
        let mut base = self.div_rem(m).1;
        let mut acc = FpPoly::new(vec![1], self.p);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base).div_rem(m).1;
            }
            base = base.mul(&base).div_rem(m).1;
            e >>= 1;
        }
        acc
    }

    /// Degrees of the irreducible factors of a monic squarefree polynomial
    /// (distinct-degree factorization).
    fn factor_degrees(&self) -> Vec<usize> {
        let p = self.p;
        let x = FpPoly::new(vec![0, 1], p);
        let mut f = self.clone();
        let mut h = x.clone();
        let mut out = Vec::new();
        let mut i = 1;
        while f.degree() >= 2 * i {
            h = h.pow_mod(p, &f);
            let g = f.gcd(&h.sub(&x));
            if g.degree() > 0 {
                for _ in 0..g.degree() / i {
                    out.push(i);
                }
                f = f.div_rem(&g).0;
                h = h.div_rem(&f).1;
            }
            i += 1;
        }
        if f.degree() > 0 {
            out.push(f.degree());
        }
        out
    }
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

// ---------------------------------------------------------------------------
// Kronecker search

enum KroneckerOutcome {
    Factor(Poly),
    NoFactor,
    GaveUp,
}

fn kronecker_factor(f: &Poly, coeffs: &[BigInt], e: usize) -> KroneckerOutcome {
    // Gather candidate sample points with few divisors.
    let mut samples: Vec<(BigInt, Vec<u64>)> = Vec::new();
    let mut x = 0i64;
    let mut tried = 0;
    while samples.len() < 3 * (e + 1) && tried < 40 {
        let xv = BigInt::from(x);
        let val = eval_int(coeffs, &xv);
        if !val.is_zero() {
            if let Some(divs) = divisors(&val.abs()) {
                samples.push((xv, divs));
            }
        }
        tried += 1;
        x = if x > 0 { -x } else { -x + 1 };
    }
    if samples.len() < e + 1 {
        return KroneckerOutcome::GaveUp;
    }
    samples.sort_by_key(|(_, d)| d.len());
    samples.truncate(e + 1);
    let total: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, (_, d))| d.len() as f64 * if i == 0 { 1.0 } else { 2.0 })
        .product();
    if total > KRONECKER_BUDGET as f64 {
        return KroneckerOutcome::GaveUp;
    }
    let xs: Vec<BigRational> = samples
        .iter()
        .map(|(x, _)| BigRational::from_integer(x.clone()))
        .collect();
    let choices: Vec<Vec<i64>> = samples
        .iter()
        .enumerate()
        .map(|(i, (_, d))| {
            let mut c: Vec<i64> = d.iter().map(|&v| v as i64).collect();
            if i > 0 {
                c.extend(d.iter().map(|&v| -(v as i64)));
            }
            c
        })
        .collect();
    let mut idx = vec![0usize; e + 1];
    loop {
        let ys: Vec<BigRational> = idx
            .iter()
            .zip(&choices)
            .map(|(&i, c)| BigRational::from_integer(BigInt::from(c[i])))
            .collect();
        let g = interpolate(&xs, &ys);
        if g.degree() == Some(e) && g.coeffs().iter().all(|c| c.is_integer()) {
            let (_, r) = f.div_rem(&g);
            if r.is_zero() {
                return KroneckerOutcome::Factor(g);
            }
        }
        // odometer
        let mut k = 0;
        loop {
            if k == idx.len() {
                return KroneckerOutcome::NoFactor;
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn eval_int(coeffs: &[BigInt], x: &BigInt) -> BigInt {
    coeffs.iter().rev().fold(BigInt::zero(), |acc, c| acc * x + c)
}

fn interpolate(xs: &[BigRational], ys: &[BigRational]) -> Poly {
    let mut acc = Poly::zero();
    for (i, (xi, yi)) in xs.iter().zip(ys).enumerate() {
        if yi.is_zero() {
            continue;
        }
        let mut basis = Poly::one();
        let mut denom = BigRational::one();
        for (j, xj) in xs.iter().enumerate() {
            if i != j {
                basis = basis.mul(&Poly::new(vec![-xj.clone(), BigRational::one()]));
                denom *= xi - xj;
            }
        }
        acc = acc.add(&basis.scale(&(yi / denom)));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(c: &[i64]) -> Vec<BigInt> {
        c.iter().map(|&v| BigInt::from(v)).collect()
    }

    #[test]
    fn selmer_trinomials() {
        // x^n + x - 1
        for n in [2usize, 3, 4, 6, 7, 8] {
            let mut c = vec![0i64; n + 1];
            c[0] = -1;
            c[1] = 1;
            c[n] = 1;
            assert_eq!(check(&ints(&c)), Irreducibility::Irreducible, "n={n}");
        }
    }

    #[test]
    fn selmer_like_trinomial_factors() {
        // x^5 + x - 1 = (x^2 - x + 1)(x^3 + x^2 - 1)
        let r = check(&ints(&[-1, 1, 0, 0, 0, 1]));
        assert_eq!(
            r,
            Irreducibility::Reducible {
                factor: "x^2-x+1".to_string()
            }
        );
    }

    #[test]
    fn rational_roots_detected() {
        // (2x-1)(x^2+1)
        let r = check(&ints(&[-1, 2, -1, 2]));
        assert!(matches!(r, Irreducibility::Reducible { .. }));
    }

    #[test]
    fn derived_square_minpoly() {
        assert_eq!(check(&ints(&[1, -1, -2, 0, 1])), Irreducibility::Irreducible);
    }

    #[test]
    fn fp_factor_degrees() {
        // x^2 + 1 over F_3 is irreducible, over F_5 splits.
        let f3 = FpPoly::new(vec![1, 0, 1], 3);
        assert_eq!(f3.factor_degrees(), vec![2]);
        let f5 = FpPoly::new(vec![1, 0, 1], 5);
        assert_eq!(f5.factor_degrees(), vec![1, 1]);
    }
}
