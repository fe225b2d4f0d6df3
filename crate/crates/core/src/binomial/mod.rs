//! Binomial representations `s = sum a_i r^i (1-r)^(n-i)` with
//! `0 <= a_i <= C(n, i)`.

pub mod bounded;

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cylinder::Cylinder;
use crate::error::{Error, Fuel, Result};
use crate::numberfield::{FieldElement, NumberField};

pub use bounded::BoundedEngine;

/// Default largest `n` tried by [`search_rep`].
pub const DEFAULT_N_MAX: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinomialRep {
    pub n: u32,
    pub a: Vec<BigUint>,
}

pub fn big_binomial(n: u32, k: u32) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

impl BinomialRep {
    pub fn new(n: u32, a: Vec<BigUint>) -> Result<Self> {
        let rep = BinomialRep { n, a };
        rep.check()?;
        Ok(rep)
    }

    pub fn from_u64(n: u32, a: &[u64]) -> Result<Self> {
        BinomialRep::new(n, a.iter().map(|&v| BigUint::from(v)).collect())
    }

    /// The constant 1.
    pub fn one() -> Self {
        BinomialRep {
            n: 0,
            a: vec![BigUint::one()],
        }
    }

    /// `r` itself.
    pub fn generator() -> Self {
        BinomialRep {
            n: 1,
            a: vec![BigUint::zero(), BigUint::one()],
        }
    }

    /// `r^a (1-r)^b` as a single term.
    pub fn cylinder(c: Cylinder) -> Self {
        let n = c.len();
        let mut a = vec![BigUint::zero(); n as usize + 1];
        a[c.a as usize] = BigUint::one();
        BinomialRep { n, a }
    }

    /// Bounds `0 <= a_i <= C(n, i)`.
    pub fn check(&self) -> Result<()> {
        if self.a.len() != self.n as usize + 1 {
            return Err(Error::Malformed(format!(
                "representation of degree {} needs {} coefficients, got {}",
                self.n,
                self.n + 1,
                self.a.len()
            )));
        }
        for (i, a) in self.a.iter().enumerate() {
            if *a > big_binomial(self.n, i as u32) {
                return Err(Error::CoefficientOutOfRange { index: i });
            }
        }
        Ok(())
    }

    /// Exact value in the field.
    pub fn value(&self, field: &NumberField) -> Result<FieldElement> {
        self.check()?;
        let mut acc = field.zero();
        for (i, a) in self.a.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let k = a.to_u128().ok_or(Error::Overflow("binomial coefficient"))?;
            let c = field.cylinder(Cylinder::new(i as u32, self.n - i as u32));
            acc.add_assign(&c.scale_int(k));
        }
        Ok(acc)
    }

    /// Pad to degree `n + extra` by multiplying with `(r + (1-r))^extra`.
    pub fn padded(&self, extra: u32) -> BinomialRep {
        let pad = BinomialRep {
            n: extra,
            a: (0..=extra).map(|i| big_binomial(extra, i)).collect(),
        };
        product_rep(self, &pad)
    }

    /// Number of cylinders in the expansion, `sum a_i`.
    pub fn terms(&self) -> BigUint {
        self.a.iter().sum()
    }

    /// The expansion as a list of cylinder sizes with multiplicity.
    pub fn cylinders(&self) -> impl Iterator<Item = (Cylinder, &BigUint)> + '_ {
        self.a
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_zero())
            .map(move |(i, a)| (Cylinder::new(i as u32, self.n - i as u32), a))
    }
}

impl fmt::Display for BinomialRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={} a=(", self.n)?;
        for (i, a) in self.a.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Coefficient {
    Small(u64),
    Big(String),
}

#[derive(Serialize, Deserialize)]
struct RepJson {
    n: u32,
    a: Vec<Coefficient>,
}

impl Serialize for BinomialRep {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RepJson {
            n: self.n,
            a: self
                .a
                .iter()
                .map(|v| match v.to_u64() {
                    Some(x) => Coefficient::Small(x),
                    None => Coefficient::Big(v.to_string()),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BinomialRep {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = RepJson::deserialize(d)?;
        let a =
            j.a.into_iter()
                .map(|c| match c {
                    Coefficient::Small(x) => Ok(BigUint::from(x)),
                    Coefficient::Big(s) => s.parse::<BigUint>().map_err(serde::de::Error::custom),
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
        BinomialRep::new(j.n, a).map_err(serde::de::Error::custom)
    }
}

/// True iff `rep` evaluates to `target` exactly.
pub fn verify_rep(rep: &BinomialRep, target: &FieldElement, field: &NumberField) -> Result<bool> {
    field.check_element(target)?;
    Ok(&rep.value(field)? == target)
}

/// Representation of `1 - s` from one of `s`.
pub fn complement_rep(rep: &BinomialRep) -> BinomialRep {
    BinomialRep {
        n: rep.n,
        a: rep
            .a
            .iter()
            .enumerate()
            .map(|(i, a)| big_binomial(rep.n, i as u32) - a)
            .collect(),
    }
}

/// Representation of `s1 * s2` by convolution.
pub fn product_rep(r1: &BinomialRep, r2: &BinomialRep) -> BinomialRep {
    let n = r1.n + r2.n;
    let mut a = vec![BigUint::zero(); n as usize + 1];
    for (i, x) in r1.a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in r2.a.iter().enumerate() {
            if !y.is_zero() {
                a[i + j] += x * y;
            }
        }
    }
    BinomialRep { n, a }
}

/// Representation of `t^p (1-t)^q` from one of `t`.
pub fn cylinder_rep(p: u32, q: u32, rep: &BinomialRep) -> BinomialRep {
    let comp = complement_rep(rep);
    let mut acc = BinomialRep::one();
    for _ in 0..p {
        acc = product_rep(&acc, rep);
    }
    for _ in 0..q {
        acc = product_rep(&acc, &comp);
    }
    acc
}

/// Outcome of a bounded search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(BinomialRep),
    NotFound { n_max: u32 },
}

/// Least `n`, then lexicographically least `a`, with `rep = target`.
pub fn search_rep(target: &FieldElement, field: &NumberField, n_max: u32, fuel: &Fuel) -> Result<SearchOutcome> {
    field.check_element(target)?;
    for n in 0..=n_max {
        let weights: Vec<FieldElement> = (0..=n).map(|i| field.cylinder(Cylinder::new(i, n - i))).collect();
        let caps: Vec<u128> = (0..=n).map(|i| crate::cylinder::binomial(n, i)).collect();
        let engine = BoundedEngine::new(&weights);
        if let Some(x) = engine.first_solution(target, &caps, fuel)? {
            let rep = BinomialRep {
                n,
                a: x.into_iter().map(BigUint::from).collect(),
            };
            debug_assert!(verify_rep(&rep, target, field).unwrap_or(false));
            return Ok(SearchOutcome::Found(rep));
        }
    }
    Ok(SearchOutcome::NotFound { n_max })
}
