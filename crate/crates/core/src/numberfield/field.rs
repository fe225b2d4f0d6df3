use std::collections::HashMap;
use std::fmt;
use std::sync::RwLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::irreducible::{self, Irreducibility};
use super::linalg;
use super::poly::{parse_rational, rat, Poly};
use crate::cylinder::Cylinder;
use crate::error::{Error, Result};

/// Integer minimal polynomial with coprime coefficients and positive leading
/// coefficient.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MinimalPolynomial {
    coeffs: Vec<BigInt>,
}

impl MinimalPolynomial {
    pub fn new(poly: &Poly) -> Result<Self> {
        match poly.degree() {
            None | Some(0) => Err(Error::PolynomialSyntax {
                input: poly.to_string(),
                reason: "polynomial must have degree at least 1".into(),
            }),
            Some(_) => Ok(MinimalPolynomial {
                coeffs: poly.primitive_integer(),
            }),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        MinimalPolynomial::new(&Poly::parse(s)?)
    }

    /// `x^n + x - 1`
    pub fn selmer(n: usize) -> Self {
        let mut c = vec![BigInt::zero(); n + 1];
        c[0] = BigInt::from(-1);
        c[1] += 1;
        c[n] += 1;
        MinimalPolynomial { coeffs: c }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn to_poly(&self) -> Poly {
        Poly::from_bigints(&self.coeffs)
    }

    /// `Some(n)` when this is `x^n + x - 1` with `n >= 2`.
    pub fn selmer_exponent(&self) -> Option<usize> {
        let n = self.degree();
        (n >= 2 && *self == MinimalPolynomial::selmer(n)).then_some(n)
    }
}

impl fmt::Display for MinimalPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_poly().display_with('x'))
    }
}

/// Element `c0 + c1 r + ... + c_{d-1} r^{d-1}` of `Q(r)`, always reduced.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    coeffs: Vec<BigRational>,
}

impl FieldElement {
    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn degree_bound(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn add(&self, o: &FieldElement) -> FieldElement {
        debug_assert_eq!(self.coeffs.len(), o.coeffs.len());
        FieldElement {
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn add_assign(&mut self, o: &FieldElement) {
        for (a, b) in self.coeffs.iter_mut().zip(&o.coeffs) {
            *a += b;
        }
    }

    pub fn sub(&self, o: &FieldElement) -> FieldElement {
        FieldElement {
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn neg(&self) -> FieldElement {
        FieldElement {
            coeffs: self.coeffs.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, k: &BigRational) -> FieldElement {
        FieldElement {
            coeffs: self.coeffs.iter().map(|a| a * k).collect(),
        }
    }

    pub fn scale_int(&self, k: u128) -> FieldElement {
        self.scale(&BigRational::from_integer(BigInt::from(k)))
    }

    /// Element as a polynomial in the generator.
    pub fn to_poly(&self) -> Poly {
        Poly::new(self.coeffs.clone())
    }
}

#[derive(Serialize, Deserialize)]
struct ElementRepr {
    coeffs: Vec<String>,
}

impl Serialize for FieldElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ElementRepr {
            coeffs: self.coeffs.iter().map(|c| c.to_string()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FieldElement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ElementRepr::deserialize(d)?;
        let coeffs = repr
            .coeffs
            .iter()
            .map(|c| parse_rational(c))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(FieldElement { coeffs })
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_poly().display_with('r'))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Negative => -1,
            Sign::Zero => 0,
            Sign::Positive => 1,
        }
    }
}

/// Serializable description sufficient to rebuild a field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub minpoly: String,
    pub interval: [String; 2],
}

impl FieldSpec {
    pub fn build(&self) -> Result<NumberField> {
        let mp = MinimalPolynomial::parse(&self.minpoly)?;
        let lo = parse_rational(&self.interval[0])?;
        let hi = parse_rational(&self.interval[1])?;
        NumberField::new(mp, lo, hi)
    }
}

const SIGN_REFINEMENT_LIMIT: usize = 4000;

/// `Q(r)` for the unique root `r` of an integer polynomial inside an isolating
/// interval in `(0, 1)`.
///
/// Immutable apart from two monotone caches: the isolating interval only ever
/// shrinks, and cylinder sizes are memoized.
pub struct NumberField {
    minpoly: MinimalPolynomial,
    monic: Poly,
    degree: usize,
    irreducibility: Irreducibility,
    input_interval: (BigRational, BigRational),
    root: RwLock<(BigRational, BigRational)>,
    lower_sign_negative: bool,
    root_approx: f64,
    /// `x^{d+j}` reduced, for `j = 0..d-1`.
    reduction: Vec<Vec<BigRational>>,
    cylinders: RwLock<HashMap<Cylinder, FieldElement>>,
}

impl fmt::Debug for NumberField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumberField")
            .field("minpoly", &self.minpoly.to_string())
            .field("root", &self.root_approx)
            .finish()
    }
}

impl NumberField {
    /// Build the field, checking that `(lo, hi)` isolates exactly one root.
    pub fn new(minpoly: MinimalPolynomial, lo: BigRational, hi: BigRational) -> Result<Self> {
        if lo.is_negative() || hi > BigRational::one() || lo >= hi {
            return Err(Error::DegenerateInterval);
        }
        let d = minpoly.degree();
        let p = minpoly.to_poly();
        let monic = p.monic();
        let (irreducibility, root_lo, root_hi, lower_sign_negative) = if d == 1 {
            let root = -(monic.coeff(0));
            if root < lo || root > hi || !root.is_positive() || root >= BigRational::one() {
                return Err(Error::NoRootInInterval);
            }
            (Irreducibility::Irreducible, root.clone(), root, false)
        } else {
            let irr = irreducible::check(minpoly.coeffs());
            if let Irreducibility::Reducible { factor } = &irr {
                return Err(Error::ReduciblePolynomial { factor: factor.clone() });
            }
            let plo = p.eval(&lo);
            let phi = p.eval(&hi);
            if plo.is_zero() || phi.is_zero() {
                // A rational root of a polynomial of degree >= 2.
                return Err(Error::ReduciblePolynomial {
                    factor: "linear factor at an interval endpoint".into(),
                });
            }
            match p.count_roots(&lo, &hi) {
                0 => return Err(Error::NoRootInInterval),
                1 => {}
                count => return Err(Error::MultipleRootsInInterval { count }),
            }
            (irr, lo.clone(), hi.clone(), plo.is_negative())
        };
        let reduction = reduction_table(&monic, d);
        let field = NumberField {
            minpoly,
            monic,
            degree: d,
            irreducibility,
            input_interval: (lo, hi),
            root: RwLock::new((root_lo, root_hi)),
            lower_sign_negative,
            root_approx: 0.0,
            reduction,
            cylinders: RwLock::new(HashMap::new()),
        };
        let threshold = BigRational::new(BigInt::one(), BigInt::one() << 20u32);
        field.refine_root(&threshold);
        let fine = BigRational::new(BigInt::one(), BigInt::one() << 60u32);
        let (a, b) = field.refine_root(&fine);
        let root_approx = ((a + b) / rat(2)).to_f64().unwrap_or(f64::NAN);
        Ok(NumberField { root_approx, ..field })
    }

    /// Parse a polynomial such as `x^4+x-1` together with an interval.
    pub fn parse(minpoly: &str, lo: &str, hi: &str) -> Result<Self> {
        NumberField::new(
            MinimalPolynomial::parse(minpoly)?,
            parse_rational(lo)?,
            parse_rational(hi)?,
        )
    }

    /// Root of `x^n + x - 1` in `(0, 1)`.
    pub fn selmer(n: usize) -> Result<Self> {
        NumberField::new(MinimalPolynomial::selmer(n), rat(0), rat(1))
    }

    /// The rational field with `r = p/q`.
    pub fn rational(r: &BigRational) -> Result<Self> {
        let mp = MinimalPolynomial::new(&Poly::new(vec![-r.clone(), BigRational::one()]))?;
        NumberField::new(mp, rat(0), rat(1))
    }

    pub fn minpoly(&self) -> &MinimalPolynomial {
        &self.minpoly
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn irreducibility(&self) -> &Irreducibility {
        &self.irreducibility
    }

    pub fn selmer_exponent(&self) -> Option<usize> {
        self.minpoly.selmer_exponent()
    }

    pub fn root_approx(&self) -> f64 {
        self.root_approx
    }

    pub fn spec(&self) -> FieldSpec {
        FieldSpec {
            minpoly: self.minpoly.to_string(),
            interval: [self.input_interval.0.to_string(), self.input_interval.1.to_string()],
        }
    }

    /// Current isolating interval of the root.
    pub fn root_interval(&self) -> (BigRational, BigRational) {
        self.root.read().unwrap().clone()
    }

    /// Shrink the isolating interval below `width`; returns the new interval.
    pub fn refine_root(&self, width: &BigRational) -> (BigRational, BigRational) {
        {
            let cur = self.root.read().unwrap();
            if &(&cur.1 - &cur.0) < width {
                return cur.clone();
            }
        }
        let mut guard = self.root.write().unwrap();
        let p = &self.monic;
        let (mut lo, mut hi) = guard.clone();
        while &(&hi - &lo) >= width {
            let mid = (&lo + &hi) / rat(2);
            let v = p.eval(&mid);
            if v.is_zero() {
                lo = mid.clone();
                hi = mid;
                break;
            }
            if v.is_negative() == self.lower_sign_negative {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (&hi - &lo) < (&guard.1 - &guard.0) {
            *guard = (lo, hi);
        }
        guard.clone()
    }

    fn bisect_once(&self) {
        let cur = self.root_interval();
        let w = (&cur.1 - &cur.0) / rat(2);
        if w.is_zero() {
            return;
        }
        self.refine_root(&w);
    }

    // -- construction of elements ---------------------------------------

    pub fn zero(&self) -> FieldElement {
        FieldElement {
            coeffs: vec![BigRational::zero(); self.degree],
        }
    }

    pub fn one(&self) -> FieldElement {
        self.constant(BigRational::one())
    }

    pub fn constant(&self, c: BigRational) -> FieldElement {
        let mut e = self.zero();
        e.coeffs[0] = c;
        e
    }

    /// The generator `r`.
    pub fn generator(&self) -> FieldElement {
        self.reduce(&Poly::monomial(1))
    }

    /// Canonical representative of a polynomial modulo the minimal polynomial.
    pub fn reduce(&self, poly: &Poly) -> FieldElement {
        let r = if poly.degree().is_some_and(|d| d >= self.degree) {
            poly.rem(&self.monic)
        } else {
            poly.clone()
        };
        let mut coeffs = r.into_coeffs();
        coeffs.resize(self.degree, BigRational::zero());
        FieldElement { coeffs }
    }

    /// Element from explicit coefficients; must have length `degree`.
    pub fn element(&self, coeffs: Vec<BigRational>) -> Result<FieldElement> {
        if coeffs.len() != self.degree {
            return Err(Error::FieldMismatch);
        }
        Ok(FieldElement { coeffs })
    }

    pub fn check_element(&self, x: &FieldElement) -> Result<()> {
        if x.coeffs.len() != self.degree {
            Err(Error::FieldMismatch)
        } else {
            Ok(())
        }
    }

    // -- arithmetic ----------------------------------------------------------

    pub fn add(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        x.add(y)
    }

    pub fn sub(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        x.sub(y)
    }

    pub fn mul(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        let d = self.degree;
        let mut prod = vec![BigRational::zero(); 2 * d - 1];
        for (i, a) in x.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in y.coeffs.iter().enumerate() {
                if !b.is_zero() {
                    prod[i + j] += a * b;
                }
            }
        }
        self.fold_high(prod)
    }

    fn fold_high(&self, mut prod: Vec<BigRational>) -> FieldElement {
        let d = self.degree;
        for k in (d..prod.len()).rev() {
            let c = std::mem::take(&mut prod[k]);
            if c.is_zero() {
                continue;
            }
            for (j, t) in self.reduction[k - d].iter().enumerate() {
                if !t.is_zero() {
                    prod[j] += &c * t;
                }
            }
        }
        prod.truncate(d);
        FieldElement { coeffs: prod }
    }

    /// `x * r`
    pub fn mul_by_generator(&self, x: &FieldElement) -> FieldElement {
        let mut prod = Vec::with_capacity(self.degree + 1);
        prod.push(BigRational::zero());
        prod.extend(x.coeffs.iter().cloned());
        if self.degree == 1 {
            // r is the rational constant itself.
            let r = -self.monic.coeff(0);
            return FieldElement {
                coeffs: vec![&x.coeffs[0] * r],
            };
        }
        self.fold_high(prod)
    }

    pub fn pow(&self, x: &FieldElement, mut e: u64) -> FieldElement {
        let mut base = x.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            e >>= 1;
            if e > 0 {
                base = self.mul(&base, &base);
            }
        }
        acc
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(&self, x: &FieldElement) -> Option<FieldElement> {
        if x.is_zero() {
            return None;
        }
        // Solve a(x) u(x) + m(x) v(x) = 1.
        let (mut r0, mut r1) = (self.monic.clone(), x.to_poly());
        let (mut s0, mut s1) = (Poly::zero(), Poly::one());
        while !r1.is_zero() {
            let (q, r) = r0.div_rem(&r1);
            let s = s0.sub(&q.mul(&s1));
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s;
        }
        if r0.degree() != Some(0) {
            return None;
        }
        let c = r0.coeff(0).recip();
        Some(self.reduce(&s0.scale(&c)))
    }

    /// `r^a (1-r)^b`, memoized.
    pub fn cylinder(&self, c: Cylinder) -> FieldElement {
        if let Some(v) = self.cylinders.read().unwrap().get(&c) {
            return v.clone();
        }
        let v = if c.b > 0 {
            let prev = self.cylinder(Cylinder::new(c.a, c.b - 1));
            // prev * (1 - r)
            prev.sub(&self.mul_by_generator(&prev))
        } else if c.a > 0 {
            let prev = self.cylinder(Cylinder::new(c.a - 1, 0));
            self.mul_by_generator(&prev)
        } else {
            self.one()
        };
        self.cylinders.write().unwrap().insert(c, v.clone());
        v
    }

    pub fn eval_cylinder(&self, a: u32, b: u32) -> FieldElement {
        self.cylinder(Cylinder::new(a, b))
    }

    // -- ordering ------------------------------------------------------------

    /// Floating-point approximation, for pruning only.
    pub fn approx(&self, x: &FieldElement) -> f64 {
        let r = self.root_approx;
        x.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * r + c.to_f64().unwrap_or(0.0))
    }

    pub fn approx_cylinder(&self, c: Cylinder) -> f64 {
        let r = self.root_approx;
        r.powi(c.a as i32) * (1.0 - r).powi(c.b as i32)
    }

    /// Enclosure of the value of `x` over the current root interval.
    fn enclose(&self, x: &FieldElement) -> (BigRational, BigRational) {
        let (lo, hi) = self.root_interval();
        // Split x into positive and negative parts; both are nondecreasing on [0, 1].
        let mut pos_lo = BigRational::zero();
        let mut pos_hi = BigRational::zero();
        let mut neg_lo = BigRational::zero();
        let mut neg_hi = BigRational::zero();
        let mut plo = BigRational::one();
        let mut phi = BigRational::one();
        for c in &x.coeffs {
            if c.is_positive() {
                pos_lo += c * &plo;
                pos_hi += c * &phi;
            } else if c.is_negative() {
                neg_lo -= c * &plo;
                neg_hi -= c * &phi;
            }
            plo *= &lo;
            phi *= &hi;
        }
        (&pos_lo - &neg_hi, &pos_hi - &neg_lo)
    }

    /// Exact sign. Zero is decided by coefficient equality, never numerically.
    pub fn sign(&self, x: &FieldElement) -> Result<Sign> {
        self.sign_and_interval(x, None).map(|(s, _)| s)
    }

    /// Exact sign plus a rational enclosure of width below `eps` (when given).
    pub fn sign_and_interval(
        &self,
        x: &FieldElement,
        eps: Option<&BigRational>,
    ) -> Result<(Sign, (BigRational, BigRational))> {
        if x.is_zero() {
            return Ok((Sign::Zero, (BigRational::zero(), BigRational::zero())));
        }
        for _ in 0..SIGN_REFINEMENT_LIMIT {
            let (lo, hi) = self.enclose(x);
            let narrow = eps.is_none_or(|e| &(&hi - &lo) < e);
            if narrow {
                if lo.is_positive() {
                    return Ok((Sign::Positive, (lo, hi)));
                }
                if hi.is_negative() {
                    return Ok((Sign::Negative, (lo, hi)));
                }
            }
            self.bisect_once();
        }
        Err(Error::SignUndetermined {
            steps: SIGN_REFINEMENT_LIMIT,
        })
    }

    /// Exact comparison of two elements.
    pub fn compare(&self, x: &FieldElement, y: &FieldElement) -> Result<std::cmp::Ordering> {
        Ok(match self.sign(&x.sub(y))? {
            Sign::Negative => std::cmp::Ordering::Less,
            Sign::Zero => std::cmp::Ordering::Equal,
            Sign::Positive => std::cmp::Ordering::Greater,
        })
    }

    // -- subfields generated by powers ----------------------------------

    /// Minimal polynomial of an element (squarefree part of its characteristic
    /// polynomial).
    pub fn minimal_polynomial_of(&self, x: &FieldElement) -> Poly {
        let d = self.degree;
        // Multiplication matrix, columns = x * r^j.
        let mut cols = Vec::with_capacity(d);
        let mut basis = self.one();
        for _ in 0..d {
            cols.push(self.mul(x, &basis).coeffs);
            basis = self.mul_by_generator(&basis);
        }
        let a = linalg::columns_to_rows(&cols);
        let charpoly = faddeev_leverrier(&a);
        let g = charpoly.gcd(&charpoly.derivative());
        charpoly.div_rem(&g).0.monic()
    }

    /// Field of `s = r^m` together with the embedding `s -> r^m` into this field.
    pub fn power_subfield(&self, m: u32) -> Result<(NumberField, FieldEmbedding)> {
        let s_in_r = self.pow(&self.generator(), m as u64);
        let mp_poly = self.minimal_polynomial_of(&s_in_r);
        if mp_poly.degree() != Some(self.degree) {
            return Err(Error::NotAGenerator);
        }
        let mp = MinimalPolynomial::new(&mp_poly)?;
        let p = mp.to_poly();
        // Isolate s inside (lo^m, hi^m).
        let mut width = BigRational::new(BigInt::one(), BigInt::from(1u64 << 20));
        let (lo, hi) = loop {
            let (lo, hi) = self.refine_root(&width);
            let slo = num_traits::pow(lo.clone(), m as usize);
            let shi = num_traits::pow(hi.clone(), m as usize);
            if !p.eval(&slo).is_zero() && !p.eval(&shi).is_zero() && p.count_roots(&slo, &shi) == 1 {
                break (slo, shi);
            }
            width /= rat(16);
            if width < BigRational::new(BigInt::one(), BigInt::one() << 400u32) {
                return Err(Error::NoRootInInterval);
            }
        };
        let sfield = NumberField::new(mp, lo, hi)?;
        let embedding = FieldEmbedding::new(self, &sfield, &s_in_r)?;
        Ok((sfield, embedding))
    }
}

fn reduction_table(monic: &Poly, d: usize) -> Vec<Vec<BigRational>> {
    if d == 0 {
        return Vec::new();
    }
    // x^d = -(c0 + c1 x + ... + c_{d-1} x^{d-1})
    let mut cur: Vec<BigRational> = (0..d).map(|i| -monic.coeff(i)).collect();
    let mut table = vec![cur.clone()];
    for _ in 1..d.max(1) {
        // multiply by x
        let top = cur[d - 1].clone();
        let mut next = vec![BigRational::zero(); d];
        for i in (1..d).rev() {
            next[i] = cur[i - 1].clone();
        }
        for (i, t) in table[0].iter().enumerate() {
            next[i] += &top * t;
        }
        table.push(next.clone());
        cur = next;
    }
    table
}

fn faddeev_leverrier(a: &linalg::Matrix) -> Poly {
    let n = a.len();
    let identity = |c: &BigRational| -> linalg::Matrix {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { c.clone() } else { BigRational::zero() })
                    .collect()
            })
            .collect()
    };
    let matmul = |x: &linalg::Matrix, y: &linalg::Matrix| -> linalg::Matrix {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).fold(BigRational::zero(), |acc, k| acc + &x[i][k] * &y[k][j]))
                    .collect()
            })
            .collect()
    };
    let mut coeffs = vec![BigRational::zero(); n + 1];
    coeffs[n] = BigRational::one();
    let mut m = identity(&BigRational::zero());
    for k in 1..=n {
        let shifted = {
            let mut t = matmul(a, &m);
            for (i, row) in t.iter_mut().enumerate() {
                row[i] += &coeffs[n - k + 1];
            }
            t
        };
        m = shifted;
        let am = matmul(a, &m);
        let trace = (0..n).fold(BigRational::zero(), |acc, i| acc + &am[i][i]);
        coeffs[n - k] = -trace / rat(k as i64);
    }
    Poly::new(coeffs)
}

/// Embedding of a field `Q(s)` into `Q(r)` determined by the image of `s`.
#[derive(Clone, Debug)]
pub struct FieldEmbedding {
    /// Images of `s^j`, as coefficient vectors in the target field.
    images: Vec<FieldElement>,
    /// Inverse of the image matrix when the embedding is onto.
    inverse: Option<linalg::Matrix>,
}

impl FieldEmbedding {
    pub fn new(target: &NumberField, source: &NumberField, image_of_gen: &FieldElement) -> Result<Self> {
        let d = source.degree();
        let mut images = Vec::with_capacity(d);
        let mut cur = target.one();
        for _ in 0..d {
            images.push(cur.clone());
            cur = target.mul(&cur, image_of_gen);
        }
        // Check the defining relation maps to zero.
        let relation = source.minpoly().to_poly();
        let mut acc = target.zero();
        let mut p = target.one();
        for c in relation.coeffs() {
            acc.add_assign(&p.scale(c));
            p = target.mul(&p, image_of_gen);
        }
        if !acc.is_zero() {
            return Err(Error::FieldMismatch);
        }
        let inverse = if d == target.degree() {
            let cols: Vec<Vec<BigRational>> = images.iter().map(|e| e.coeffs.clone()).collect();
            linalg::inverse(&linalg::columns_to_rows(&cols))
        } else {
            None
        };
        Ok(FieldEmbedding { images, inverse })
    }

    /// The identity embedding of a field into itself.
    pub fn identity(field: &NumberField) -> Self {
        FieldEmbedding::new(field, field, &field.generator()).expect("identity embedding")
    }

    pub fn apply(&self, x: &FieldElement) -> FieldElement {
        let mut acc = self.images[0].scale(&BigRational::zero());
        for (c, img) in x.coeffs.iter().zip(&self.images) {
            if !c.is_zero() {
                acc.add_assign(&img.scale(c));
            }
        }
        acc
    }

    /// Preimage of an element of the target field, when the embedding is onto.
    pub fn preimage(&self, y: &FieldElement) -> Option<FieldElement> {
        let inv = self.inverse.as_ref()?;
        Some(FieldElement {
            coeffs: linalg::mat_vec(inv, &y.coeffs),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn selmer4() -> NumberField {
        NumberField::parse("x^4+x-1", "7/10", "8/10").unwrap()
    }

    #[test]
    fn make_field_examples() {
        let f = selmer4();
        assert_eq!(f.degree(), 4);
        assert!((f.root_approx() - 0.7244919590).abs() < 1e-10);
        let (lo, hi) = f.root_interval();
        assert!(&hi - &lo < BigRational::new(1.into(), (1u64 << 20).into()));

        let half = NumberField::parse("2x-1", "0", "1").unwrap();
        assert_eq!(half.degree(), 1);
        assert_eq!(half.root_approx(), 0.5);

        assert_eq!(
            NumberField::parse("x^2+1", "0", "1").unwrap_err(),
            Error::NoRootInInterval
        );
        assert_eq!(
            NumberField::parse("x^4+x-1", "1/2", "1/2").unwrap_err(),
            Error::DegenerateInterval
        );
        assert!(matches!(
            NumberField::parse("x^2-x+1/5", "0", "1").unwrap_err(),
            Error::MultipleRootsInInterval { count: 2 }
        ));
    }

    #[test]
    fn reduce_examples() {
        let f = selmer4();
        assert_eq!(
            f.reduce(&Poly::monomial(4)).coeffs(),
            &[rat(1), rat(-1), rat(0), rat(0)]
        );
        assert_eq!(
            f.reduce(&Poly::monomial(5)).coeffs(),
            &[rat(0), rat(1), rat(-1), rat(0)]
        );
        assert_eq!(
            f.reduce(&Poly::from_ints(&[7])).coeffs(),
            &[rat(7), rat(0), rat(0), rat(0)]
        );
        assert!(f.reduce(&f.minpoly().to_poly()).is_zero());
    }

    #[test]
    fn arith_examples() {
        let f = selmer4();
        let r = f.generator();
        assert_eq!(f.mul(&r, &r), f.reduce(&Poly::monomial(2)));
        let r4 = f.pow(&r, 4);
        assert_eq!(f.add(&r4, &r), f.one());

        let s = NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap();
        let sg = s.generator();
        let one_minus_s2 = s.one().sub(&s.mul(&sg, &sg));
        assert_eq!(s.pow(&one_minus_s2, 2), sg);
    }

    #[test]
    fn cylinder_examples() {
        let f = selmer4();
        assert_eq!(f.eval_cylinder(0, 0), f.one());
        assert_eq!(f.eval_cylinder(0, 1), f.eval_cylinder(4, 0));
        let third = NumberField::rational(&BigRational::new(1.into(), 3.into())).unwrap();
        assert_eq!(
            third.eval_cylinder(1, 1).coeffs(),
            &[BigRational::new(2.into(), 9.into())]
        );
    }

    #[test]
    fn sign_examples() {
        let f = selmer4();
        let (s, iv) = f.sign_and_interval(&f.zero(), None).unwrap();
        assert_eq!(s, Sign::Zero);
        assert!(iv.0.is_zero() && iv.1.is_zero());
        let eps = BigRational::new(1.into(), 1_000_000.into());
        let (s, (lo, hi)) = f.sign_and_interval(&f.generator(), Some(&eps)).unwrap();
        assert_eq!(s, Sign::Positive);
        assert!(&hi - &lo < eps);
        let mid = ((lo + hi) / rat(2)).to_f64().unwrap();
        assert!((mid - 0.724492).abs() < 1e-5);
        let rel = f.one().sub(&f.generator()).sub(&f.pow(&f.generator(), 4));
        assert_eq!(f.sign(&rel).unwrap(), Sign::Zero);
        // r^2 < r
        let r = f.generator();
        assert_eq!(f.compare(&f.mul(&r, &r), &r).unwrap(), std::cmp::Ordering::Less);
    }

    #[test]
    fn derived_square_field() {
        let f = selmer4();
        let (s, emb) = f.power_subfield(2).unwrap();
        assert_eq!(s.minpoly().to_string(), "x^4-2*x^2-x+1");
        assert!((s.root_approx() - f.root_approx().powi(2)).abs() < 1e-12);
        // r = 1 - s^2 pulled back into Q(s).
        let r_in_s = emb.preimage(&f.generator()).unwrap();
        let sg = s.generator();
        assert_eq!(r_in_s, s.one().sub(&s.mul(&sg, &sg)));
    }

    #[test]
    fn inverse_roundtrip() {
        let f = selmer4();
        let x = f.reduce(&Poly::from_ints(&[3, -1, 2]));
        let y = f.inv(&x).unwrap();
        assert_eq!(f.mul(&x, &y), f.one());
    }
}
