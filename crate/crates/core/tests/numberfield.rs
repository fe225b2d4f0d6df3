mod common;

use cantor_core::cylinder::Cylinder;
use cantor_core::numberfield::{FieldElement, NumberField, Sign};
use common::{cyl, from_lib, q, Oracle, P};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn s_field() -> NumberField {
    NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap()
}

fn elem(f: &NumberField, c: &[i64]) -> FieldElement {
    f.element(c.iter().map(|&v| q(v)).collect()).unwrap()
}

#[test]
fn cylinder_values_match_oracle() {
    for (f, o) in [
        (NumberField::selmer(4).unwrap(), Oracle::selmer(4)),
        (NumberField::selmer(7).unwrap(), Oracle::selmer(7)),
        (s_field(), Oracle::s_field()),
    ] {
        for a in 0..9 {
            for b in 0..9 {
                let lib = from_lib(&f.cylinder(Cylinder::new(a, b)));
                assert_eq!(lib, o.reduce(&cyl(a, b)), "({a},{b})");
            }
        }
    }
}

#[test]
fn root_approximation_matches_bisection() {
    for (f, o) in [
        (NumberField::selmer(2).unwrap(), Oracle::selmer(2)),
        (NumberField::selmer(4).unwrap(), Oracle::selmer(4)),
        (s_field(), Oracle::s_field()),
    ] {
        assert!((f.root_approx() - o.root_f64()).abs() < 1e-12);
    }
    let r = Oracle::selmer(4).root_f64();
    assert!((Oracle::s_field().root_f64() - r * r).abs() < 1e-12);
}

#[test]
fn s_is_the_square_of_r() {
    let r = NumberField::selmer(4).unwrap();
    let (s, emb) = r.power_subfield(2).unwrap();
    assert_eq!(s.minpoly().coeffs(), s_field().minpoly().coeffs());
    assert_eq!(emb.apply(&s.generator()), r.cylinder(Cylinder::new(2, 0)));
}

#[test]
fn rational_field_is_exact() {
    let third = BigRational::new(BigInt::from(1), BigInt::from(3));
    let f = NumberField::rational(&third).unwrap();
    let x = f.cylinder(Cylinder::new(2, 3));
    assert_eq!(x.coeffs()[0], BigRational::new(BigInt::from(8), BigInt::from(243)));
}

fn small_coeffs() -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::vec(-9i64..=9, 4)
}

proptest! {
    #[test]
    fn ring_ops_agree_with_oracle(x in small_coeffs(), y in small_coeffs()) {
        let f = s_field();
        let o = Oracle::s_field();
        let (ex, ey) = (elem(&f, &x), elem(&f, &y));
        let (px, py) = (P::ints(&x), P::ints(&y));
        prop_assert_eq!(from_lib(&f.add(&ex, &ey)), o.reduce(&px.add(&py)));
        prop_assert_eq!(from_lib(&f.sub(&ex, &ey)), o.reduce(&px.sub(&py)));
        prop_assert_eq!(from_lib(&f.mul(&ex, &ey)), o.reduce(&px.mul(&py)));
        prop_assert_eq!(from_lib(&f.pow(&ex, 3)), o.reduce(&px.pow(3)));
    }

    #[test]
    fn inverse_is_a_two_sided_inverse(x in small_coeffs()) {
        let f = NumberField::selmer(4).unwrap();
        let o = Oracle::selmer(4);
        let ex = elem(&f, &x);
        match f.inv(&ex) {
            None => prop_assert!(ex.is_zero()),
            Some(inv) => {
                let prod = P::ints(&x).mul(&from_lib(&inv));
                prop_assert_eq!(o.reduce(&prod), P::one());
            }
        }
    }

    #[test]
    fn sign_agrees_with_oracle(x in small_coeffs()) {
        let f = s_field();
        let o = Oracle::s_field();
        let got = f.sign(&elem(&f, &x)).unwrap();
        if let Some(want) = o.sign(&P::ints(&x)) {
            prop_assert_eq!(got.as_i8(), want);
        }
        prop_assert_eq!(got == Sign::Zero, x.iter().all(|&v| v == 0));
    }

    #[test]
    fn cylinder_sizes_are_in_the_unit_interval(a in 0u32..12, b in 0u32..12) {
        let f = NumberField::selmer(3).unwrap();
        let v = f.cylinder(Cylinder::new(a, b));
        prop_assert_eq!(f.sign(&v).unwrap(), Sign::Positive);
        let d = f.sign(&f.one().sub(&v)).unwrap();
        prop_assert_eq!(d == Sign::Zero, a + b == 0);
    }
}
