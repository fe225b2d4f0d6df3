mod common;

use cantor_core::binomial::{complement_rep, cylinder_rep, product_rep, search_rep, BinomialRep, SearchOutcome};
use cantor_core::cylinder::Cylinder;
use cantor_core::numberfield::NumberField;
use cantor_core::Fuel;
use common::{cyl, from_lib, q, Oracle, P};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn choose(n: u32, k: u32) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// `sum a_i x^i (1-x)^(n-i)` as a polynomial over the integers.
fn expand(n: u32, a: &[u64]) -> P {
    a.iter().enumerate().fold(P(vec![]), |acc, (i, &ai)| {
        acc.add(&cyl(i as u32, n - i as u32).scale(&q(ai as i64)))
    })
}

/// Every coefficient vector with `n <= n_max`, least `n` first, then
/// lexicographically.
fn all_reps(n_max: u32) -> Vec<(u32, Vec<u64>)> {
    let mut out = Vec::new();
    for n in 0..=n_max {
        let mut a = vec![0u64; n as usize + 1];
        loop {
            out.push((n, a.clone()));
            let mut i = n as usize;
            loop {
                if a[i] < choose(n, i as u32) {
                    a[i] += 1;
                    break;
                }
                a[i] = 0;
                if i == 0 {
                    break;
                }
                i -= 1;
            }
            if a.iter().all(|&v| v == 0) {
                break;
            }
        }
    }
    out
}

#[test]
fn only_four_values_have_degree_at_most_one() {
    let mut low: Vec<P> = all_reps(3)
        .into_iter()
        .map(|(n, a)| expand(n, &a))
        .filter(|p| p.deg().is_none_or(|d| d <= 1))
        .collect();
    low.sort_by_key(|p| format!("{p:?}"));
    low.dedup();
    let mut want = vec![P(vec![]), P::one(), P::x(), P::one_minus_x()];
    want.sort_by_key(|p| format!("{p:?}"));
    assert_eq!(low, want);
}

#[test]
fn search_finds_the_least_representation() {
    let f = NumberField::selmer(4).unwrap();
    let fuel = Fuel::new(Fuel::DEFAULT);
    let reps = all_reps(3);
    for (n, a) in reps.iter().step_by(7) {
        let target = BinomialRep::from_u64(*n, a).unwrap().value(&f).unwrap();
        let least = reps
            .iter()
            .find(|(m, b)| BinomialRep::from_u64(*m, b).unwrap().value(&f).unwrap() == target)
            .unwrap();
        let want = BinomialRep::from_u64(least.0, &least.1).unwrap();
        assert_eq!(search_rep(&target, &f, 3, &fuel).unwrap(), SearchOutcome::Found(want));
    }
}

#[test]
fn search_reports_absence() {
    let f = NumberField::selmer(3).unwrap();
    let fuel = Fuel::new(Fuel::DEFAULT);
    // 2 is not a probability.
    let two = f.one().add(&f.one());
    assert_eq!(
        search_rep(&two, &f, 4, &fuel).unwrap(),
        SearchOutcome::NotFound { n_max: 4 }
    );
}

#[test]
fn flagship_representations() {
    let fuel = Fuel::new(Fuel::DEFAULT);
    let r = NumberField::selmer(4).unwrap();
    let s = r.cylinder(Cylinder::new(2, 0));
    assert_eq!(
        search_rep(&s, &r, 6, &fuel).unwrap(),
        SearchOutcome::Found(BinomialRep::from_u64(2, &[0, 0, 1]).unwrap())
    );
    let sf = NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap();
    let r_in_s = sf.one().sub(&sf.cylinder(Cylinder::new(2, 0)));
    assert_eq!(
        search_rep(&r_in_s, &sf, 6, &fuel).unwrap(),
        SearchOutcome::Found(BinomialRep::from_u64(2, &[1, 2, 0]).unwrap())
    );
}

fn rep_strategy(n_max: u32) -> impl Strategy<Value = BinomialRep> {
    (0..=n_max).prop_flat_map(|n| {
        let caps: Vec<_> = (0..=n).map(|i| 0..=choose(n, i)).collect();
        caps.prop_map(move |a| BinomialRep::from_u64(n, &a).unwrap())
    })
}

fn oracle_value(rep: &BinomialRep) -> P {
    let a: Vec<u64> = rep.a.iter().map(|v: &BigUint| v.to_u64().unwrap()).collect();
    expand(rep.n, &a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closure_laws_hold_exactly(x in rep_strategy(6), y in rep_strategy(5), p in 0u32..3, k in 0u32..3) {
        let f = NumberField::selmer(4).unwrap();
        let o = Oracle::selmer(4);
        let (vx, vy) = (oracle_value(&x), oracle_value(&y));
        prop_assert_eq!(from_lib(&x.value(&f).unwrap()), o.reduce(&vx));
        let c = complement_rep(&x);
        c.check().unwrap();
        prop_assert_eq!(from_lib(&c.value(&f).unwrap()), o.reduce(&P::one().sub(&vx)));
        let m = product_rep(&x, &y);
        m.check().unwrap();
        prop_assert_eq!(from_lib(&m.value(&f).unwrap()), o.reduce(&vx.mul(&vy)));
        let cr = cylinder_rep(p, k, &y);
        cr.check().unwrap();
        let want = vy.pow(p).mul(&P::one().sub(&vy).pow(k));
        prop_assert_eq!(from_lib(&cr.value(&f).unwrap()), o.reduce(&want));
    }

    #[test]
    fn serde_round_trip(x in rep_strategy(8)) {
        let json = serde_json::to_string(&x).unwrap();
        prop_assert_eq!(serde_json::from_str::<BinomialRep>(&json).unwrap(), x);
    }
}
