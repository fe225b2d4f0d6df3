mod common;

use cantor_core::cylinder::{Cylinder, CylinderMultiset};
use cantor_core::numberfield::NumberField;
use cantor_core::refiner::sampling::{random_partition, SampleBounds};
use cantor_core::refiner::{
    check_rational_obstruction, refine_partition, verify_certificate, Certificate, ObstructionOutcome, RefineOptions,
    StrategyRegistry, AUTO,
};
use cantor_core::{Error, Fuel};
use common::{brute_force_rational, oracle_check_certificate, qf, tree_partitions, Oracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ms(s: &str) -> CylinderMultiset {
    s.parse().unwrap()
}

fn fields() -> Vec<(NumberField, Oracle)> {
    vec![
        (NumberField::selmer(3).unwrap(), Oracle::selmer(3)),
        (NumberField::selmer(4).unwrap(), Oracle::selmer(4)),
        (
            NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap(),
            Oracle::s_field(),
        ),
    ]
}

/// Canonical forms in the field of `s` grow quickly with the exponents, so
/// instances there are kept small.
fn bounds_for(f: &NumberField) -> SampleBounds {
    if f.selmer_exponent().is_some() {
        SampleBounds::default()
    } else {
        SampleBounds {
            max_items: 6,
            max_exponent: 6,
            max_steps: 2,
        }
    }
}

#[test]
fn random_certificates_pass_the_oracle() {
    let reg = StrategyRegistry::with_defaults();
    let trees = tree_partitions(4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (f, o) in fields() {
        for _ in 0..12 {
            let (c, parts) = random_partition(&mut rng, &f, 2, bounds_for(&f)).unwrap();
            let fuel = Fuel::new(Fuel::DEFAULT);
            let cert = refine_partition(&reg, &f, c, &parts, AUTO, &RefineOptions::default(), &fuel).unwrap();
            oracle_check_certificate(&o, &cert).unwrap();
            verify_certificate(&cert, &fuel).unwrap();
            if cert.partition.depth() <= 4 {
                let root = cert.partition.root.len();
                let mut mine: Vec<Vec<u8>> = cert
                    .partition
                    .leaves
                    .iter()
                    .map(|l| l.bits()[root..].to_vec())
                    .collect();
                mine.sort();
                assert!(trees.contains(&mine));
            }
        }
    }
}

#[test]
fn generic_strategy_matches_canonical_on_small_instances() {
    let reg = StrategyRegistry::with_defaults();
    let f = NumberField::selmer(4).unwrap();
    let o = Oracle::selmer(4);
    let fuel = Fuel::new(Fuel::DEFAULT);
    for parts in ["3,0;0,3;1,1*3", "1,0;0,1", "4,0;1,1;0,2;1,0"] {
        let parts = ms(parts);
        if parts.sum(&f) != f.one() {
            continue;
        }
        for name in ["generic", "selmer"] {
            let cert =
                refine_partition(&reg, &f, Cylinder::ONE, &parts, name, &RefineOptions::default(), &fuel).unwrap();
            assert_eq!(cert.strategy, name);
            oracle_check_certificate(&o, &cert).unwrap();
            verify_certificate(&cert, &fuel).unwrap();
        }
    }
}

#[test]
fn auto_falls_back_when_the_canonical_form_is_huge() {
    let reg = StrategyRegistry::with_defaults();
    let f = NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap();
    let c = Cylinder::new(1, 2);
    let parts = ms("1,4;2,3;4,2;1,6;3,4;4,3;5,2;2,6*2;5,3;3,6;6,3");
    let opts = RefineOptions::default();
    let fuel = Fuel::new(Fuel::DEFAULT);
    assert!(matches!(
        refine_partition(&reg, &f, c, &parts, "r4s", &opts, &fuel),
        Err(Error::TooManyLeaves { .. })
    ));
    let cert = refine_partition(&reg, &f, c, &parts, AUTO, &opts, &fuel).unwrap();
    assert_eq!(cert.strategy, "generic");
    oracle_check_certificate(&Oracle::s_field(), &cert).unwrap();
    verify_certificate(&cert, &fuel).unwrap();
}

#[test]
fn certificate_json_is_stable() {
    let reg = StrategyRegistry::with_defaults();
    let f = NumberField::selmer(4).unwrap();
    let fuel = Fuel::new(Fuel::DEFAULT);
    let cert = refine_partition(
        &reg,
        &f,
        Cylinder::ONE,
        &ms("3,0;0,3;1,1*3"),
        AUTO,
        &RefineOptions::default(),
        &fuel,
    )
    .unwrap();
    let json = cert.to_json();
    let back = Certificate::from_json(&json).unwrap();
    assert_eq!(back.to_json(), json);
    verify_certificate(&back, &fuel).unwrap();
}

#[test]
fn tampered_certificates_are_rejected() {
    let reg = StrategyRegistry::with_defaults();
    let f = NumberField::selmer(4).unwrap();
    let o = Oracle::selmer(4);
    let fuel = Fuel::new(Fuel::DEFAULT);
    let cert = refine_partition(
        &reg,
        &f,
        Cylinder::ONE,
        &ms("3,0;0,3;1,1*3"),
        AUTO,
        &RefineOptions::default(),
        &fuel,
    )
    .unwrap();

    let mut bad = cert.clone();
    let g = bad.grouping.iter().position(|&g| g != bad.grouping[0]).unwrap();
    bad.grouping.swap(0, g);
    assert!(verify_certificate(&bad, &fuel).is_err());
    assert!(oracle_check_certificate(&o, &bad).is_err());

    let mut bad = cert.clone();
    bad.partition.leaves.pop();
    assert!(verify_certificate(&bad, &fuel).is_err());
    assert!(oracle_check_certificate(&o, &bad).is_err());

    let mut bad = cert.clone();
    bad.witness.p[0][0] += 1;
    assert!(verify_certificate(&bad, &fuel).is_err());

    let mut bad = cert;
    bad.trace.a.moves.pop();
    assert!(verify_certificate(&bad, &fuel).is_err());
}

#[test]
fn preconditions_and_registry_errors() {
    let reg = StrategyRegistry::with_defaults();
    let f = NumberField::selmer(4).unwrap();
    let fuel = Fuel::new(Fuel::DEFAULT);
    let opts = RefineOptions::default();
    let r = |parts: &str, name: &str| refine_partition(&reg, &f, Cylinder::ONE, &ms(parts), name, &opts, &fuel);
    assert!(matches!(r("1,0;0,1", "nope"), Err(Error::UnknownStrategy(_))));
    assert!(matches!(r("1,0;0,1", "r4s"), Err(Error::StrategyInapplicable { .. })));
    assert!(matches!(r("1,0;1,0", AUTO), Err(Error::SumMismatch)));
    assert!(matches!(r("", AUTO), Err(Error::Malformed(_))));
    assert_eq!(reg.names(), vec!["selmer", "r4s", "generic"]);
}

#[test]
fn rational_obstruction_agrees_with_brute_force() {
    let third = qf(1, 3);
    let rep = check_rational_obstruction(&third, &ms("1,0*3"), 4, &Fuel::new(Fuel::DEFAULT)).unwrap();
    assert_eq!(rep.outcome, ObstructionOutcome::NoTreeRefinementUpTo { depth: 4 });
    assert!(!brute_force_rational(&third, &[qf(1, 3), qf(1, 3), qf(1, 3)], 4));
    assert!(rep.ones_leaf.holds);

    let half = qf(1, 2);
    let rep = check_rational_obstruction(&half, &ms("1,0;1,1;0,2"), 4, &Fuel::new(Fuel::DEFAULT)).unwrap();
    assert!(matches!(rep.outcome, ObstructionOutcome::Refinement { .. }));
    assert!(brute_force_rational(&half, &[qf(1, 2), qf(1, 4), qf(1, 4)], 4));

    let rep = check_rational_obstruction(&third, &ms("1,0;0,1"), 4, &Fuel::new(Fuel::DEFAULT)).unwrap();
    assert!(matches!(rep.outcome, ObstructionOutcome::Refinement { .. }));
    assert!(brute_force_rational(&third, &[qf(1, 3), qf(2, 3)], 1));
}
