use std::collections::BTreeSet;

use cantor_core::cylinder::{
    coarsen, count_tree_partitions, for_each_tree_partition, leaf_size, Address, Cylinder, CylinderMultiset,
    TreePartition,
};
use cantor_core::Error;
use num_bigint::BigUint;
use proptest::prelude::*;

fn addr(s: &str) -> Address {
    s.parse().unwrap()
}

/// Trees of depth <= d, counted by the root being a leaf or a split.
fn tree_count(d: u32) -> u128 {
    if d == 0 {
        1
    } else {
        let t = tree_count(d - 1);
        t * t + 1
    }
}

#[test]
fn enumeration_counts_match_the_recursion() {
    for d in 0..=4 {
        let mut seen = BTreeSet::new();
        for_each_tree_partition(&addr("10"), d, |leaves| {
            let mut v = leaves.to_vec();
            v.sort();
            let t = TreePartition::new(addr("10"), v.clone());
            t.validate().unwrap();
            assert!(seen.insert(v), "duplicate partition");
        })
        .unwrap();
        assert_eq!(seen.len() as u128, tree_count(d));
        assert_eq!(count_tree_partitions(d), BigUint::from(tree_count(d)));
    }
    assert_eq!(count_tree_partitions(6), BigUint::from(tree_count(6)));
}

#[test]
fn validation_reports_prefixes_and_gaps() {
    let t = TreePartition::new(Address::root(), vec![addr("0"), addr("01"), addr("1")]);
    assert!(matches!(t.validate(), Err(Error::PrefixViolation(..))));
    let t = TreePartition::new(Address::root(), vec![addr("00"), addr("1")]);
    assert!(matches!(t.validate(), Err(Error::IncompletenessGap { missing }) if missing == addr("01")));
    let t = TreePartition::new(addr("1"), vec![addr("0"), addr("1")]);
    assert!(matches!(t.validate(), Err(Error::NotADescendant { .. })));
}

#[test]
fn multiset_text_round_trip() {
    let m: CylinderMultiset = "0,2;1,1*2;2,0".parse().unwrap();
    assert_eq!(m.count(), 4);
    assert_eq!(m.get(Cylinder::new(1, 1)), 2);
    let json = serde_json::to_string(&m).unwrap();
    assert_eq!(serde_json::from_str::<CylinderMultiset>(&json).unwrap(), m);
    assert!("1;2".parse::<CylinderMultiset>().is_err());
}

/// A random tree: each node below `depth` splits on a coin.
fn random_tree(depth: u32) -> impl Strategy<Value = Vec<Address>> {
    proptest::collection::vec(any::<bool>(), 1 << (depth + 1)).prop_map(move |coins| {
        let mut leaves = Vec::new();
        let mut stack = vec![(Address::root(), 1usize)];
        while let Some((a, heap)) = stack.pop() {
            if a.len() < depth as usize && coins[heap % coins.len()] {
                stack.push((a.child(0), 2 * heap));
                stack.push((a.child(1), 2 * heap + 1));
            } else {
                leaves.push(a);
            }
        }
        leaves
    })
}

proptest! {
    #[test]
    fn random_trees_satisfy_kraft_and_uniformize(leaves in random_tree(7), prefix in "[01]{0,3}") {
        let root = addr(&prefix);
        let leaves: Vec<Address> = leaves.iter().map(|l| root.concat(l.bits())).collect();
        let t = TreePartition::new(root.clone(), leaves);
        t.validate().unwrap();
        let (num, den) = t.kraft_sum();
        prop_assert_eq!(num, den);
        let u = t.uniformize().unwrap();
        for (i, &v) in u.row_counts.iter().enumerate() {
            prop_assert_eq!(v, cantor_core::cylinder::binomial(u.n, i as u32));
        }
        for (l, counts) in t.leaves.iter().zip(&u.leaf_counts) {
            let c = leaf_size(l, &root).unwrap();
            prop_assert_eq!(counts.iter().sum::<u128>(), 1u128 << (u.n - c.len()));
        }
    }

    #[test]
    fn coarsening_keeps_groups_and_validity(leaves in random_tree(6), seed in 0usize..4) {
        let t = TreePartition::new(Address::root(), leaves);
        // Group by a prefix bit so that merges are possible.
        let grouping: Vec<usize> = t
            .leaves
            .iter()
            .map(|l| l.bits().get(seed % 2).copied().unwrap_or(2) as usize)
            .collect();
        let (c, g) = coarsen(&t, &grouping);
        c.validate().unwrap();
        prop_assert!(c.leaves.len() <= t.leaves.len());
        // Every original leaf lies in exactly one coarse leaf with the same group.
        for (l, &gl) in t.leaves.iter().zip(&grouping) {
            let hits: Vec<usize> = c.leaves.iter().enumerate().filter(|(_, cl)| l.extends(cl)).map(|(i, _)| i).collect();
            prop_assert_eq!(hits.len(), 1);
            prop_assert_eq!(g[hits[0]], gl);
        }
        // No two sibling leaves share a group.
        for (i, a) in c.leaves.iter().enumerate() {
            if let Some(s) = a.sibling() {
                if let Some(j) = c.leaves.iter().position(|b| *b == s) {
                    prop_assert_ne!(g[i], g[j]);
                }
            }
        }
    }

    #[test]
    fn address_sizes_count_bits(bits in proptest::collection::vec(0u8..2, 0..40)) {
        let a = Address::from_bits(bits.clone());
        let ones = bits.iter().filter(|&&b| b == 1).count() as u32;
        prop_assert_eq!(a.size(), Cylinder::new(ones, bits.len() as u32 - ones));
        prop_assert_eq!(a.complement().size(), Cylinder::new(bits.len() as u32 - ones, ones));
        let text = serde_json::to_string(&a).unwrap();
        prop_assert_eq!(serde_json::from_str::<Address>(&text).unwrap(), a);
    }
}
