//! Cylinder sizes, binary addresses, tree partitions and refinement witnesses.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numberfield::{FieldElement, NumberField};

/// Largest uniform depth for which binomial counts are kept in `u128`.
pub const MAX_UNIFORM_DEPTH: u32 = 120;

/// Largest relative depth for literal enumeration of tree partitions.
pub const MAX_ENUMERATION_DEPTH: u32 = 5;

/// The size `r^a (1-r)^b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cylinder {
    pub a: u32,
    pub b: u32,
}

impl Cylinder {
    pub const ONE: Cylinder = Cylinder { a: 0, b: 0 };

    pub const fn new(a: u32, b: u32) -> Self {
        Cylinder { a, b }
    }

    /// Length of any address realizing this size.
    pub fn len(self) -> u32 {
        self.a + self.b
    }

    /// Product of two sizes.
    pub fn times(self, o: Cylinder) -> Cylinder {
        Cylinder::new(self.a + o.a, self.b + o.b)
    }

    pub fn shift(self, da: u32, db: u32) -> Cylinder {
        Cylinder::new(self.a + da, self.b + db)
    }

    /// `(r-child, (1-r)-child)`
    pub fn children(self) -> (Cylinder, Cylinder) {
        (self.shift(1, 0), self.shift(0, 1))
    }
}

impl Ord for Cylinder {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.a + self.b, self.a).cmp(&(o.a + o.b, o.a))
    }
}

impl PartialOrd for Cylinder {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

impl FromStr for Cylinder {
    type Err = Error;

    /// `a,b`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Malformed(format!("expected `a,b`, got `{s}`"));
        let (a, b) = s.trim().split_once(',').ok_or_else(bad)?;
        Ok(Cylinder::new(
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ))
    }
}

/// Finite multiset of cylinder sizes, ordered by `(a+b, a)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct CylinderMultiset {
    entries: BTreeMap<Cylinder, u64>,
}

impl CylinderMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(c: Cylinder) -> Self {
        let mut m = Self::new();
        m.insert(c, 1);
        m
    }

    pub fn insert(&mut self, c: Cylinder, mult: u64) {
        if mult > 0 {
            *self.entries.entry(c).or_insert(0) += mult;
        }
    }

    /// Checked insertion for the rewriting drivers, where counts can grow fast.
    pub fn add_checked(&mut self, c: Cylinder, mult: u64) -> Result<()> {
        if mult == 0 {
            return Ok(());
        }
        let e = self.entries.entry(c).or_insert(0);
        *e = e.checked_add(mult).ok_or(Error::Overflow("cylinder multiplicity"))?;
        Ok(())
    }

    /// Remove `mult` copies; all of them must be present.
    pub fn remove(&mut self, c: Cylinder, mult: u64) -> bool {
        match self.entries.get_mut(&c) {
            Some(m) if *m >= mult => {
                *m -= mult;
                if *m == 0 {
                    self.entries.remove(&c);
                }
                true
            }
            _ => false,
        }
    }

    /// Remove every copy of `c`, returning the multiplicity.
    pub fn take(&mut self, c: Cylinder) -> u64 {
        self.entries.remove(&c).unwrap_or(0)
    }

    pub fn get(&self, c: Cylinder) -> u64 {
        self.entries.get(&c).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cylinder, u64)> + '_ {
        self.entries.iter().map(|(c, m)| (*c, *m))
    }

    /// Every element with repetition, in canonical order.
    pub fn expand(&self) -> Vec<Cylinder> {
        self.iter()
            .flat_map(|(c, m)| std::iter::repeat_n(c, m as usize))
            .collect()
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_a(&self) -> Option<u32> {
        self.entries.keys().map(|c| c.a).max()
    }

    pub fn max_len(&self) -> Option<u32> {
        self.entries.keys().map(|c| c.len()).max()
    }

    pub fn first(&self) -> Option<Cylinder> {
        self.entries.keys().next().copied()
    }

    /// Multiply every element by `t`.
    pub fn scaled(&self, t: Cylinder) -> Self {
        CylinderMultiset {
            entries: self.entries.iter().map(|(c, m)| (c.times(t), *m)).collect(),
        }
    }

    pub fn union(&self, o: &CylinderMultiset) -> Self {
        let mut out = self.clone();
        for (c, m) in o.iter() {
            out.insert(c, m);
        }
        out
    }

    /// Exact sum in the field.
    pub fn sum(&self, field: &NumberField) -> FieldElement {
        let mut acc = field.zero();
        for (c, m) in self.iter() {
            acc.add_assign(&field.cylinder(c).scale_int(m as u128));
        }
        acc
    }
}

impl FromIterator<Cylinder> for CylinderMultiset {
    fn from_iter<I: IntoIterator<Item = Cylinder>>(iter: I) -> Self {
        let mut m = CylinderMultiset::new();
        for c in iter {
            m.insert(c, 1);
        }
        m
    }
}

impl FromIterator<(Cylinder, u64)> for CylinderMultiset {
    fn from_iter<I: IntoIterator<Item = (Cylinder, u64)>>(iter: I) -> Self {
        let mut m = CylinderMultiset::new();
        for (c, k) in iter {
            m.insert(c, k);
        }
        m
    }
}

impl fmt::Display for CylinderMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (c, m)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if m > 1 {
                write!(f, "{m}*")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for CylinderMultiset {
    type Err = Error;

    /// `a,b;a,b*k;...`
    fn from_str(s: &str) -> Result<Self> {
        let mut m = CylinderMultiset::new();
        for item in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (cyl, mult) = match item.split_once('*') {
                Some((c, k)) => (
                    c,
                    k.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::Malformed(format!("bad multiplicity in `{item}`")))?,
                ),
                None => (item, 1),
            };
            m.insert(cyl.parse()?, mult);
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct MultisetEntry {
    a: u32,
    b: u32,
    mult: u64,
}

impl Serialize for CylinderMultiset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(|(c, mult)| MultisetEntry { a: c.a, b: c.b, mult }))
    }
}

impl<'de> Deserialize<'de> for CylinderMultiset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<MultisetEntry>::deserialize(d)?;
        if entries.iter().any(|e| e.mult == 0) {
            return Err(serde::de::Error::custom("multiplicity must be positive"));
        }
        Ok(entries.into_iter().map(|e| (Cylinder::new(e.a, e.b), e.mult)).collect())
    }
}

/// Finite binary word; bit 1 selects the `r` branch, bit 0 the `1-r` branch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    bits: Vec<u8>,
}

impl Address {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Address { bits }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn child(&self, bit: u8) -> Address {
        let mut bits = Vec::with_capacity(self.bits.len() + 1);
        bits.extend_from_slice(&self.bits);
        bits.push(bit);
        Address { bits }
    }

    pub fn concat(&self, suffix: &[u8]) -> Address {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(suffix);
        Address { bits }
    }

    pub fn parent(&self) -> Option<Address> {
        let (_, rest) = self.bits.split_last()?;
        Some(Address { bits: rest.to_vec() })
    }

    pub fn sibling(&self) -> Option<Address> {
        let mut bits = self.bits.clone();
        let last = bits.last_mut()?;
        *last ^= 1;
        Some(Address { bits })
    }

    /// True when `self` extends (or equals) `prefix`.
    pub fn extends(&self, prefix: &Address) -> bool {
        self.bits.starts_with(&prefix.bits)
    }

    /// Every bit flipped.
    pub fn complement(&self) -> Address {
        Address {
            bits: self.bits.iter().map(|b| b ^ 1).collect(),
        }
    }

    /// `(ones, zeros)` of the whole word.
    pub fn size(&self) -> Cylinder {
        let ones = self.bits.iter().filter(|&&b| b == 1).count() as u32;
        Cylinder::new(ones, self.bits.len() as u32 - ones)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        f.write_str(">")
    }
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Malformed(format!("address `{s}` is not a bit string"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Address { bits })
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let text: String = self.bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Size of the part of `addr` below `relative_to`.
pub fn leaf_size(addr: &Address, relative_to: &Address) -> Result<Cylinder> {
    if !addr.extends(relative_to) {
        return Err(Error::NotADescendant {
            addr: addr.clone(),
            root: relative_to.clone(),
        });
    }
    let suffix = &addr.bits[relative_to.len()..];
    let ones = suffix.iter().filter(|&&b| b == 1).count() as u32;
    Ok(Cylinder::new(ones, suffix.len() as u32 - ones))
}

/// `C(n, k)` in `u128`; `n` must not exceed [`MAX_UNIFORM_DEPTH`].
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// A set of addresses below `root` obtained by repeated tree splits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreePartition {
    pub root: Address,
    pub leaves: Vec<Address>,
}

/// Result of extending every leaf to a common relative depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Uniformized {
    pub n: u32,
    /// Number of depth-`n` descendants with `i` ones, summed over leaves.
    pub row_counts: Vec<u128>,
    /// Per leaf, the number of its depth-`n` descendants with `i` ones.
    pub leaf_counts: Vec<Vec<u128>>,
}

impl TreePartition {
    pub fn new(root: Address, leaves: Vec<Address>) -> Self {
        TreePartition { root, leaves }
    }

    /// The trivial partition `{root}`.
    pub fn trivial(root: Address) -> Self {
        TreePartition {
            leaves: vec![root.clone()],
            root,
        }
    }

    /// Full binary tree of relative depth `depth`, leaves in lexicographic order.
    pub fn full(root: Address, depth: u32) -> Self {
        let mut leaves = vec![root.clone()];
        for _ in 0..depth {
            leaves = leaves.iter().flat_map(|l| [l.child(0), l.child(1)]).collect();
        }
        TreePartition { root, leaves }
    }

    /// Leaves sorted lexicographically.
    pub fn canonical(&self) -> TreePartition {
        let mut leaves = self.leaves.clone();
        leaves.sort();
        TreePartition {
            root: self.root.clone(),
            leaves,
        }
    }

    pub fn root_size(&self) -> Cylinder {
        self.root.size()
    }

    /// Largest leaf depth below the root.
    pub fn depth(&self) -> u32 {
        self.leaves
            .iter()
            .map(|l| l.len().saturating_sub(self.root.len()) as u32)
            .max()
            .unwrap_or(0)
    }

    /// Relative sizes of the leaves.
    pub fn leaf_sizes(&self) -> Result<Vec<Cylinder>> {
        self.leaves.iter().map(|l| leaf_size(l, &self.root)).collect()
    }

    /// Check that the leaves extend the root, are prefix-free, and cover it.
    pub fn validate(&self) -> Result<()> {
        for l in &self.leaves {
            leaf_size(l, &self.root)?;
        }
        let mut sorted: Vec<&Address> = self.leaves.iter().collect();
        sorted.sort();
        // In lexicographic order a prefix is immediately followed by an
        // extension of itself whenever it has one.
        for w in sorted.windows(2) {
            if w[1].extends(w[0]) {
                return Err(Error::PrefixViolation(w[0].clone(), w[1].clone()));
            }
        }
        if let Some(missing) = find_gap(&self.root, &sorted) {
            return Err(Error::IncompletenessGap { missing });
        }
        Ok(())
    }

    /// Kraft sum of the relative depths as `numerator / 2^depth`.
    pub fn kraft_sum(&self) -> (BigUint, BigUint) {
        let n = self.depth();
        let mut num = BigUint::zero();
        for l in &self.leaves {
            let rel = (l.len() - self.root.len().min(l.len())) as u32;
            num += BigUint::one() << (n - rel);
        }
        (num, BigUint::one() << n)
    }

    /// Extend every leaf to the maximum relative depth.
    pub fn uniformize(&self) -> Result<Uniformized> {
        let n = self.depth();
        if n > MAX_UNIFORM_DEPTH {
            return Err(Error::DepthTooLarge {
                depth: n as usize,
                max: MAX_UNIFORM_DEPTH as usize,
            });
        }
        let mut row_counts = vec![0u128; n as usize + 1];
        let mut leaf_counts = Vec::with_capacity(self.leaves.len());
        for l in &self.leaves {
            let c = leaf_size(l, &self.root)?;
            let free = n - c.len();
            let counts: Vec<u128> = (0..=n)
                .map(|i| if i < c.a { 0 } else { binomial(free, i - c.a) })
                .collect();
            for (acc, v) in row_counts.iter_mut().zip(&counts) {
                *acc += v;
            }
            leaf_counts.push(counts);
        }
        for (i, &got) in row_counts.iter().enumerate() {
            let expected = binomial(n, i as u32);
            if got != expected {
                return Err(Error::RowSumMismatch { row: i, got, expected });
            }
        }
        Ok(Uniformized {
            n,
            row_counts,
            leaf_counts,
        })
    }
}

fn find_gap(node: &Address, sorted: &[&Address]) -> Option<Address> {
    // `sorted` holds exactly the leaves extending `node`.
    match sorted {
        [] => Some(node.clone()),
        [only] if only.len() == node.len() => None,
        _ => {
            let depth = node.len();
            let split = sorted.partition_point(|l| l.len() == depth || l.bits[depth] == 0);
            let (zeros, ones) = sorted.split_at(split);
            let zeros: Vec<&Address> = zeros.iter().copied().filter(|l| l.len() > depth).collect();
            find_gap(&node.child(0), &zeros).or_else(|| find_gap(&node.child(1), ones))
        }
    }
}

/// The `p_{ij}` matrix: row `i` counts depth-`n` descendants with `i` ones,
/// column `j` is a part of the refined partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementWitness {
    pub n: u32,
    pub p: Vec<Vec<u128>>,
}

impl RefinementWitness {
    pub fn parts(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// Check both invariants: row sums `C(n, i)` and exact per-part sums,
    /// relative to the size `c` of the refined cylinder.
    pub fn verify(&self, field: &NumberField, c: Cylinder, parts: &[FieldElement]) -> Result<()> {
        if self.p.len() != self.n as usize + 1 || self.p.iter().any(|row| row.len() != parts.len()) {
            return Err(Error::GroupingShape {
                got: self.parts(),
                expected: parts.len(),
            });
        }
        for (i, row) in self.p.iter().enumerate() {
            let got = row
                .iter()
                .try_fold(0u128, |acc, &v| acc.checked_add(v))
                .ok_or(Error::Overflow("witness row"))?;
            let expected = binomial(self.n, i as u32);
            if got != expected {
                return Err(Error::RowSumMismatch { row: i, got, expected });
            }
        }
        for (j, part) in parts.iter().enumerate() {
            let mut acc = field.zero();
            for (i, row) in self.p.iter().enumerate() {
                if row[j] > 0 {
                    let w = field.cylinder(c.shift(i as u32, self.n - i as u32));
                    acc.add_assign(&w.scale_int(row[j]));
                }
            }
            if &acc != part {
                return Err(Error::PartSumMismatch { part: j + 1 });
            }
        }
        Ok(())
    }

    pub fn verify_cylinders(&self, field: &NumberField, c: Cylinder, parts: &[Cylinder]) -> Result<()> {
        let values: Vec<FieldElement> = parts.iter().map(|&p| field.cylinder(p)).collect();
        self.verify(field, c, &values)
    }
}

/// Build the witness for `grouping[leaf] = part` (parts numbered from 0) and
/// check it against the declared part values.
pub fn witness_from_grouping_values(
    tree: &TreePartition,
    grouping: &[usize],
    parts: &[FieldElement],
    field: &NumberField,
) -> Result<RefinementWitness> {
    if grouping.len() != tree.leaves.len() {
        return Err(Error::GroupingShape {
            got: grouping.len(),
            expected: tree.leaves.len(),
        });
    }
    if let Some(&bad) = grouping.iter().find(|&&g| g >= parts.len()) {
        return Err(Error::Malformed(format!(
            "grouping refers to part {} of {}",
            bad + 1,
            parts.len()
        )));
    }
    let uni = tree.uniformize()?;
    let mut p = vec![vec![0u128; parts.len()]; uni.n as usize + 1];
    for (counts, &g) in uni.leaf_counts.iter().zip(grouping) {
        for (i, v) in counts.iter().enumerate() {
            p[i][g] += v;
        }
    }
    let w = RefinementWitness { n: uni.n, p };
    w.verify(field, tree.root_size(), parts)?;
    Ok(w)
}

pub fn witness_from_grouping(
    tree: &TreePartition,
    grouping: &[usize],
    parts: &[Cylinder],
    field: &NumberField,
) -> Result<RefinementWitness> {
    let values: Vec<FieldElement> = parts.iter().map(|&p| field.cylinder(p)).collect();
    witness_from_grouping_values(tree, grouping, &values, field)
}

/// Merge sibling leaves that belong to the same group, as long as possible.
pub fn coarsen(tree: &TreePartition, grouping: &[usize]) -> (TreePartition, Vec<usize>) {
    let root_len = tree.root.len();
    let mut group: HashMap<Address, usize> = tree.leaves.iter().cloned().zip(grouping.iter().copied()).collect();
    let mut by_len: BTreeMap<usize, Vec<Address>> = BTreeMap::new();
    for l in &tree.leaves {
        by_len.entry(l.len()).or_default().push(l.clone());
    }
    while let Some((&len, _)) = by_len.iter().next_back() {
        let level = by_len.remove(&len).unwrap_or_default();
        if len <= root_len {
            by_len.insert(len, level);
            break;
        }
        for addr in level {
            if addr.bits.last() != Some(&1) {
                continue;
            }
            let sib = addr.sibling().expect("nonempty");
            let (Some(&g1), Some(&g0)) = (group.get(&addr), group.get(&sib)) else {
                continue;
            };
            if g1 == g0 {
                group.remove(&addr);
                group.remove(&sib);
                let parent = addr.parent().expect("nonempty");
                group.insert(parent.clone(), g1);
                by_len.entry(len - 1).or_default().push(parent);
            }
        }
    }
    let mut leaves: Vec<(Address, usize)> = group.into_iter().collect();
    leaves.sort();
    let (leaves, grouping) = leaves.into_iter().unzip();
    (
        TreePartition {
            root: tree.root.clone(),
            leaves,
        },
        grouping,
    )
}

/// Visit every tree partition of `root` with relative depth at most `depth`.
pub fn for_each_tree_partition<F: FnMut(&[Address])>(root: &Address, depth: u32, mut f: F) -> Result<()> {
    if depth > MAX_ENUMERATION_DEPTH {
        return Err(Error::DepthTooLarge {
            depth: depth as usize,
            max: MAX_ENUMERATION_DEPTH as usize,
        });
    }
    let mut leaves = Vec::new();
    let mut pending = vec![root.clone()];
    visit(root.len() + depth as usize, &mut pending, &mut leaves, &mut f);
    Ok(())
}

fn visit<F: FnMut(&[Address])>(max_len: usize, pending: &mut Vec<Address>, leaves: &mut Vec<Address>, f: &mut F) {
    let Some(node) = pending.pop() else {
        f(leaves);
        return;
    };
    leaves.push(node.clone());
    visit(max_len, pending, leaves, f);
    leaves.pop();
    if node.len() < max_len {
        pending.push(node.child(0));
        pending.push(node.child(1));
        visit(max_len, pending, leaves, f);
        pending.pop();
        pending.pop();
    }
    pending.push(node);
}

/// Number of tree partitions of relative depth at most `depth`.
pub fn count_tree_partitions(depth: u32) -> BigUint {
    let mut a = BigUint::one();
    for _ in 0..depth {
        a = &a * &a + 1u32;
    }
    a
}

/// Distribution of the number of leaves of size `(k, 0)` relative to the root
/// over all tree partitions of depth at most `depth`: entry `m` counts the
/// partitions with exactly `m` such leaves.
pub fn all_ones_leaf_distribution(depth: u32) -> Vec<BigUint> {
    // A tree is a single leaf (one such leaf) or a split whose 1-subtree
    // carries all such leaves and whose 0-subtree carries none.
    let mut dist = vec![BigUint::zero(), BigUint::one()];
    let mut total = BigUint::one();
    for _ in 0..depth {
        let mut next: Vec<BigUint> = dist.iter().map(|c| c * &total).collect();
        next[1] += 1u32;
        total = &total * &total + 1u32;
        dist = next;
    }
    while dist.len() > 2 && dist.last().is_some_and(Zero::is_zero) {
        dist.pop();
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    fn tree(root: &str, leaves: &[&str]) -> TreePartition {
        TreePartition::new(addr(root), leaves.iter().map(|l| addr(l)).collect())
    }

    const SEVEN: [&str; 7] = ["11", "00", "101", "100", "010", "0111", "0110"];

    #[test]
    fn leaf_size_examples() {
        assert_eq!(leaf_size(&addr("110"), &addr("")).unwrap(), Cylinder::new(2, 1));
        assert_eq!(leaf_size(&addr("0111"), &addr("0")).unwrap(), Cylinder::new(3, 0));
        assert!(matches!(
            leaf_size(&addr("10"), &addr("01")),
            Err(Error::NotADescendant { .. })
        ));
    }

    #[test]
    fn validate_examples() {
        tree("", &SEVEN).validate().unwrap();
        assert!(matches!(
            tree("", &["1", "11"]).validate(),
            Err(Error::PrefixViolation(..))
        ));
        assert_eq!(
            tree("", &["1"]).validate(),
            Err(Error::IncompletenessGap { missing: addr("0") })
        );
        let (num, den) = tree("", &SEVEN).kraft_sum();
        assert_eq!(num, den);
    }

    #[test]
    fn uniformize_examples() {
        let u = tree("", &SEVEN).uniformize().unwrap();
        assert_eq!(u.n, 4);
        assert_eq!(u.row_counts, vec![1, 4, 6, 4, 1]);
        let u = tree("", &[""]).uniformize().unwrap();
        assert_eq!((u.n, u.row_counts), (0, vec![1]));
        let u = tree("", &["1", "0"]).uniformize().unwrap();
        assert_eq!((u.n, u.row_counts), (1, vec![1, 1]));
    }

    #[test]
    fn multiset_parse_and_json() {
        let m: CylinderMultiset = "3,0;0,3;1,1*3".parse().unwrap();
        assert_eq!(m.count(), 5);
        assert_eq!(m.get(Cylinder::new(1, 1)), 3);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(
            json,
            r#"[{"a":1,"b":1,"mult":3},{"a":0,"b":3,"mult":1},{"a":3,"b":0,"mult":1}]"#
        );
        let back: CylinderMultiset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn multiset_sums() {
        let f = NumberField::parse("x^4+x-1", "7/10", "8/10").unwrap();
        let m: CylinderMultiset = "3,0;0,3;1,1*3".parse().unwrap();
        assert_eq!(m.sum(&f), f.one());
        assert!(CylinderMultiset::new().sum(&f).is_zero());
        let s = NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap();
        let eqa: CylinderMultiset = "2,0;0,2;2,1;1,2*2;3,1;2,2".parse().unwrap();
        assert_eq!(eqa.sum(&s), s.one());
    }

    #[test]
    fn witness_examples() {
        let f = NumberField::parse("x^4+x-1", "7/10", "8/10").unwrap();
        let t = tree("", &["111", "000", "110", "100", "101", "010", "011", "001"]);
        let grouping = [0, 1, 2, 2, 3, 3, 4, 4];
        let parts = [
            Cylinder::new(3, 0),
            Cylinder::new(0, 3),
            Cylinder::new(1, 1),
            Cylinder::new(1, 1),
            Cylinder::new(1, 1),
        ];
        let w = witness_from_grouping(&t, &grouping, &parts, &f).unwrap();
        assert_eq!(w.n, 3);
        let sums: Vec<u128> = w.p.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![1, 3, 3, 1]);

        let w = witness_from_grouping(&tree("", &["1", "0"]), &[0, 0], &[Cylinder::ONE], &f).unwrap();
        assert_eq!(
            w,
            RefinementWitness {
                n: 1,
                p: vec![vec![1], vec![1]]
            }
        );

        let bad = [
            Cylinder::new(3, 0),
            Cylinder::new(0, 3),
            Cylinder::new(1, 1),
            Cylinder::new(1, 1),
            Cylinder::new(2, 1),
        ];
        assert_eq!(
            witness_from_grouping(&t, &grouping, &bad, &f),
            Err(Error::PartSumMismatch { part: 5 })
        );
    }

    #[test]
    fn coarsen_merges_siblings() {
        let t = TreePartition::full(Address::root(), 3);
        let (c, g) = coarsen(&t, &[0; 8]);
        assert_eq!(c.leaves, vec![Address::root()]);
        assert_eq!(g, vec![0]);
        let grouping: Vec<usize> = t.leaves.iter().map(|l| l.bits()[0] as usize).collect();
        let (c, _) = coarsen(&t, &grouping);
        assert_eq!(c.leaves, vec![addr("0"), addr("1")]);
    }

    #[test]
    fn enumeration_counts() {
        for d in 0..=4 {
            let mut count = 0u64;
            for_each_tree_partition(&Address::root(), d, |leaves| {
                count += 1;
                let t = TreePartition::new(Address::root(), leaves.to_vec());
                t.validate().unwrap();
            })
            .unwrap();
            assert_eq!(BigUint::from(count), count_tree_partitions(d));
        }
        assert_eq!(count_tree_partitions(5), BigUint::from(458_330u32));
        assert!(for_each_tree_partition(&Address::root(), 6, |_| {}).is_err());
    }

    #[test]
    fn ones_distribution_matches_enumeration() {
        for d in 0..=4 {
            let mut hist: BTreeMap<usize, u64> = BTreeMap::new();
            for_each_tree_partition(&Address::root(), d, |leaves| {
                let k = leaves.iter().filter(|l| l.size().b == 0).count();
                *hist.entry(k).or_default() += 1;
            })
            .unwrap();
            let dist = all_ones_leaf_distribution(d);
            assert_eq!(dist.len(), 2);
            assert_eq!(hist.len(), 1);
            assert_eq!(BigUint::from(hist[&1]), dist[1]);
        }
    }

    #[test]
    fn kraft_matches_field_sum() {
        let third = NumberField::rational(&BigRational::new(1.into(), 3.into())).unwrap();
        let t = tree("01", &["011", "0101", "0100"]);
        t.validate().unwrap();
        let total = t
            .leaves
            .iter()
            .fold(third.zero(), |acc, l| acc.add(&third.cylinder(l.size())));
        assert_eq!(total, third.cylinder(addr("01").size()));
    }
}
