//! Direct search for a grouped tree partition at increasing uniform depth.
//!
//! At relative depth `n` below a root of size `t`, a grouping into parts of
//! values `v_j` exists iff there are integers `p_ij >= 0` with row sums
//! `C(n, i)` and `sum_i p_ij r^i (1-r)^(n-i) = v_j / t`. Parts are filled one
//! at a time by the bounded engine; the last part takes what is left.

use std::cmp::Ordering;
use std::ops::ControlFlow;

use crate::binomial::BoundedEngine;
use crate::cylinder::{binomial, coarsen, Address, Cylinder, TreePartition};
use crate::error::{Error, Fuel, Result};
use crate::numberfield::{FieldElement, NumberField, Sign};

/// Largest uniform depth searched; binomial caps stay far inside `i128`.
pub const MAX_GROUPING_DEPTH: u32 = 40;

/// Default depth bound of the generic strategy.
pub const DEFAULT_MAX_DEPTH: u32 = 8;

/// A tree partition of `root` and the part each leaf belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupedTree {
    pub partition: TreePartition,
    pub grouping: Vec<usize>,
    /// Uniform depth at which the counts were found.
    pub depth: u32,
}

/// Search depths `min_depth..=max_depth` for a tree partition of `root`
/// grouped into parts with the given values (summing to the root's size).
pub fn search_grouping(
    field: &NumberField,
    root: &Address,
    parts: &[FieldElement],
    min_depth: u32,
    max_depth: u32,
    fuel: &Fuel,
) -> Result<Option<GroupedTree>> {
    search_grouping_with(field, &|c| field.cylinder(c), root, parts, min_depth, max_depth, fuel)
}

/// As [`search_grouping`], with cylinder sizes given by `size` (for a
/// parameter other than the field generator).
pub fn search_grouping_with(
    field: &NumberField,
    size: &dyn Fn(Cylinder) -> FieldElement,
    root: &Address,
    parts: &[FieldElement],
    min_depth: u32,
    max_depth: u32,
    fuel: &Fuel,
) -> Result<Option<GroupedTree>> {
    if max_depth > MAX_GROUPING_DEPTH {
        return Err(Error::DepthTooLarge {
            depth: max_depth as usize,
            max: MAX_GROUPING_DEPTH as usize,
        });
    }
    if parts.is_empty() {
        return Err(Error::Malformed("no parts to group into".into()));
    }
    let t = size(root.size());
    let mut total = field.zero();
    for p in parts {
        field.check_element(p)?;
        if field.sign(p)? != Sign::Positive {
            return Err(Error::Malformed("part values must be positive".into()));
        }
        total.add_assign(p);
    }
    if total != t {
        return Err(Error::SumMismatch);
    }
    if parts.len() == 1 {
        return Ok(Some(GroupedTree {
            partition: TreePartition::trivial(root.clone()),
            grouping: vec![0],
            depth: 0,
        }));
    }
    let tinv = field.inv(&t).expect("cylinder sizes are nonzero");
    let rel: Vec<FieldElement> = parts.iter().map(|p| field.mul(p, &tinv)).collect();
    let order = descending_order(field, &rel)?;
    let sorted: Vec<FieldElement> = order.iter().map(|&j| rel[j].clone()).collect();
    let equal_prev: Vec<bool> = (0..sorted.len()).map(|j| j > 0 && sorted[j] == sorted[j - 1]).collect();
    let approx: Vec<f64> = sorted.iter().map(|v| field.approx(v)).collect();
    for n in min_depth.max(1)..=max_depth {
        let weights: Vec<FieldElement> = (0..=n).map(|i| size(Cylinder::new(i, n - i))).collect();
        let caps: Vec<u128> = (0..=n).map(|i| binomial(n, i)).collect();
        // Pivots where the caps are widest.
        let mut preference: Vec<usize> = (0..=n as usize).collect();
        preference.sort_by_key(|&i| std::cmp::Reverse(caps[i]));
        let engine = BoundedEngine::with_pivot_preference(&weights, &preference);
        let mut dfs = PartsSearch {
            engine: &engine,
            targets: &sorted,
            approx: &approx,
            equal_prev: &equal_prev,
            fuel,
            chosen: Vec::new(),
            error: None,
        };
        let found = dfs.run(0, caps.clone());
        if let Some(e) = dfs.error {
            return Err(e);
        }
        if let Some(cols) = found {
            let mut p = vec![vec![0u128; parts.len()]; n as usize + 1];
            for (k, col) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    p[i][order[k]] = *v;
                }
            }
            let (partition, grouping) = tree_from_counts(root, n, &p);
            let (partition, grouping) = coarsen(&partition, &grouping);
            return Ok(Some(GroupedTree {
                partition,
                grouping,
                depth: n,
            }));
        }
    }
    Ok(None)
}

fn descending_order(field: &NumberField, vals: &[FieldElement]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    let mut err = None;
    order.sort_by(|&x, &y| match field.compare(&vals[y], &vals[x]) {
        Ok(o) => o,
        Err(e) => {
            err.get_or_insert(e);
            Ordering::Equal
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(order),
    }
}

struct PartsSearch<'a> {
    engine: &'a BoundedEngine,
    targets: &'a [FieldElement],
    /// Floating values of the targets, to aim each part at its share.
    approx: &'a [f64],
    equal_prev: &'a [bool],
    fuel: &'a Fuel,
    chosen: Vec<Vec<u128>>,
    error: Option<Error>,
}

impl PartsSearch<'_> {
    fn run(&mut self, j: usize, caps: Vec<u128>) -> Option<Vec<Vec<u128>>> {
        if j + 1 == self.targets.len() {
            // The remainder has the right value because the totals agree.
            let mut cols = self.chosen.clone();
            cols.push(caps);
            return Some(cols);
        }
        let mut found = None;
        let engine = self.engine;
        let targets = self.targets;
        let target = &targets[j];
        let fuel = self.fuel;
        let lower = if self.equal_prev[j] {
            self.chosen.last().cloned()
        } else {
            None
        };
        // Start from the proportional share of what is left.
        let left: f64 = self.approx[j..].iter().sum();
        let share = if left > 0.0 { self.approx[j] / left } else { 0.0 };
        let center: Vec<u128> = caps.iter().map(|&c| (c as f64 * share).round() as u128).collect();
        let res = engine.for_each_solution_near(target, &caps, Some(&center), fuel, |x| {
            if lower.as_deref().is_some_and(|l| x < l) {
                return ControlFlow::Continue(());
            }
            let rest: Vec<u128> = caps.iter().zip(x).map(|(c, v)| c - v).collect();
            self.chosen.push(x.to_vec());
            let sub = self.run(j + 1, rest);
            self.chosen.pop();
            if self.error.is_some() {
                return ControlFlow::Break(());
            }
            match sub {
                Some(cols) => {
                    found = Some(cols);
                    ControlFlow::Break(())
                }
                None => ControlFlow::Continue(()),
            }
        });
        if let Err(e) = res {
            self.error.get_or_insert(e);
        }
        found
    }
}

/// A tree partition of `root` whose depth-`n` descendants have, per part
/// `j` and number of ones `i`, exactly `p[i][j]` members in part `j`.
///
/// Built top-down: a node goes whole to the first part (by most leaves left)
/// whose remaining counts cover it, otherwise it is split. Leaves come out in
/// lexicographic order.
pub(crate) fn tree_from_counts(root: &Address, n: u32, p: &[Vec<u128>]) -> (TreePartition, Vec<usize>) {
    let parts = p.first().map_or(0, |row| row.len());
    let mut left: Vec<Vec<u128>> = p.to_vec();
    let mut order: Vec<usize> = (0..parts).collect();
    let mut leaves = Vec::new();
    let mut grouping = Vec::new();
    let mut stack = vec![(root.clone(), 0u32, 0u32)];
    while let Some((addr, k, a)) = stack.pop() {
        let rest = n - k;
        order.sort_by_key(|&j| std::cmp::Reverse(left.iter().map(|row| row[j]).sum::<u128>()));
        let fits = |j: usize, left: &[Vec<u128>]| (0..=rest).all(|i| left[(a + i) as usize][j] >= binomial(rest, i));
        if let Some(&j) = order.iter().find(|&&j| fits(j, &left)) {
            for i in 0..=rest {
                left[(a + i) as usize][j] -= binomial(rest, i);
            }
            leaves.push(addr);
            grouping.push(j);
            continue;
        }
        debug_assert!(rest > 0, "counts do not cover the tree");
        stack.push((addr.child(1), k + 1, a + 1));
        stack.push((addr.child(0), k + 1, a));
    }
    (TreePartition::new(root.clone(), leaves), grouping)
}
