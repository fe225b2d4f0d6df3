//! The move calculus on multisets of cylinder sizes.
//!
//! Every element of a multiset is an item with its own id. Moves consume
//! items and produce fresh ones, so a trace records the full ancestry and can
//! be replayed and checked exactly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cylinder::{witness_from_grouping, Address, Cylinder, CylinderMultiset, RefinementWitness, TreePartition};
use crate::error::{Error, Fuel, Result};
use crate::numberfield::{FieldElement, NumberField};

pub type ItemId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledItem {
    pub id: ItemId,
    pub a: u32,
    pub b: u32,
}

impl LabeledItem {
    pub fn new(id: ItemId, c: Cylinder) -> Self {
        LabeledItem { id, a: c.a, b: c.b }
    }

    pub fn cylinder(&self) -> Cylinder {
        Cylinder::new(self.a, self.b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Move {
    /// `x -> x r, x (1-r)`
    TreeSplit {
        item: ItemId,
        r_child: ItemId,
        one_minus_r_child: ItemId,
    },
    /// Replace several items by one item holding their exact sum.
    Merge {
        items: Vec<ItemId>,
        into: ItemId,
        value: FieldElement,
        label: Option<Cylinder>,
    },
    /// Replace an item by cylinder sizes summing to it.
    Split { item: ItemId, into: Vec<LabeledItem> },
    /// `(a, b+1) <-> (a+n, b)` in the field of `x^n + x - 1`.
    Rewrite { item: ItemId, into: ItemId, to: Cylinder },
}

impl Move {
    pub fn name(&self) -> &'static str {
        match self {
            Move::TreeSplit { .. } => "tree_split",
            Move::Merge { .. } => "merge",
            Move::Split { .. } => "split",
            Move::Rewrite { .. } => "rewrite",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Item {
    pub label: Option<Cylinder>,
    pub value: FieldElement,
}

/// Live items during a replay.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct State {
    items: BTreeMap<ItemId, Item>,
}

impl State {
    pub fn from_items(field: &NumberField, items: &[LabeledItem]) -> Result<Self> {
        let mut state = State::default();
        for it in items {
            let c = it.cylinder();
            state.insert(
                it.id,
                Item {
                    label: Some(c),
                    value: field.cylinder(c),
                },
            )?;
        }
        Ok(state)
    }

    fn insert(&mut self, id: ItemId, item: Item) -> Result<()> {
        if self.items.insert(id, item).is_some() {
            return Err(Error::DuplicateItem(id));
        }
        Ok(())
    }

    fn take(&mut self, id: ItemId) -> Result<Item> {
        self.items.remove(&id).ok_or(Error::UnknownItem(id))
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.items.get(&id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sum(&self, field: &NumberField) -> FieldElement {
        let mut acc = field.zero();
        for it in self.items.values() {
            acc.add_assign(&it.value);
        }
        acc
    }

    /// Items as labeled cylinders, ordered by id.
    pub fn labeled(&self) -> Result<Vec<LabeledItem>> {
        self.items
            .iter()
            .map(|(&id, it)| {
                it.label
                    .map(|c| LabeledItem::new(id, c))
                    .ok_or(Error::UnlabelledItem(id))
            })
            .collect()
    }

    pub fn multiset(&self) -> Result<CylinderMultiset> {
        Ok(self.labeled()?.iter().map(LabeledItem::cylinder).collect())
    }

    /// Apply one move in place, checking it exactly. No partial update is
    /// visible on error.
    pub fn apply(&mut self, m: &Move, field: &NumberField) -> Result<()> {
        let mut next = self.clone();
        next.apply_in_place(m, field)?;
        *self = next;
        Ok(())
    }

    fn apply_in_place(&mut self, m: &Move, field: &NumberField) -> Result<()> {
        match m {
            Move::TreeSplit {
                item,
                r_child,
                one_minus_r_child,
            } => {
                let it = self.take(*item)?;
                let xr = field.mul_by_generator(&it.value);
                let rest = it.value.sub(&xr);
                let (lr, l0) = match it.label {
                    Some(c) => {
                        let (cr, c0) = c.children();
                        (Some(cr), Some(c0))
                    }
                    None => (None, None),
                };
                self.insert(*r_child, Item { label: lr, value: xr })?;
                self.insert(*one_minus_r_child, Item { label: l0, value: rest })?;
            }
            Move::Merge {
                items,
                into,
                value,
                label,
            } => {
                if items.is_empty() {
                    return Err(Error::Malformed("merge of no items".into()));
                }
                field.check_element(value)?;
                let mut acc = field.zero();
                for id in items {
                    acc.add_assign(&self.take(*id)?.value);
                }
                if &acc != value || label.is_some_and(|c| field.cylinder(c) != acc) {
                    return Err(Error::SumMismatch);
                }
                self.insert(
                    *into,
                    Item {
                        label: *label,
                        value: acc,
                    },
                )?;
            }
            Move::Split { item, into } => {
                let it = self.take(*item)?;
                let mut acc = field.zero();
                for p in into {
                    let v = field.cylinder(p.cylinder());
                    acc.add_assign(&v);
                    self.insert(
                        p.id,
                        Item {
                            label: Some(p.cylinder()),
                            value: v,
                        },
                    )?;
                }
                if acc != it.value {
                    return Err(Error::SumMismatch);
                }
            }
            Move::Rewrite { item, into, to } => {
                let n = field.selmer_exponent().ok_or(Error::NotSelmerField)? as u32;
                let it = self.take(*item)?;
                let from = it.label.ok_or(Error::UnlabelledItem(*item))?;
                let forward = from.b >= 1 && *to == Cylinder::new(from.a + n, from.b - 1);
                let backward = to.b >= 1 && from == Cylinder::new(to.a + n, to.b - 1);
                if !forward && !backward {
                    return Err(Error::InvalidRewrite { from, to: *to });
                }
                debug_assert_eq!(field.cylinder(*to), it.value);
                self.insert(
                    *into,
                    Item {
                        label: Some(*to),
                        value: it.value,
                    },
                )?;
            }
        }
        Ok(())
    }
}

/// Apply a move to a copy of `state`.
pub fn apply_move(state: &State, m: &Move, field: &NumberField) -> Result<State> {
    let mut next = state.clone();
    next.apply(m, field)?;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub initial: Vec<LabeledItem>,
    pub moves: Vec<Move>,
    #[serde(rename = "final")]
    pub final_items: Vec<LabeledItem>,
}

impl Trace {
    /// Replay every move exactly and compare with the recorded final items.
    pub fn replay(&self, field: &NumberField) -> Result<State> {
        let mut state = State::from_items(field, &self.initial)?;
        let total = state.sum(field);
        for m in &self.moves {
            state.apply_in_place(m, field)?;
        }
        // Every move is sum-preserving by its own check; this is a backstop.
        if state.sum(field) != total {
            return Err(Error::SumMismatch);
        }
        let mut got = state.labeled()?;
        got.sort();
        let mut want = self.final_items.clone();
        want.sort();
        if got != want {
            return Err(Error::TraceFinalMismatch);
        }
        Ok(state)
    }

    pub fn initial_multiset(&self) -> CylinderMultiset {
        self.initial.iter().map(LabeledItem::cylinder).collect()
    }

    pub fn final_multiset(&self) -> CylinderMultiset {
        self.final_items.iter().map(LabeledItem::cylinder).collect()
    }

    /// Largest id among the initial and final items.
    fn max_endpoint_id(&self) -> ItemId {
        self.initial
            .iter()
            .chain(&self.final_items)
            .map(|i| i.id)
            .max()
            .unwrap_or(0)
    }
}

/// Incremental construction of a trace with exact checks on every move.
pub struct TraceBuilder<'f> {
    field: &'f NumberField,
    initial: Vec<LabeledItem>,
    moves: Vec<Move>,
    live: BTreeMap<ItemId, Cylinder>,
    by_label: BTreeMap<Cylinder, BTreeSet<ItemId>>,
    next_id: ItemId,
}

impl<'f> TraceBuilder<'f> {
    /// Items numbered from 0 in canonical multiset order.
    pub fn new(field: &'f NumberField, initial: &CylinderMultiset) -> Self {
        let items: Vec<LabeledItem> = initial
            .expand()
            .into_iter()
            .enumerate()
            .map(|(i, c)| LabeledItem::new(i as ItemId, c))
            .collect();
        Self::from_items(field, items)
    }

    pub fn from_items(field: &'f NumberField, items: Vec<LabeledItem>) -> Self {
        let mut b = TraceBuilder {
            field,
            initial: items.clone(),
            moves: Vec::new(),
            live: BTreeMap::new(),
            by_label: BTreeMap::new(),
            next_id: items.iter().map(|i| i.id + 1).max().unwrap_or(0),
        };
        for it in items {
            b.add_live(it.id, it.cylinder());
        }
        b
    }

    pub fn field(&self) -> &'f NumberField {
        self.field
    }

    fn fresh(&mut self) -> ItemId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn add_live(&mut self, id: ItemId, c: Cylinder) {
        self.live.insert(id, c);
        self.by_label.entry(c).or_default().insert(id);
    }

    fn remove_live(&mut self, id: ItemId) -> Result<Cylinder> {
        let c = self.live.remove(&id).ok_or(Error::UnknownItem(id))?;
        let set = self.by_label.get_mut(&c).expect("indexed");
        set.remove(&id);
        if set.is_empty() {
            self.by_label.remove(&c);
        }
        Ok(c)
    }

    pub fn label(&self, id: ItemId) -> Option<Cylinder> {
        self.live.get(&id).copied()
    }

    /// Smallest live id carrying `label`.
    pub fn find(&self, label: Cylinder) -> Option<ItemId> {
        self.by_label.get(&label).and_then(|s| s.iter().next().copied())
    }

    /// Live ids carrying `label`, ascending.
    pub fn ids_with(&self, label: Cylinder) -> Vec<ItemId> {
        self.by_label
            .get(&label)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Distinct live labels in canonical order.
    pub fn labels(&self) -> impl Iterator<Item = Cylinder> + '_ {
        self.by_label.keys().copied()
    }

    pub fn multiset(&self) -> CylinderMultiset {
        self.live.values().copied().collect()
    }

    pub fn live_items(&self) -> impl Iterator<Item = (ItemId, Cylinder)> + '_ {
        self.live.iter().map(|(i, c)| (*i, *c))
    }

    pub fn moves(&self) -> &[Move] {
        &self.moves
    }

    pub fn tree_split(&mut self, id: ItemId) -> Result<(ItemId, ItemId)> {
        let c = self.remove_live(id)?;
        let (cr, c0) = c.children();
        let (ir, i0) = (self.fresh(), self.fresh());
        self.add_live(ir, cr);
        self.add_live(i0, c0);
        self.moves.push(Move::TreeSplit {
            item: id,
            r_child: ir,
            one_minus_r_child: i0,
        });
        Ok((ir, i0))
    }

    pub fn merge(&mut self, ids: &[ItemId], label: Cylinder) -> Result<ItemId> {
        let mut acc = self.field.zero();
        for &id in ids {
            let c = self.label(id).ok_or(Error::UnknownItem(id))?;
            acc.add_assign(&self.field.cylinder(c));
        }
        let value = self.field.cylinder(label);
        if acc != value || ids.is_empty() {
            return Err(Error::SumMismatch);
        }
        for &id in ids {
            self.remove_live(id)?;
        }
        let into = self.fresh();
        self.add_live(into, label);
        self.moves.push(Move::Merge {
            items: ids.to_vec(),
            into,
            value,
            label: Some(label),
        });
        Ok(into)
    }

    pub fn split(&mut self, id: ItemId, parts: &[Cylinder]) -> Result<Vec<ItemId>> {
        let c = self.label(id).ok_or(Error::UnknownItem(id))?;
        let mut acc = self.field.zero();
        for &p in parts {
            acc.add_assign(&self.field.cylinder(p));
        }
        if acc != self.field.cylinder(c) {
            return Err(Error::SumMismatch);
        }
        self.remove_live(id)?;
        let mut into = Vec::with_capacity(parts.len());
        for &p in parts {
            let nid = self.fresh();
            self.add_live(nid, p);
            into.push(LabeledItem::new(nid, p));
        }
        let ids = into.iter().map(|i| i.id).collect();
        self.moves.push(Move::Split { item: id, into });
        Ok(ids)
    }

    pub fn rewrite(&mut self, id: ItemId, to: Cylinder) -> Result<ItemId> {
        let n = self.field.selmer_exponent().ok_or(Error::NotSelmerField)? as u32;
        let from = self.label(id).ok_or(Error::UnknownItem(id))?;
        let forward = from.b >= 1 && to == Cylinder::new(from.a + n, from.b - 1);
        let backward = to.b >= 1 && from == Cylinder::new(to.a + n, to.b - 1);
        if !forward && !backward {
            return Err(Error::InvalidRewrite { from, to });
        }
        self.remove_live(id)?;
        let into = self.fresh();
        self.add_live(into, to);
        self.moves.push(Move::Rewrite { item: id, into, to });
        Ok(into)
    }

    pub fn finish(self) -> Trace {
        Trace {
            initial: self.initial,
            moves: self.moves,
            final_items: self.live.into_iter().map(|(id, c)| LabeledItem::new(id, c)).collect(),
        }
    }
}

/// `r^a -> r^(a+1), r^(a+n)` on the tree-move side: a tree split followed by
/// a rewrite of the `(1-r)` child.
pub fn realize_power_split(builder: &mut TraceBuilder<'_>, id: ItemId) -> Result<(ItemId, ItemId)> {
    let n = builder.field().selmer_exponent().ok_or(Error::NotSelmerField)? as u32;
    let c = builder.label(id).ok_or(Error::UnknownItem(id))?;
    let (hi, lo) = builder.tree_split(id)?;
    let lo = builder.rewrite(lo, Cylinder::new(c.a + n, c.b))?;
    Ok((hi, lo))
}

/// The same replacement as a single split.
pub fn power_split_parts(c: Cylinder, n: u32) -> [Cylinder; 2] {
    [c.shift(1, 0), c.shift(n, 0)]
}

/// Address sets of live items while a tree-move trace is replayed.
struct AddressTracker {
    sets: BTreeMap<ItemId, Vec<(ItemId, Address)>>,
}

impl AddressTracker {
    fn new(initial: &[LabeledItem]) -> Self {
        AddressTracker {
            sets: initial.iter().map(|i| (i.id, vec![(i.id, Address::root())])).collect(),
        }
    }

    fn take(&mut self, id: ItemId) -> Result<Vec<(ItemId, Address)>> {
        self.sets.remove(&id).ok_or(Error::UnknownItem(id))
    }

    fn apply(&mut self, index: usize, m: &Move, fuel: &Fuel) -> Result<()> {
        match m {
            Move::TreeSplit {
                item,
                r_child,
                one_minus_r_child,
            } => {
                let set = self.take(*item)?;
                fuel.burn(set.len() as u64)?;
                let ones = set.iter().map(|(o, a)| (*o, a.child(1))).collect();
                let zeros = set.into_iter().map(|(o, a)| (o, a.child(0))).collect();
                self.sets.insert(*r_child, ones);
                self.sets.insert(*one_minus_r_child, zeros);
            }
            Move::Merge { items, into, .. } => {
                let mut all = Vec::new();
                for id in items {
                    all.extend(self.take(*id)?);
                }
                fuel.burn(all.len() as u64)?;
                self.sets.insert(*into, all);
            }
            Move::Rewrite { item, into, .. } => {
                let set = self.take(*item)?;
                fuel.burn(1)?;
                self.sets.insert(*into, set);
            }
            Move::Split { .. } => return Err(Error::NonTreeMoveInA { index }),
        }
        Ok(())
    }
}

/// Equivalent trace with every tree split before every merge. The initial
/// and final items (with ids) are unchanged.
pub fn normalize_trace(trace: &Trace, field: &NumberField, fuel: &Fuel) -> Result<Trace> {
    let replayed = trace.replay(field)?;
    let mut tracker = AddressTracker::new(&trace.initial);
    for (i, m) in trace.moves.iter().enumerate() {
        tracker.apply(i, m, fuel)?;
    }
    let mut next_id = trace.max_endpoint_id() + 1;
    let mut moves = Vec::new();
    // Leaf id for every (initial item, address).
    let mut leaf_ids: BTreeMap<(ItemId, Address), ItemId> = BTreeMap::new();
    let mut needed: BTreeMap<ItemId, BTreeSet<Address>> = BTreeMap::new();
    for set in tracker.sets.values() {
        for (o, a) in set {
            needed.entry(*o).or_default().insert(a.clone());
        }
    }
    for init in &trace.initial {
        let leaves = needed.remove(&init.id).unwrap_or_default();
        // Split every proper prefix of a leaf, top-down.
        let mut ids: BTreeMap<Address, ItemId> = BTreeMap::new();
        ids.insert(Address::root(), init.id);
        let mut internal: BTreeSet<Address> = BTreeSet::new();
        for l in &leaves {
            let mut p = l.clone();
            while let Some(parent) = p.parent() {
                internal.insert(parent.clone());
                p = parent;
            }
        }
        let mut order: Vec<Address> = internal.into_iter().collect();
        order.sort_by(|x, y| x.len().cmp(&y.len()).then(x.cmp(y)));
        for node in order {
            fuel.burn(1)?;
            let id = ids[&node];
            let (ir, i0) = (next_id, next_id + 1);
            next_id += 2;
            ids.insert(node.child(1), ir);
            ids.insert(node.child(0), i0);
            moves.push(Move::TreeSplit {
                item: id,
                r_child: ir,
                one_minus_r_child: i0,
            });
        }
        for l in leaves {
            leaf_ids.insert((init.id, l.clone()), ids[&l]);
        }
    }
    for fin in &trace.final_items {
        let set = &tracker.sets[&fin.id];
        let items: Vec<ItemId> = set.iter().map(|k| leaf_ids[k]).collect();
        if items.len() == 1 && items[0] == fin.id {
            continue;
        }
        let item = replayed.get(fin.id).expect("replayed");
        moves.push(Move::Merge {
            items,
            into: fin.id,
            value: item.value.clone(),
            label: item.label,
        });
    }
    let out = Trace {
        initial: trace.initial.clone(),
        moves,
        final_items: trace.final_items.clone(),
    };
    out.replay(field)?;
    Ok(out)
}

/// Tree partition and grouping read off a pair of matched traces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub partition: TreePartition,
    /// Part index (0-based, in order of the initial items of trace B).
    pub grouping: Vec<usize>,
    pub parts: Vec<Cylinder>,
    pub witness: RefinementWitness,
}

/// Combine a tree-move trace from `{c}` with a split trace from a partition
/// `B` of `c`. The tree partition lives under `root`, an address of size `c`.
pub fn extract_refinement(
    trace_a: &Trace,
    trace_b: &Trace,
    root: &Address,
    field: &NumberField,
    fuel: &Fuel,
) -> Result<Extraction> {
    let [start] = trace_a.initial.as_slice() else {
        return Err(Error::Malformed("tree-move trace must start from a single item".into()));
    };
    if start.cylinder() != root.size() {
        return Err(Error::Malformed(format!(
            "root {root} does not have size {}",
            start.cylinder()
        )));
    }
    trace_a.replay(field)?;
    trace_b.replay(field)?;
    let mut tracker = AddressTracker::new(&trace_a.initial);
    for (i, m) in trace_a.moves.iter().enumerate() {
        tracker.apply(i, m, fuel)?;
    }

    // Ancestry on the split side.
    let mut parts_order: Vec<LabeledItem> = trace_b.initial.clone();
    parts_order.sort();
    let mut part_of: BTreeMap<ItemId, usize> = parts_order.iter().enumerate().map(|(j, it)| (it.id, j)).collect();
    for (index, m) in trace_b.moves.iter().enumerate() {
        fuel.burn(1)?;
        let (src, produced) = match m {
            Move::TreeSplit {
                item,
                r_child,
                one_minus_r_child,
            } => (*item, vec![*r_child, *one_minus_r_child]),
            Move::Split { item, into } => (*item, into.iter().map(|i| i.id).collect()),
            Move::Rewrite { item, into, .. } => (*item, vec![*into]),
            Move::Merge { .. } => return Err(Error::NonSplitMoveInB { index }),
        };
        let j = part_of.remove(&src).ok_or(Error::UnknownItem(src))?;
        for p in produced {
            part_of.insert(p, j);
        }
    }

    if trace_a.final_multiset() != trace_b.final_multiset() {
        return Err(Error::FinalMultisetMismatch);
    }
    let mut b_by_label: BTreeMap<Cylinder, Vec<ItemId>> = BTreeMap::new();
    for it in &trace_b.final_items {
        b_by_label.entry(it.cylinder()).or_default().push(it.id);
    }
    let mut a_by_label: BTreeMap<Cylinder, Vec<ItemId>> = BTreeMap::new();
    for it in &trace_a.final_items {
        a_by_label.entry(it.cylinder()).or_default().push(it.id);
    }
    let mut leaves = Vec::new();
    let mut grouping = Vec::new();
    for (label, mut a_ids) in a_by_label {
        let mut b_ids = b_by_label.remove(&label).unwrap_or_default();
        a_ids.sort_unstable();
        b_ids.sort_unstable();
        for (a_id, b_id) in a_ids.iter().zip(&b_ids) {
            let j = part_of[b_id];
            for (_, addr) in &tracker.sets[a_id] {
                leaves.push(root.concat(addr.bits()));
                grouping.push(j);
            }
        }
    }
    let mut paired: Vec<(Address, usize)> = leaves.into_iter().zip(grouping).collect();
    paired.sort();
    let (leaves, grouping): (Vec<Address>, Vec<usize>) = paired.into_iter().unzip();
    let partition = TreePartition::new(root.clone(), leaves);
    partition.validate()?;
    let parts: Vec<Cylinder> = parts_order.iter().map(LabeledItem::cylinder).collect();
    let witness = witness_from_grouping(&partition, &grouping, &parts, field)?;
    Ok(Extraction {
        partition,
        grouping,
        parts,
        witness,
    })
}

/// Canonical address of a cylinder `(a, b)`: `a` ones followed by `b` zeros.
pub fn canonical_address(c: Cylinder) -> Address {
    let mut bits = vec![1u8; c.a as usize];
    bits.extend(std::iter::repeat_n(0u8, c.b as usize));
    Address::from_bits(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn selmer4() -> NumberField {
        NumberField::selmer(4).unwrap()
    }

    fn ms(s: &str) -> CylinderMultiset {
        s.parse().unwrap()
    }

    #[test]
    fn apply_move_examples() {
        let f = selmer4();
        let s0 = State::from_items(&f, &[LabeledItem::new(0, Cylinder::ONE)]).unwrap();
        let s1 = apply_move(
            &s0,
            &Move::TreeSplit {
                item: 0,
                r_child: 1,
                one_minus_r_child: 2,
            },
            &f,
        )
        .unwrap();
        assert_eq!(s1.multiset().unwrap(), ms("1,0;0,1"));
        let s2 = apply_move(
            &s1,
            &Move::Merge {
                items: vec![1, 2],
                into: 3,
                value: f.one(),
                label: Some(Cylinder::ONE),
            },
            &f,
        )
        .unwrap();
        assert_eq!(s2.multiset().unwrap(), ms("0,0"));
        let t = State::from_items(&f, &[LabeledItem::new(0, Cylinder::new(0, 1))]).unwrap();
        let t = apply_move(
            &t,
            &Move::Rewrite {
                item: 0,
                into: 1,
                to: Cylinder::new(4, 0),
            },
            &f,
        )
        .unwrap();
        assert_eq!(t.multiset().unwrap(), ms("4,0"));
        assert_eq!(
            apply_move(
                &s0,
                &Move::TreeSplit {
                    item: 9,
                    r_child: 1,
                    one_minus_r_child: 2
                },
                &f
            ),
            Err(Error::UnknownItem(9))
        );
        let bad_merge = Move::Merge {
            items: vec![1],
            into: 3,
            value: f.one(),
            label: None,
        };
        assert_eq!(apply_move(&s1, &bad_merge, &f), Err(Error::SumMismatch));
        let q = NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap();
        let sq = State::from_items(&q, &[LabeledItem::new(0, Cylinder::new(0, 1))]).unwrap();
        assert_eq!(
            apply_move(
                &sq,
                &Move::Rewrite {
                    item: 0,
                    into: 1,
                    to: Cylinder::new(4, 0)
                },
                &q
            ),
            Err(Error::NotSelmerField)
        );
    }

    #[test]
    fn power_split_examples() {
        for (n, a, want) in [(4, 0, "1,0;4,0"), (4, 1, "2,0;5,0"), (2, 0, "1,0;2,0")] {
            let f = NumberField::selmer(n).unwrap();
            let mut b = TraceBuilder::new(&f, &ms(&format!("{a},0")));
            realize_power_split(&mut b, 0).unwrap();
            let t = b.finish();
            t.replay(&f).unwrap();
            assert_eq!(t.final_multiset(), ms(want));
            let parts = power_split_parts(Cylinder::new(a, 0), n as u32);
            let mut b = TraceBuilder::new(&f, &ms(&format!("{a},0")));
            b.split(0, &parts).unwrap();
            assert_eq!(b.finish().final_multiset(), ms(want));
        }
        let q = NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap();
        let mut b = TraceBuilder::new(&q, &ms("0,0"));
        assert_eq!(realize_power_split(&mut b, 0), Err(Error::NotSelmerField));
    }

    #[test]
    fn normalize_commutes_merge_past_split() {
        let f = selmer4();
        let mut b = TraceBuilder::new(&f, &ms("1,0;0,1"));
        let m = b.merge(&[0, 1], Cylinder::ONE).unwrap();
        b.tree_split(m).unwrap();
        let t = b.finish();
        let n = normalize_trace(&t, &f, &Fuel::new(1000)).unwrap();
        let kinds: Vec<&str> = n.moves.iter().map(Move::name).collect();
        assert_eq!(kinds, ["tree_split", "tree_split", "merge", "merge"]);
        assert_eq!(n.final_items, t.final_items);
        assert_eq!(n.initial, t.initial);
        let again = normalize_trace(&n, &f, &Fuel::new(1000)).unwrap();
        assert_eq!(again, n);
        let empty = Trace {
            initial: t.initial.clone(),
            moves: vec![],
            final_items: t.initial.clone(),
        };
        assert_eq!(normalize_trace(&empty, &f, &Fuel::new(10)).unwrap(), empty);
    }

    #[test]
    fn normalize_rejects_split() {
        let f = selmer4();
        let mut b = TraceBuilder::new(&f, &ms("0,0"));
        b.split(0, &[Cylinder::new(1, 0), Cylinder::new(4, 0)]).unwrap();
        assert_eq!(
            normalize_trace(&b.finish(), &f, &Fuel::new(10)),
            Err(Error::NonTreeMoveInA { index: 0 })
        );
    }

    #[test]
    fn extract_cube_identity() {
        let f = selmer4();
        // A: split to depth 3, then merge the mixed pairs into r(1-r).
        let mut a = TraceBuilder::new(&f, &ms("0,0"));
        let (x1, x0) = a.tree_split(0).unwrap();
        let (x11, x10) = a.tree_split(x1).unwrap();
        let (x01, x00) = a.tree_split(x0).unwrap();
        let (_, x110) = a.tree_split(x11).unwrap();
        let (x101, x100) = a.tree_split(x10).unwrap();
        let (x011, x010) = a.tree_split(x01).unwrap();
        let (x001, _) = a.tree_split(x00).unwrap();
        a.merge(&[x110, x100], Cylinder::new(1, 1)).unwrap();
        a.merge(&[x101, x001], Cylinder::new(1, 1)).unwrap();
        a.merge(&[x011, x010], Cylinder::new(1, 1)).unwrap();
        let ta = a.finish();
        let tb = TraceBuilder::new(&f, &ms("3,0;0,3;1,1*3")).finish();
        let ex = extract_refinement(&ta, &tb, &Address::root(), &f, &Fuel::new(10_000)).unwrap();
        assert_eq!(ex.partition.leaves.len(), 8);
        assert_eq!(ex.witness.n, 3);
        let sums: Vec<u128> = ex.witness.p.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![1, 3, 3, 1]);

        let trivial_a = TraceBuilder::new(&f, &ms("0,0")).finish();
        let trivial_b = TraceBuilder::new(&f, &ms("0,0")).finish();
        let ex = extract_refinement(&trivial_a, &trivial_b, &Address::root(), &f, &Fuel::new(10)).unwrap();
        assert_eq!(ex.partition.leaves, vec![Address::root()]);
        assert_eq!(ex.grouping, vec![0]);

        let other_b = TraceBuilder::new(&f, &ms("1,0;0,1")).finish();
        assert_eq!(
            extract_refinement(&trivial_a, &other_b, &Address::root(), &f, &Fuel::new(10)),
            Err(Error::FinalMultisetMismatch)
        );
    }

    #[test]
    fn split_then_merge_restores() {
        let f = selmer4();
        let mut b = TraceBuilder::new(&f, &ms("0,0"));
        let ids = b.split(0, &[Cylinder::new(1, 0), Cylinder::new(0, 1)]).unwrap();
        b.merge(&ids, Cylinder::ONE).unwrap();
        assert_eq!(b.multiset(), ms("0,0"));
    }

    #[test]
    fn trace_json_round_trip() {
        let f = selmer4();
        let mut b = TraceBuilder::new(&f, &ms("0,0"));
        realize_power_split(&mut b, 0).unwrap();
        let id = b.find(Cylinder::new(1, 0)).unwrap();
        b.split(id, &[Cylinder::new(2, 0), Cylinder::new(5, 0)]).unwrap();
        let t = b.finish();
        let j = serde_json::to_string(&t).unwrap();
        let back: Trace = serde_json::from_str(&j).unwrap();
        assert_eq!(back, t);
        assert_eq!(serde_json::to_string(&back).unwrap(), j);
        back.replay(&f).unwrap();
    }
}
