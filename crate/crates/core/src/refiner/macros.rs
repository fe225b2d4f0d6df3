//! Macro moves and the workspaces they act on.
//!
//! A macro move replaces one cylinder size by a fixed list of smaller ones.
//! Each has two realizations: a fragment of tree moves (and, in Selmer
//! fields, rewrites) usable on the tree side of a dual trace, and a single
//! split for the other side.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cylinder::{Cylinder, CylinderMultiset};
use crate::error::{Error, Fuel, Result};
use crate::numberfield::NumberField;
use crate::rewrite::{realize_power_split, ItemId, TraceBuilder};

/// Leaves of the tree-split fragment that turns 1 into
/// `s^2, (1-s)^2, s^2(1-s), 2 s(1-s)^2, s^3(1-s), s^2(1-s)^2`.
pub const EQA_LEAVES: [&str; 7] = ["11", "00", "101", "100", "010", "0111", "0110"];

/// The same fragment with `101` split three more times along its zero branch.
pub const EQC_LEAVES: [&str; 10] = [
    "11", "00", "100", "010", "0111", "0110", "1011", "10100", "101011", "101010",
];

const EQB_MERGE: [&str; 4] = ["00", "100", "010", "0110"];
const EQC_MERGE_MID: [&str; 4] = ["100", "0110", "10100", "101010"];
const EQC_MERGE_LOW: [&str; 4] = ["11", "0111", "1011", "101011"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacroMove {
    TreeSplit,
    /// `(a, b) -> (a+n, b-1)` in the field of `x^n + x - 1`.
    BarElim,
    /// `(a, b) -> (a+1, b), (a+n, b)`.
    SelmerSplit,
    Eqb,
    Eqc,
    Eqd,
    Eqe,
}

impl MacroMove {
    pub const ALL: [MacroMove; 7] = [
        MacroMove::TreeSplit,
        MacroMove::BarElim,
        MacroMove::SelmerSplit,
        MacroMove::Eqb,
        MacroMove::Eqc,
        MacroMove::Eqd,
        MacroMove::Eqe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MacroMove::TreeSplit => "tree-split",
            MacroMove::BarElim => "bar-elim",
            MacroMove::SelmerSplit => "selmer-split",
            MacroMove::Eqb => "eqb",
            MacroMove::Eqc => "eqc",
            MacroMove::Eqd => "eqd",
            MacroMove::Eqe => "eqe",
        }
    }

    /// Sizes produced from `t`, with multiplicity.
    pub fn split_result(self, t: Cylinder, field: &NumberField) -> Result<Vec<Cylinder>> {
        let (a, b) = (t.a, t.b);
        let c = Cylinder::new;
        let out = match self {
            MacroMove::TreeSplit => {
                let (x, y) = t.children();
                vec![x, y]
            }
            MacroMove::BarElim => {
                let n = selmer_n(field)?;
                if b == 0 {
                    return Err(self.inapplicable(t));
                }
                vec![c(a + n, b - 1)]
            }
            MacroMove::SelmerSplit => {
                let n = selmer_n(field)?;
                vec![c(a + 1, b), c(a + n, b)]
            }
            MacroMove::Eqb => vec![c(a + 1, b), c(a + 2, b), c(a + 2, b + 1), c(a + 3, b + 1)],
            MacroMove::Eqc => {
                if a == 0 {
                    return Err(self.inapplicable(t));
                }
                vec![c(a - 1, b + 2), c(a, b + 2), c(a, b + 2), c(a + 1, b + 2)]
            }
            MacroMove::Eqd => {
                let mut v = vec![c(a + 1, b)];
                v.extend(MacroMove::Eqb.split_result(c(a, b + 1), field)?);
                v
            }
            MacroMove::Eqe => vec![
                c(a, b + 1),
                c(a + 1, b + 2),
                c(a + 1, b + 2),
                c(a + 1, b + 2),
                c(a + 2, b + 2),
                c(a + 2, b + 2),
                c(a + 2, b + 3),
                c(a + 3, b + 3),
            ],
        };
        Ok(out)
    }

    fn inapplicable(self, target: Cylinder) -> Error {
        Error::MacroInapplicable {
            name: self.name(),
            target,
        }
    }

    /// Termination meter for one application.
    pub fn check_meter(self, t: Cylinder, out: &[Cylinder]) -> Result<()> {
        let diff = |c: &Cylinder| c.a as i64 - c.b as i64;
        let ok = match self {
            MacroMove::Eqb => out.iter().all(|c| diff(c) > diff(&t)),
            MacroMove::Eqc => out.iter().all(|c| diff(c) < diff(&t)),
            MacroMove::BarElim => out.iter().all(|c| c.b < t.b),
            MacroMove::SelmerSplit => out.iter().all(|c| c.a > t.a),
            MacroMove::TreeSplit | MacroMove::Eqd | MacroMove::Eqe => out.iter().all(|c| c.len() > t.len()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::MeterViolation {
                name: self.name(),
                target: t,
            })
        }
    }

    /// Tree-side realization on item `id`. Returns the produced ids in the
    /// order of [`MacroMove::split_result`].
    pub fn tree_realize(self, b: &mut TraceBuilder<'_>, id: ItemId) -> Result<Vec<ItemId>> {
        let t = b.label(id).ok_or(Error::UnknownItem(id))?;
        match self {
            MacroMove::TreeSplit => {
                let (x, y) = b.tree_split(id)?;
                Ok(vec![x, y])
            }
            MacroMove::BarElim => {
                let n = selmer_n(b.field())?;
                if t.b == 0 {
                    return Err(self.inapplicable(t));
                }
                Ok(vec![b.rewrite(id, Cylinder::new(t.a + n, t.b - 1))?])
            }
            MacroMove::SelmerSplit => {
                let (x, y) = realize_power_split(b, id)?;
                Ok(vec![x, y])
            }
            MacroMove::Eqb => {
                let leaves = split_to_leaves(b, id, &EQA_LEAVES)?;
                let merged = b.merge(&pick(&leaves, &EQB_MERGE), t.shift(1, 0))?;
                Ok(vec![merged, leaves["11"], leaves["101"], leaves["0111"]])
            }
            MacroMove::Eqc => {
                if t.a == 0 {
                    return Err(self.inapplicable(t));
                }
                let leaves = split_to_leaves(b, id, &EQC_LEAVES)?;
                let mid = b.merge(&pick(&leaves, &EQC_MERGE_MID), Cylinder::new(t.a, t.b + 2))?;
                let low = b.merge(&pick(&leaves, &EQC_MERGE_LOW), Cylinder::new(t.a - 1, t.b + 2))?;
                Ok(vec![low, leaves["00"], mid, leaves["010"]])
            }
            MacroMove::Eqd => {
                let (x, y) = b.tree_split(id)?;
                let mut out = vec![x];
                out.extend(MacroMove::Eqb.tree_realize(b, y)?);
                Ok(out)
            }
            MacroMove::Eqe => {
                let (x, y) = b.tree_split(id)?;
                let c = MacroMove::Eqc.tree_realize(b, x)?;
                let e = MacroMove::Eqb.tree_realize(b, c[0])?;
                // (a,b+1), then eqc minus its first item, then eqb of it,
                // reordered to match split_result.
                Ok(vec![y, e[0], c[1], c[2], c[3], e[1], e[2], e[3]])
            }
        }
    }

    /// Split-side realization: one split, or a rewrite for bar-elimination.
    pub fn split_realize(self, b: &mut TraceBuilder<'_>, id: ItemId) -> Result<Vec<ItemId>> {
        let t = b.label(id).ok_or(Error::UnknownItem(id))?;
        match self {
            MacroMove::TreeSplit => {
                let (x, y) = b.tree_split(id)?;
                Ok(vec![x, y])
            }
            MacroMove::BarElim => self.tree_realize(b, id),
            _ => {
                let parts = self.split_result(t, b.field())?;
                b.split(id, &parts)
            }
        }
    }
}

fn selmer_n(field: &NumberField) -> Result<u32> {
    field.selmer_exponent().map(|n| n as u32).ok_or(Error::NotSelmerField)
}

fn pick(leaves: &BTreeMap<&'static str, ItemId>, names: &[&str]) -> Vec<ItemId> {
    names.iter().map(|n| leaves[n]).collect()
}

/// Tree-split `id` until exactly the given relative addresses are items.
pub fn split_to_leaves(
    b: &mut TraceBuilder<'_>,
    id: ItemId,
    leaves: &[&'static str],
) -> Result<BTreeMap<&'static str, ItemId>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![(id, String::new())];
    while let Some((id, addr)) = stack.pop() {
        if let Some(leaf) = leaves.iter().find(|l| **l == addr) {
            out.insert(*leaf, id);
            continue;
        }
        if !leaves.iter().any(|l| l.starts_with(&addr)) {
            return Err(Error::Malformed(format!("leaf set is not complete below {addr:?}")));
        }
        let (one, zero) = b.tree_split(id)?;
        stack.push((zero, format!("{addr}0")));
        stack.push((one, format!("{addr}1")));
    }
    Ok(out)
}

/// Checks both realizations of each `(move, target)` pair once.
#[derive(Default)]
pub struct MacroValidator {
    seen: HashSet<(MacroMove, Cylinder)>,
}

impl MacroValidator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn validated(&self) -> usize {
        self.seen.len()
    }

    pub fn validate(&mut self, m: MacroMove, t: Cylinder, field: &NumberField) -> Result<()> {
        if self.seen.contains(&(m, t)) {
            return Ok(());
        }
        let out = m.split_result(t, field)?;
        m.check_meter(t, &out)?;
        let expected: CylinderMultiset = out.iter().copied().collect();
        let start = CylinderMultiset::singleton(t);
        for tree_side in [true, false] {
            let mut b = TraceBuilder::new(field, &start);
            let ids = if tree_side {
                m.tree_realize(&mut b, 0)?
            } else {
                m.split_realize(&mut b, 0)?
            };
            let labels: Vec<Cylinder> = ids.iter().map(|&i| b.label(i).expect("live")).collect();
            if labels != out {
                return Err(Error::FinalMultisetMismatch);
            }
            let trace = b.finish();
            let state = trace.replay(field)?;
            if state.multiset()? != expected {
                return Err(Error::FinalMultisetMismatch);
            }
        }
        self.seen.insert((m, t));
        Ok(())
    }
}

/// A multiset under rewriting, at count level or with a full trace.
pub trait Workspace {
    fn field(&self) -> &NumberField;
    /// Distinct sizes present, in canonical order.
    fn labels(&self) -> Vec<Cylinder>;
    fn multiset(&self) -> CylinderMultiset;
    /// Apply `m` to every copy of `target`.
    fn apply_all(&mut self, m: MacroMove, target: Cylinder) -> Result<()>;
}

/// Multiplicities only. Fast; used for canonical forms.
pub struct CountWorkspace<'a> {
    field: &'a NumberField,
    ms: CylinderMultiset,
    fuel: &'a Fuel,
    validator: Option<MacroValidator>,
    applications: u64,
}

impl<'a> CountWorkspace<'a> {
    pub fn new(field: &'a NumberField, ms: CylinderMultiset, fuel: &'a Fuel, validate: bool) -> Self {
        CountWorkspace {
            field,
            ms,
            fuel,
            validator: validate.then(MacroValidator::new),
            applications: 0,
        }
    }

    pub fn into_multiset(self) -> CylinderMultiset {
        self.ms
    }

    /// Number of single-item macro applications so far.
    pub fn applications(&self) -> u64 {
        self.applications
    }

    pub fn validated(&self) -> usize {
        self.validator.as_ref().map_or(0, MacroValidator::validated)
    }
}

impl Workspace for CountWorkspace<'_> {
    fn field(&self) -> &NumberField {
        self.field
    }

    fn labels(&self) -> Vec<Cylinder> {
        self.ms.iter().map(|(c, _)| c).collect()
    }

    fn multiset(&self) -> CylinderMultiset {
        self.ms.clone()
    }

    fn apply_all(&mut self, m: MacroMove, target: Cylinder) -> Result<()> {
        self.fuel.burn(1)?;
        let count = self.ms.get(target);
        if count == 0 {
            return Ok(());
        }
        if let Some(v) = self.validator.as_mut() {
            v.validate(m, target, self.field)?;
        }
        let out = m.split_result(target, self.field)?;
        m.check_meter(target, &out)?;
        self.ms.take(target);
        for c in out {
            self.ms.add_checked(c, count)?;
        }
        self.applications = self.applications.saturating_add(count);
        Ok(())
    }
}

/// Which realization a traced workspace records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Tree,
    Split,
}

/// Every item tracked; produces a trace for certificate extraction.
pub struct TracedWorkspace<'a> {
    builder: TraceBuilder<'a>,
    side: Side,
    fuel: &'a Fuel,
}

impl<'a> TracedWorkspace<'a> {
    pub fn new(field: &'a NumberField, ms: &CylinderMultiset, side: Side, fuel: &'a Fuel) -> Self {
        TracedWorkspace {
            builder: TraceBuilder::new(field, ms),
            side,
            fuel,
        }
    }

    pub fn into_builder(self) -> TraceBuilder<'a> {
        self.builder
    }
}

impl Workspace for TracedWorkspace<'_> {
    fn field(&self) -> &NumberField {
        self.builder.field()
    }

    fn labels(&self) -> Vec<Cylinder> {
        self.builder.labels().collect()
    }

    fn multiset(&self) -> CylinderMultiset {
        self.builder.multiset()
    }

    fn apply_all(&mut self, m: MacroMove, target: Cylinder) -> Result<()> {
        let ids = self.builder.ids_with(target);
        if ids.is_empty() {
            return Ok(());
        }
        let out = m.split_result(target, self.builder.field())?;
        m.check_meter(target, &out)?;
        for id in ids {
            self.fuel.burn(1)?;
            match self.side {
                Side::Tree => m.tree_realize(&mut self.builder, id)?,
                Side::Split => m.split_realize(&mut self.builder, id)?,
            };
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{Address, TreePartition};

    fn s_field() -> NumberField {
        NumberField::parse("x^4-2x^2-x+1", "1/2", "6/10").unwrap()
    }

    #[test]
    fn fragments_are_tree_partitions() {
        for set in [&EQA_LEAVES[..], &EQC_LEAVES[..]] {
            let leaves = set.iter().map(|s| s.parse::<Address>().unwrap()).collect();
            TreePartition::new(Address::root(), leaves).validate().unwrap();
        }
    }

    #[test]
    fn eq_moves_validate_in_s_field() {
        let f = s_field();
        let mut v = MacroValidator::new();
        for m in [
            MacroMove::TreeSplit,
            MacroMove::Eqb,
            MacroMove::Eqc,
            MacroMove::Eqd,
            MacroMove::Eqe,
        ] {
            for t in [
                Cylinder::new(1, 0),
                Cylinder::new(2, 3),
                Cylinder::new(4, 4),
                Cylinder::new(5, 4),
            ] {
                v.validate(m, t, &f).unwrap();
            }
        }
        assert_eq!(
            v.validate(MacroMove::Eqc, Cylinder::new(0, 2), &f),
            Err(Error::MacroInapplicable {
                name: "eqc",
                target: Cylinder::new(0, 2)
            })
        );
    }

    #[test]
    fn eq_moves_fail_outside_s_field() {
        let f = NumberField::selmer(4).unwrap();
        let mut v = MacroValidator::new();
        assert!(v.validate(MacroMove::Eqb, Cylinder::ONE, &f).is_err());
        v.validate(MacroMove::SelmerSplit, Cylinder::new(2, 1), &f).unwrap();
        v.validate(MacroMove::BarElim, Cylinder::new(2, 1), &f).unwrap();
    }

    #[test]
    fn count_workspace_tracks_multiplicities() {
        let f = s_field();
        let fuel = Fuel::new(100);
        let ms: CylinderMultiset = "1,0*2".parse().unwrap();
        let mut ws = CountWorkspace::new(&f, ms, &fuel, true);
        ws.apply_all(MacroMove::Eqc, Cylinder::new(1, 0)).unwrap();
        assert_eq!(ws.multiset(), "0,2*2;1,2*4;2,2*2".parse().unwrap());
        assert_eq!(ws.applications(), 2);
    }
}
