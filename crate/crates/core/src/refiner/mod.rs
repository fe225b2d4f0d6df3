//! Refinement strategies.
//!
//! Every strategy turns a partition `B` of a cylinder size `c` into a
//! certificate: a tree partition of `c` grouped by the parts of `B`, the
//! `p_ij` witness, and a pair of traces from which the grouping can be read
//! off again. Strategies live behind [`RefinementStrategy`] and are looked up
//! by name in a [`StrategyRegistry`].

pub mod canon;
pub mod certificate;
pub mod generic;
pub mod macros;
pub mod obstruction;
pub mod sampling;

use std::collections::BTreeMap;

use crate::cylinder::{Address, Cylinder, CylinderMultiset, TreePartition};
use crate::error::{Error, Fuel, Result};
use crate::numberfield::{NumberField, Sign};
use crate::rewrite::{canonical_address, extract_refinement, ItemId, TraceBuilder};

pub use canon::{
    canonical_form, canonicalize_pair, canonicalize_traced, r4s_canonicalize, selmer_canonicalize, CanonicalPair,
    Canonicalizer, R4sCanon, SelmerCanon,
};
pub use certificate::{verify_certificate, Certificate, CheckReport, DualTrace};
pub use generic::{search_grouping, search_grouping_with, GroupedTree, DEFAULT_MAX_DEPTH};
pub use macros::{MacroMove, MacroValidator, Side};
pub use obstruction::{check_rational_obstruction, ObstructionOutcome, ObstructionReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefineOptions {
    /// Depth bound of the generic search.
    pub max_depth: u32,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

pub trait RefinementStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn check_field(&self, field: &NumberField) -> Result<()>;
    /// Certificate for a partition `parts` of `c`. Preconditions are checked
    /// by [`refine_partition`].
    fn refine(
        &self,
        field: &NumberField,
        c: Cylinder,
        parts: &CylinderMultiset,
        opts: &RefineOptions,
        fuel: &Fuel,
    ) -> Result<Certificate>;
}

/// Depth and fuel of the generic probe `auto` runs before anything else.
pub const AUTO_PROBE_DEPTH: u32 = 6;
pub const AUTO_PROBE_FUEL: u64 = 100_000;

/// Largest canonical form a canonical strategy will trace item by item.
pub const MAX_TRACED_ITEMS: u64 = 20_000;

/// Both sides rewritten to a shared canonical form; the tree side through
/// tree-move realizations, the partition through splits.
pub struct CanonicalStrategy<C> {
    canon: C,
    description: &'static str,
}

impl<C: Canonicalizer> CanonicalStrategy<C> {
    pub fn new(canon: C, description: &'static str) -> Self {
        CanonicalStrategy { canon, description }
    }
}

impl<C: Canonicalizer> RefinementStrategy for CanonicalStrategy<C> {
    fn name(&self) -> &'static str {
        self.canon.name()
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn check_field(&self, field: &NumberField) -> Result<()> {
        self.canon.check_field(field)
    }

    fn refine(
        &self,
        field: &NumberField,
        c: Cylinder,
        parts: &CylinderMultiset,
        _opts: &RefineOptions,
        fuel: &Fuel,
    ) -> Result<Certificate> {
        use macros::{TracedWorkspace, Workspace};
        self.canon.check_field(field)?;
        // Every item of the canonical form ends up as at least one leaf.
        let pair = canonicalize_pair(&self.canon, field, &CylinderMultiset::singleton(c), parts, fuel, false)?;
        let leaves = pair.a.count();
        if leaves > MAX_TRACED_ITEMS {
            return Err(Error::TooManyLeaves {
                leaves,
                max: MAX_TRACED_ITEMS,
            });
        }
        let mut wa = TracedWorkspace::new(field, &CylinderMultiset::singleton(c), Side::Tree, fuel);
        let mut wb = TracedWorkspace::new(field, parts, Side::Split, fuel);
        self.canon.reduce(&mut wa)?;
        self.canon.reduce(&mut wb)?;
        let k = self.canon.window(&[&wa.multiset(), &wb.multiset()]);
        self.canon.finish(&mut wa, k)?;
        self.canon.finish(&mut wb, k)?;
        let trace = DualTrace {
            a: wa.into_builder().finish(),
            b: wb.into_builder().finish(),
        };
        assemble(field, c, parts, self.name(), Some(k), trace, fuel)
    }
}

/// Direct search over uniform depths; see [`generic`].
pub struct GenericStrategy;

impl RefinementStrategy for GenericStrategy {
    fn name(&self) -> &'static str {
        "generic"
    }

    fn description(&self) -> &'static str {
        "bounded search for p_ij counts at increasing uniform depth; any field"
    }

    fn check_field(&self, _field: &NumberField) -> Result<()> {
        Ok(())
    }

    fn refine(
        &self,
        field: &NumberField,
        c: Cylinder,
        parts: &CylinderMultiset,
        opts: &RefineOptions,
        fuel: &Fuel,
    ) -> Result<Certificate> {
        let root = canonical_address(c);
        let list = parts.expand();
        let values: Vec<_> = list.iter().map(|&p| field.cylinder(p)).collect();
        let found =
            search_grouping(field, &root, &values, 0, opts.max_depth, fuel)?.ok_or(Error::NotFoundWithinBounds {
                depth: opts.max_depth as usize,
            })?;
        let trace = trace_for_grouping(field, c, &list, &found.partition, &found.grouping)?;
        assemble(field, c, parts, self.name(), None, trace, fuel)
    }
}

/// Tree splits down to the leaves, then one merge per part. The split side
/// makes no moves.
fn trace_for_grouping(
    field: &NumberField,
    c: Cylinder,
    parts: &[Cylinder],
    partition: &TreePartition,
    grouping: &[usize],
) -> Result<DualTrace> {
    let root = &partition.root;
    let mut a = TraceBuilder::new(field, &CylinderMultiset::singleton(c));
    let mut at: BTreeMap<Address, ItemId> = BTreeMap::new();
    let mut stack = vec![(root.clone(), 0 as ItemId)];
    while let Some((addr, id)) = stack.pop() {
        if partition.leaves.binary_search(&addr).is_ok() {
            at.insert(addr, id);
            continue;
        }
        if addr.len() >= root.len() + partition.depth() as usize {
            return Err(Error::IncompletenessGap { missing: addr });
        }
        let (one, zero) = a.tree_split(id)?;
        stack.push((addr.child(0), zero));
        stack.push((addr.child(1), one));
    }
    let mut groups: Vec<Vec<ItemId>> = vec![Vec::new(); parts.len()];
    for (leaf, &g) in partition.leaves.iter().zip(grouping) {
        groups[g].push(at[leaf]);
    }
    for (ids, &p) in groups.iter().zip(parts) {
        let single_match = ids.len() == 1 && a.label(ids[0]) == Some(p);
        if !single_match {
            a.merge(ids, p)?;
        }
    }
    let b = TraceBuilder::new(field, &parts.iter().copied().collect());
    Ok(DualTrace {
        a: a.finish(),
        b: b.finish(),
    })
}

fn assemble(
    field: &NumberField,
    c: Cylinder,
    parts: &CylinderMultiset,
    strategy: &str,
    k: Option<u32>,
    trace: DualTrace,
    fuel: &Fuel,
) -> Result<Certificate> {
    let ext = extract_refinement(&trace.a, &trace.b, &canonical_address(c), field, fuel)?;
    Ok(Certificate {
        field: field.spec(),
        cylinder: c,
        parts: parts.clone(),
        strategy: strategy.to_string(),
        k,
        partition: ext.partition,
        grouping: ext.grouping,
        witness: ext.witness,
        trace,
    })
}

/// Named strategies.
pub struct StrategyRegistry {
    entries: Vec<Box<dyn RefinementStrategy>>,
}

/// Name that picks the first applicable registered strategy.
pub const AUTO: &str = "auto";

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry { entries: Vec::new() }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(CanonicalStrategy::new(
            SelmerCanon,
            "bar-elimination and selmer-splits to a window of powers; fields x^n+x-1",
        )));
        r.register(Box::new(CanonicalStrategy::new(
            R4sCanon,
            "eqb-eqe moves to four canonical sizes; the field of s with s^4-2s^2-s+1=0",
        )));
        r.register(Box::new(GenericStrategy));
        r
    }

    /// Add a strategy, replacing any with the same name.
    pub fn register(&mut self, s: Box<dyn RefinementStrategy>) {
        self.entries.retain(|e| e.name() != s.name());
        self.entries.push(s);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn RefinementStrategy> {
        self.entries.iter().map(|e| e.as_ref())
    }

    pub fn get(&self, name: &str) -> Result<&dyn RefinementStrategy> {
        self.iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    /// `auto` resolves to the first registered strategy accepting `field`.
    pub fn resolve(&self, name: &str, field: &NumberField) -> Result<&dyn RefinementStrategy> {
        if name == AUTO {
            return self
                .iter()
                .find(|e| e.check_field(field).is_ok())
                .ok_or_else(|| Error::StrategyInapplicable {
                    strategy: AUTO.into(),
                    reason: "no registered strategy accepts this field".into(),
                });
        }
        let s = self.get(name)?;
        s.check_field(field)?;
        Ok(s)
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

/// Check that `parts` partitions `c` into strictly smaller sizes (or is `{c}`).
pub fn check_partition(field: &NumberField, c: Cylinder, parts: &CylinderMultiset) -> Result<()> {
    if parts.is_empty() {
        return Err(Error::Malformed("empty partition".into()));
    }
    let total = field.cylinder(c);
    if parts.sum(field) != total {
        return Err(Error::SumMismatch);
    }
    if parts != &CylinderMultiset::singleton(c) {
        for (j, p) in parts.expand().into_iter().enumerate() {
            if field.sign(&total.sub(&field.cylinder(p)))? != Sign::Positive {
                return Err(Error::PartNotSmaller { part: j + 1 });
            }
        }
    }
    Ok(())
}

/// Refine the partition `parts` of `c` with the named strategy.
pub fn refine_partition(
    registry: &StrategyRegistry,
    field: &NumberField,
    c: Cylinder,
    parts: &CylinderMultiset,
    strategy: &str,
    opts: &RefineOptions,
    fuel: &Fuel,
) -> Result<Certificate> {
    check_partition(field, c, parts)?;
    if strategy != AUTO {
        return registry.resolve(strategy, field)?.refine(field, c, parts, opts, fuel);
    }
    // A shallow generic probe first: canonical forms can be far deeper than
    // the tree actually needed.
    let probe = Fuel::new(AUTO_PROBE_FUEL.min(fuel.budget().saturating_sub(fuel.used())));
    let probe_opts = RefineOptions {
        max_depth: opts.max_depth.min(AUTO_PROBE_DEPTH),
    };
    let found = GenericStrategy.refine(field, c, parts, &probe_opts, &probe);
    fuel.burn(probe.used())?;
    match found {
        Ok(cert) => return Ok(cert),
        Err(Error::NotFoundWithinBounds { .. } | Error::FuelExhausted { .. }) => {}
        Err(e) => return Err(e),
    }
    // Then each applicable strategy in turn, moving on when one gives up
    // within its bounds.
    let mut last = None;
    for s in registry.iter().filter(|s| s.check_field(field).is_ok()) {
        match s.refine(field, c, parts, opts, fuel) {
            Err(e @ (Error::TooManyLeaves { .. } | Error::NotFoundWithinBounds { .. })) => last = Some(e),
            other => return other,
        }
    }
    Err(last.unwrap_or_else(|| Error::StrategyInapplicable {
        strategy: AUTO.into(),
        reason: "no registered strategy accepts this field".into(),
    }))
}
