//! Back-and-forth construction of measure-preserving clopen bijections
//! between `mu(r)` and `mu(s)`.
//!
//! A stage is a pair of clopen partitions `P`, `Q` of the Cantor space with
//! `pi(P[i]) = Q[i]`. From an even stage the `P` cells are cut into basic
//! clopen sets and each image cell is split to match; from an odd stage the
//! roles are swapped. Every stage is rechecked exactly before it is returned.
//!
//! All measures live in the field of `r`; `s` enters through its image there.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{cylinder_rep, search_rep, BinomialRep, SearchOutcome};
use crate::cylinder::{Address, Cylinder, CylinderMultiset};
use crate::error::{Error, Fuel, Result};
use crate::numberfield::{FieldElement, FieldEmbedding, FieldSpec, MinimalPolynomial, NumberField, Sign};
use crate::refiner::{refine_partition, search_grouping_with, RefineOptions, StrategyRegistry, AUTO};
use crate::rewrite::canonical_address;

/// Finite union of pairwise disjoint cylinders, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClopenCell {
    pub addresses: Vec<Address>,
}

impl ClopenCell {
    pub fn new(mut addresses: Vec<Address>) -> Result<Self> {
        addresses.sort();
        check_prefix_free(&addresses)?;
        Ok(ClopenCell { addresses })
    }

    pub fn single(a: Address) -> Self {
        ClopenCell { addresses: vec![a] }
    }

    pub fn full() -> Self {
        Self::single(Address::root())
    }

    pub fn as_single(&self) -> Option<&Address> {
        match self.addresses.as_slice() {
            [a] => Some(a),
            _ => None,
        }
    }

    pub fn measure(&self, field: &NumberField, size: &dyn Fn(Cylinder) -> FieldElement) -> FieldElement {
        let mut acc = field.zero();
        for a in &self.addresses {
            acc.add_assign(&size(a.size()));
        }
        acc
    }

    /// True when every member lies below some member of `outer`.
    pub fn inside(&self, outer: &ClopenCell) -> bool {
        self.addresses
            .iter()
            .all(|a| outer.addresses.iter().any(|o| a.extends(o)))
    }
}

/// Sorted addresses with no member a prefix of another.
fn check_prefix_free(sorted: &[Address]) -> Result<()> {
    for w in sorted.windows(2) {
        if w[1].extends(&w[0]) {
            return Err(Error::PrefixViolation(w[0].clone(), w[1].clone()));
        }
    }
    Ok(())
}

/// True when the addresses partition the whole space.
fn partitions_space(addresses: &[&Address]) -> bool {
    let mut sorted: Vec<&Address> = addresses.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[1].extends(w[0])) {
        return false;
    }
    let Some(max) = sorted.iter().map(|a| a.len()).max() else {
        return false;
    };
    let mut kraft = BigUint::zero();
    for a in &sorted {
        kraft += BigUint::one() << (max - a.len());
    }
    kraft == BigUint::one() << max
}

/// Stage `index` of the construction; `pi(p[i]) = q[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeoStage {
    pub index: usize,
    pub p: Vec<ClopenCell>,
    pub q: Vec<ClopenCell>,
    /// Cell of the previous stage containing each cell (empty at stage 0).
    pub parent: Vec<usize>,
}

impl HomeoStage {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

pub fn init_stage() -> HomeoStage {
    HomeoStage {
        index: 0,
        p: vec![ClopenCell::full()],
        q: vec![ClopenCell::full()],
        parent: Vec::new(),
    }
}

/// The pair `(r, s)` with `s` given inside `Q(r)`, plus binomial
/// representations in both directions.
pub struct HomeoSetup {
    pub r_field: NumberField,
    pub s_field: NumberField,
    /// `s` as an element of the field of `r`.
    pub s_image: FieldElement,
    embedding: FieldEmbedding,
    /// `s` over `r`.
    pub rep_s: BinomialRep,
    /// `r` over `s`.
    pub rep_r: BinomialRep,
    s_sizes: RwLock<HashMap<Cylinder, FieldElement>>,
    gadgets: RwLock<HashMap<GadgetKey, Option<Arc<Gadget>>>>,
}

impl HomeoSetup {
    /// `s` in `s_field` with image `s_image` in `r_field`; the two fields must
    /// coincide.
    pub fn new(
        r_field: NumberField,
        s_field: NumberField,
        s_image: FieldElement,
        n_max: u32,
        fuel: &Fuel,
    ) -> Result<Self> {
        r_field.check_element(&s_image)?;
        let embedding = FieldEmbedding::new(&r_field, &s_field, &s_image)?;
        let r_in_s = embedding.preimage(&r_field.generator()).ok_or(Error::NotAGenerator)?;
        let found = |o: SearchOutcome| match o {
            SearchOutcome::Found(rep) => Ok(rep),
            SearchOutcome::NotFound { n_max } => Err(Error::NotFoundWithinBounds { depth: n_max as usize }),
        };
        let rep_s = found(search_rep(&s_image, &r_field, n_max, fuel)?)?;
        let rep_r = found(search_rep(&r_in_s, &s_field, n_max, fuel)?)?;
        Ok(HomeoSetup {
            r_field,
            s_field,
            s_image,
            embedding,
            rep_s,
            rep_r,
            s_sizes: RwLock::new(HashMap::new()),
            gadgets: RwLock::new(HashMap::new()),
        })
    }

    /// `s = r^m`.
    pub fn power(r_field: NumberField, m: u32, n_max: u32, fuel: &Fuel) -> Result<Self> {
        if m == 0 {
            return Err(Error::Malformed("s = r^0 is not in (0,1)".into()));
        }
        let (s_field, _) = r_field.power_subfield(m)?;
        let image = r_field.pow(&r_field.generator(), m as u64);
        Self::new(r_field, s_field, image, n_max, fuel)
    }

    pub fn is_identity(&self) -> bool {
        self.s_image == self.r_field.generator()
    }

    pub fn mu_r(&self, c: Cylinder) -> FieldElement {
        self.r_field.cylinder(c)
    }

    /// `s^a (1-s)^b` in the field of `r`.
    pub fn mu_s(&self, c: Cylinder) -> FieldElement {
        if let Some(v) = self.s_sizes.read().expect("cache lock").get(&c) {
            return v.clone();
        }
        let f = &self.r_field;
        let comp = f.one().sub(&self.s_image);
        let v = f.mul(&f.pow(&self.s_image, c.a as u64), &f.pow(&comp, c.b as u64));
        self.s_sizes.write().expect("cache lock").insert(c, v.clone());
        v
    }

    /// Coordinates in the field of `s` of an element of the field of `r`.
    pub fn to_s_coords(&self, x: &FieldElement) -> FieldElement {
        self.embedding.preimage(x).expect("embedding is onto")
    }

    fn size_fn(&self, side: Side) -> Box<dyn Fn(Cylinder) -> FieldElement + '_> {
        match side {
            Side::R => Box::new(move |c| self.mu_r(c)),
            Side::S => Box::new(move |c| self.mu_s(c)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Side {
    R,
    S,
}

impl Side {
    fn other(self) -> Side {
        match self {
            Side::R => Side::S,
            Side::S => Side::R,
        }
    }
}

/// How an image cell is split to match the refined pieces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expansion {
    /// Cells are kept as a prefix followed by factors of words. Each factor
    /// is matched once by a small search below the root, shared by every cell
    /// that carries it; cells whose factors cannot be matched fall back to
    /// [`Expansion::Joint`].
    #[default]
    Factored,
    /// One grouped tree search inside the image cell for all pieces at once.
    Joint,
    /// Expand each piece through the binomial representation, then refine
    /// the image cell by the concatenated size list with a registered
    /// strategy.
    Canonical,
}

impl std::str::FromStr for Expansion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factored" => Ok(Expansion::Factored),
            "joint" => Ok(Expansion::Joint),
            "canonical" => Ok(Expansion::Canonical),
            _ => Err(Error::Malformed(format!("unknown expansion `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub expansion: Expansion,
    /// Strategy name for [`Expansion::Canonical`].
    pub strategy: String,
    /// Depth bound of the searches below each image cell.
    pub max_depth: u32,
    /// Fuel for each cell of each step, and for each factor match.
    pub fuel_per_cell: u64,
}

/// Default fuel per cell of a build step.
pub const CELL_FUEL: u64 = 50_000_000;

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            expansion: Expansion::Factored,
            strategy: AUTO.to_string(),
            max_depth: 32,
            fuel_per_cell: CELL_FUEL,
        }
    }
}

type Words = Arc<Vec<Address>>;

/// A cell written as `prefix . F_1 . F_2 ...`: all concatenations of the
/// prefix with one word from each factor. Factors are sorted prefix codes.
#[derive(Clone, Debug)]
struct CellForm {
    prefix: Address,
    factors: Vec<Words>,
}

impl CellForm {
    fn single(a: Address) -> Self {
        CellForm {
            prefix: a,
            factors: Vec::new(),
        }
    }

    fn of_cell(c: &ClopenCell) -> Self {
        match c.as_single() {
            Some(a) => Self::single(a.clone()),
            None => CellForm {
                prefix: Address::root(),
                factors: vec![Arc::new(c.addresses.clone())],
            },
        }
    }

    fn normalized(mut self) -> Self {
        self.factors.retain(|f| !(f.len() == 1 && f[0].is_empty()));
        while self.factors.first().is_some_and(|f| f.len() == 1) {
            let f = self.factors.remove(0);
            self.prefix = self.prefix.concat(f[0].bits());
        }
        self
    }

    fn min_len(&self) -> usize {
        self.prefix.len()
            + self
                .factors
                .iter()
                .map(|f| f.iter().map(|w| w.len()).min().unwrap_or(0))
                .sum::<usize>()
    }

    /// Members with the index chosen in each factor, in address order.
    fn pieces(&self) -> Vec<(Address, Vec<usize>)> {
        let mut out = vec![(self.prefix.clone(), Vec::new())];
        for f in &self.factors {
            out = out
                .into_iter()
                .flat_map(|(a, choice)| {
                    f.iter().enumerate().map(move |(k, w)| {
                        let mut c = choice.clone();
                        c.push(k);
                        (a.concat(w.bits()), c)
                    })
                })
                .collect();
        }
        out
    }

    fn cell(&self) -> Result<ClopenCell> {
        ClopenCell::new(self.pieces().into_iter().map(|(a, _)| a).collect())
    }
}

/// All words of length `d`.
fn full_words(d: usize) -> Words {
    let mut out = vec![Address::root()];
    for _ in 0..d {
        out = out.iter().flat_map(|x| [x.child(0), x.child(1)]).collect();
    }
    Arc::new(out)
}

/// A partition of the whole space on the other side into one group per word
/// of a factor, each with the relative measure of its word.
#[derive(Debug)]
struct Gadget {
    groups: Vec<Words>,
}

type GadgetKey = (Side, Vec<Address>);

/// Most leaves tried by the fewest-leaf search before the depth sweep.
const GADGET_LEAVES: usize = 24;
/// Larger factors go to the joint search of the whole cell.
const GADGET_WORDS: usize = 6;
const LEAF_FUEL: u64 = 5_000_000;

/// Match a factor on `side`, or `None` when no match is found within the
/// bounds.
fn find_gadget(setup: &HomeoSetup, side: Side, words: &[Address], opts: &BuildOptions) -> Option<Gadget> {
    if setup.is_identity() {
        return Some(Gadget {
            groups: words.iter().map(|w| Arc::new(vec![w.clone()])).collect(),
        });
    }
    let f = &setup.r_field;
    let size = setup.size_fn(side);
    let sizes: Vec<FieldElement> = words.iter().map(|w| size(w.size())).collect();
    let total = sizes.iter().fold(f.zero(), |mut acc, v| {
        acc.add_assign(v);
        acc
    });
    let inv = f.inv(&total)?;
    let values: Vec<FieldElement> = sizes.iter().map(|v| f.mul(v, &inv)).collect();
    let fuel = Fuel::new(opts.fuel_per_cell.min(LEAF_FUEL));
    let groups = match min_leaf_groups(setup, side.other(), &values, GADGET_LEAVES, &fuel) {
        Ok(Some(g)) => g,
        _ => sweep_search(
            setup,
            side.other(),
            &Address::root(),
            &values,
            opts,
            &Fuel::new(opts.fuel_per_cell),
        )
        .ok()?,
    };
    Some(Gadget {
        groups: groups
            .into_iter()
            .map(|mut g| {
                g.sort();
                Arc::new(g)
            })
            .collect(),
    })
}

/// Stage `t + 1` from stage `t`, checked.
pub fn advance_stage(
    setup: &HomeoSetup,
    stage: &HomeoStage,
    registry: &StrategyRegistry,
    opts: &BuildOptions,
) -> Result<HomeoStage> {
    let forms = stage
        .p
        .iter()
        .zip(&stage.q)
        .map(|(p, q)| (CellForm::of_cell(p), CellForm::of_cell(q)))
        .collect::<Vec<_>>();
    Ok(step(setup, stage, &forms, registry, opts)?.0)
}

fn step(
    setup: &HomeoSetup,
    stage: &HomeoStage,
    forms: &[(CellForm, CellForm)],
    registry: &StrategyRegistry,
    opts: &BuildOptions,
) -> Result<(HomeoStage, Vec<(CellForm, CellForm)>)> {
    let t = stage.index;
    let next = t + 1;
    let len = t / 2 + 1;
    // Even steps cut P and search Q; odd steps the reverse.
    let cut_side = if t.is_multiple_of(2) { Side::R } else { Side::S };
    let cuts: Vec<(CellForm, &Address)> = forms
        .iter()
        .enumerate()
        .map(|(i, (p, q))| {
            let (cut, image) = if cut_side == Side::R { (p, q) } else { (q, p) };
            let y = image.as_single_address().ok_or_else(|| Error::RefinementFailed {
                stage: next,
                reason: format!("image cell {i} is not a basic clopen set"),
            })?;
            let mut cut = cut.clone();
            let short = cut.min_len();
            if short < len {
                cut.factors.push(full_words(len - short));
            }
            Ok((cut, y))
        })
        .collect::<Result<_>>()?;
    let gadgets = if opts.expansion == Expansion::Factored {
        gadgets_for(setup, cut_side, cuts.iter().map(|(c, _)| c), opts)
    } else {
        HashMap::new()
    };
    let results: Vec<Vec<(CellForm, CellForm)>> = cuts
        .par_iter()
        .map(|(cut, y)| {
            split_cell(setup, cut, y, cut_side, &gadgets, registry, opts).map_err(|e| match e {
                Error::RefinementFailed { .. } => e,
                other => Error::RefinementFailed {
                    stage: next,
                    reason: format!("{}: {other}", other.code()),
                },
            })
        })
        .collect::<Result<_>>()?;
    let mut out = HomeoStage {
        index: next,
        p: Vec::new(),
        q: Vec::new(),
        parent: Vec::new(),
    };
    let mut out_forms = Vec::new();
    for (i, pairs) in results.into_iter().enumerate() {
        for (piece, img) in pairs {
            let (p, q) = if cut_side == Side::R {
                (piece, img)
            } else {
                (img, piece)
            };
            out.p.push(p.cell()?);
            out.q.push(q.cell()?);
            out.parent.push(i);
            out_forms.push((p, q));
        }
    }
    check_stage(setup, Some(stage), &out)?;
    Ok((out, out_forms))
}

impl CellForm {
    fn as_single_address(&self) -> Option<&Address> {
        self.factors.is_empty().then_some(&self.prefix)
    }
}

/// Matches for every factor of more than one word, searched in parallel.
fn gadgets_for<'a>(
    setup: &HomeoSetup,
    side: Side,
    cuts: impl Iterator<Item = &'a CellForm>,
    opts: &BuildOptions,
) -> HashMap<GadgetKey, Option<Arc<Gadget>>> {
    let mut keys: Vec<GadgetKey> = Vec::new();
    for c in cuts {
        for f in &c.factors {
            if f.len() > 1 && f.len() <= GADGET_WORDS {
                keys.push((side, f.as_ref().clone()));
            }
        }
    }
    keys.sort();
    keys.dedup();
    let mut cache = setup.gadgets.write().expect("cache lock");
    let missing: Vec<&GadgetKey> = keys.iter().filter(|k| !cache.contains_key(*k)).collect();
    let found: Vec<Option<Arc<Gadget>>> = missing
        .par_iter()
        .map(|(side, node)| find_gadget(setup, *side, node, opts).map(Arc::new))
        .collect();
    for (k, g) in missing.into_iter().zip(found) {
        cache.insert(k.clone(), g);
    }
    keys.into_iter()
        .map(|k| {
            let g = cache[&k].clone();
            (k, g)
        })
        .collect()
}

fn split_cell(
    setup: &HomeoSetup,
    cut: &CellForm,
    y: &Address,
    cut_side: Side,
    gadgets: &HashMap<GadgetKey, Option<Arc<Gadget>>>,
    registry: &StrategyRegistry,
    opts: &BuildOptions,
) -> Result<Vec<(CellForm, CellForm)>> {
    let pieces = cut.pieces();
    if pieces.len() == 1 {
        let image = CellForm::single(y.clone());
        return Ok(vec![(CellForm::single(pieces[0].0.clone()), image)]);
    }
    if opts.expansion == Expansion::Factored {
        let matched: Option<Vec<Option<Arc<Gadget>>>> = cut
            .factors
            .iter()
            .map(|f| match f.len() {
                1 => Some(None),
                _ => gadgets
                    .get(&(cut_side, f.as_ref().clone()))
                    .cloned()
                    .flatten()
                    .map(Some),
            })
            .collect();
        if let Some(matched) = matched {
            return Ok(pieces
                .into_iter()
                .map(|(a, choice)| {
                    let factors = matched
                        .iter()
                        .zip(&choice)
                        .filter_map(|(g, &k)| g.as_ref().map(|g| g.groups[k].clone()))
                        .collect();
                    let image = CellForm {
                        prefix: y.clone(),
                        factors,
                    };
                    (CellForm::single(a), image.normalized())
                })
                .collect());
        }
    }
    let addrs: Vec<Address> = pieces.into_iter().map(|(a, _)| a).collect();
    let fuel = Fuel::new(opts.fuel_per_cell);
    let groups = match opts.expansion {
        Expansion::Canonical => canonical_groups(setup, &addrs, y, cut_side, registry, opts, &fuel)?,
        _ => {
            let cut_size = setup.size_fn(cut_side);
            let values: Vec<FieldElement> = addrs.iter().map(|p| cut_size(p.size())).collect();
            sweep_search(setup, cut_side.other(), y, &values, opts, &fuel)?
        }
    };
    Ok(addrs
        .into_iter()
        .zip(groups)
        .map(|(a, g)| {
            let mut rel: Vec<Address> = g
                .iter()
                .map(|l| Address::from_bits(l.bits()[y.len()..].to_vec()))
                .collect();
            rel.sort();
            let image = CellForm {
                prefix: y.clone(),
                factors: vec![Arc::new(rel)],
            };
            (CellForm::single(a), image.normalized())
        })
        .collect())
}

/// Leaves below `root` for each value, measured on `side`, by one grouped
/// search.
///
/// Depths are swept in rounds with a per-depth budget that grows each round,
/// so a depth where the search stalls does not block a deeper one where
/// solutions are plentiful. Depths proved empty are skipped afterwards.
fn sweep_search(
    setup: &HomeoSetup,
    side: Side,
    root: &Address,
    values: &[FieldElement],
    opts: &BuildOptions,
    fuel: &Fuel,
) -> Result<Vec<Vec<Address>>> {
    let size = setup.size_fn(side);
    let mut empty = vec![false; opts.max_depth as usize + 1];
    let mut budget = ROUND_BUDGET;
    loop {
        let mut stalled = false;
        for n in 1..=opts.max_depth {
            if empty[n as usize] {
                continue;
            }
            let round = Fuel::new(budget.min(fuel.budget() - fuel.used()));
            let res = search_grouping_with(&setup.r_field, &*size, root, values, n, n, &round);
            fuel.burn(round.used())?;
            match res {
                Ok(Some(found)) => {
                    let mut groups = vec![Vec::new(); values.len()];
                    for (leaf, &g) in found.partition.leaves.iter().zip(&found.grouping) {
                        groups[g].push(leaf.clone());
                    }
                    return Ok(groups);
                }
                Ok(None) => empty[n as usize] = true,
                Err(Error::FuelExhausted { .. }) => stalled = true,
                Err(e) => return Err(e),
            }
        }
        if !stalled {
            return Err(Error::NotFoundWithinBounds {
                depth: opts.max_depth as usize,
            });
        }
        budget = budget.saturating_mul(4);
    }
}

/// Per-depth fuel of the first sweep.
const ROUND_BUDGET: u64 = 2_000;

/// Tree partition of the whole space into groups of the given relative
/// measures on `side` with the fewest leaves, up to `max_leaves`.
fn min_leaf_groups(
    setup: &HomeoSetup,
    side: Side,
    values: &[FieldElement],
    max_leaves: usize,
    fuel: &Fuel,
) -> Result<Option<Vec<Vec<Address>>>> {
    let f = &setup.r_field;
    let base = match side {
        Side::R => f.root_approx(),
        Side::S => f.approx(&setup.s_image),
    };
    let needs: Vec<f64> = values.iter().map(|v| f.approx(v)).collect();
    let size = setup.size_fn(side);
    for limit in values.len()..=max_leaves {
        let mut search = LeafSearch {
            base,
            limit,
            needs: needs.clone(),
            pending: vec![Address::root()],
            assigned: Vec::new(),
            max_len: LEAF_MAX_LEN,
            fuel,
            check: &|groups: &[Vec<Address>]| {
                groups.iter().zip(values).all(|(g, v)| {
                    let mut acc = f.zero();
                    for a in g {
                        acc.add_assign(&size(a.size()));
                    }
                    &acc == v
                })
            },
            groups: values.len(),
        };
        if let Some(found) = search.run()? {
            return Ok(Some(found));
        }
    }
    Ok(None)
}

struct LeafSearch<'a> {
    base: f64,
    limit: usize,
    needs: Vec<f64>,
    /// Unassigned nodes; the last is next in address order.
    pending: Vec<Address>,
    assigned: Vec<(Address, usize)>,
    max_len: usize,
    fuel: &'a Fuel,
    check: &'a dyn Fn(&[Vec<Address>]) -> bool,
    groups: usize,
}

const LEAF_EPS: f64 = 1e-9;
const LEAF_MAX_LEN: usize = 8;

impl LeafSearch<'_> {
    fn measure(&self, a: &Address) -> f64 {
        let c = a.size();
        self.base.powi(c.a as i32) * (1.0 - self.base).powi(c.b as i32)
    }

    fn run(&mut self) -> Result<Option<Vec<Vec<Address>>>> {
        self.fuel.burn(1)?;
        let Some(node) = self.pending.pop() else {
            if self.needs.iter().all(|n| n.abs() < LEAF_EPS) {
                let mut groups = vec![Vec::new(); self.groups];
                for (a, j) in &self.assigned {
                    groups[*j].push(a.clone());
                }
                if (self.check)(&groups) {
                    return Ok(Some(groups));
                }
            }
            return Ok(None);
        };
        let open = self.needs.iter().filter(|n| **n > LEAF_EPS).count();
        let room = self.limit - self.assigned.len();
        if open > room || self.pending.len() + 1 > room {
            self.pending.push(node);
            return Ok(None);
        }
        let m = self.measure(&node);
        for j in 0..self.groups {
            if self.needs[j] + LEAF_EPS < m {
                continue;
            }
            self.needs[j] -= m;
            self.assigned.push((node.clone(), j));
            let res = self.run();
            self.assigned.pop();
            self.needs[j] += m;
            if let Some(found) = res? {
                self.pending.push(node);
                return Ok(Some(found));
            }
        }
        if self.pending.len() + 2 <= room && node.len() < self.max_len {
            self.pending.push(node.child(1));
            self.pending.push(node.child(0));
            let res = self.run();
            self.pending.pop();
            self.pending.pop();
            if let Some(found) = res? {
                self.pending.push(node);
                return Ok(Some(found));
            }
        }
        self.pending.push(node);
        Ok(None)
    }
}

/// Leaves of `y` for each piece, through binomial expansion of the piece
/// sizes and a registered refinement strategy.
fn canonical_groups(
    setup: &HomeoSetup,
    pieces: &[Address],
    y: &Address,
    cut_side: Side,
    registry: &StrategyRegistry,
    opts: &BuildOptions,
    fuel: &Fuel,
) -> Result<Vec<Vec<Address>>> {
    // Image sizes are cylinders of the other parameter.
    let (rep, field) = match cut_side {
        Side::R => (&setup.rep_r, &setup.s_field),
        Side::S => (&setup.rep_s, &setup.r_field),
    };
    let lists: Vec<CylinderMultiset> = pieces
        .iter()
        .map(|p| {
            let c = p.size();
            let e = cylinder_rep(c.a, c.b, rep);
            let mut ms = CylinderMultiset::new();
            for (cyl, mult) in e.cylinders() {
                let m = mult.to_u64().ok_or(Error::Overflow("expansion multiplicity"))?;
                ms.add_checked(cyl, m)?;
            }
            Ok(ms)
        })
        .collect::<Result<_>>()?;
    let all = lists.iter().fold(CylinderMultiset::new(), |acc, l| acc.union(l));
    let target = y.size();
    let root = canonical_address(target);
    let cert = refine_partition(
        registry,
        field,
        target,
        &all,
        &opts.strategy,
        &RefineOptions {
            max_depth: opts.max_depth.min(crate::refiner::generic::MAX_GROUPING_DEPTH),
        },
        fuel,
    )?;
    // Leaves of each expanded part instance, moved below `y`.
    let expanded = all.expand();
    let mut by_part: Vec<Vec<Address>> = vec![Vec::new(); expanded.len()];
    for (leaf, &g) in cert.partition.leaves.iter().zip(&cert.grouping) {
        by_part[g].push(y.concat(&leaf.bits()[root.len()..]));
    }
    // Instances of each size are consumed in concatenation order.
    let mut next: HashMap<Cylinder, usize> = HashMap::new();
    for (idx, c) in expanded.iter().enumerate().rev() {
        next.insert(*c, idx);
    }
    let mut groups = Vec::with_capacity(pieces.len());
    for l in &lists {
        let mut g = Vec::new();
        for (c, mult) in l.iter() {
            let start = next[&c];
            for idx in start..start + mult as usize {
                g.append(&mut by_part[idx]);
            }
            next.insert(c, start + mult as usize);
        }
        groups.push(g);
    }
    Ok(groups)
}

/// Summary of a checked stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub index: usize,
    pub cells: usize,
    pub p_addresses: usize,
    pub q_addresses: usize,
    pub max_len_p: usize,
    pub max_len_q: usize,
}

/// Check the partition, measure, nesting and mesh invariants of `stage`
/// (nesting only when `prev` is given).
pub fn check_stage(setup: &HomeoSetup, prev: Option<&HomeoStage>, stage: &HomeoStage) -> Result<StageReport> {
    let idx = stage.index;
    let violation = |property: &str| Error::StageInvariant {
        stage: idx,
        property: property.to_string(),
    };
    if stage.p.len() != stage.q.len() || stage.p.is_empty() {
        return Err(violation("cell count agreement of P and Q"));
    }
    for (name, cells) in [("P", &stage.p), ("Q", &stage.q)] {
        let all: Vec<&Address> = cells.iter().flat_map(|c| c.addresses.iter()).collect();
        if !partitions_space(&all) {
            return Err(violation(&format!("{name} partitions the space")));
        }
    }
    let f = &setup.r_field;
    for (i, (p, q)) in stage.p.iter().zip(&stage.q).enumerate() {
        let mr = p.measure(f, &|c| setup.mu_r(c));
        let ms = q.measure(f, &|c| setup.mu_s(c));
        if mr != ms || f.sign(&mr)? != Sign::Positive {
            return Err(Error::MeasureMismatch { stage: idx, cell: i });
        }
    }
    match prev {
        Some(prev) => {
            if prev.index + 1 != idx || stage.parent.len() != stage.p.len() {
                return Err(violation("stage numbering"));
            }
            for (i, &j) in stage.parent.iter().enumerate() {
                if j >= prev.p.len() || !stage.p[i].inside(&prev.p[j]) {
                    return Err(violation("refinement of P"));
                }
                if !stage.q[i].inside(&prev.q[j]) {
                    return Err(violation("pi-compatibility"));
                }
            }
        }
        None if idx != 0 => {}
        None => {
            if stage.p != vec![ClopenCell::full()] || stage.q != vec![ClopenCell::full()] {
                return Err(violation("initial stage"));
            }
        }
    }
    if idx > 0 {
        let n = idx.div_ceil(2);
        let side = if idx % 2 == 1 { &stage.p } else { &stage.q };
        let ok = side.iter().all(|c| c.as_single().is_some_and(|a| a.len() >= n));
        if !ok {
            return Err(violation(&format!("mesh: basic clopen cells of length >= {n}")));
        }
    }
    let max_len = |cells: &[ClopenCell]| {
        cells
            .iter()
            .flat_map(|c| c.addresses.iter().map(|a| a.len()))
            .max()
            .unwrap_or(0)
    };
    Ok(StageReport {
        index: idx,
        cells: stage.p.len(),
        p_addresses: stage.p.iter().map(|c| c.addresses.len()).sum(),
        q_addresses: stage.q.iter().map(|c| c.addresses.len()).sum(),
        max_len_p: max_len(&stage.p),
        max_len_q: max_len(&stage.q),
    })
}

/// Stages `0..=depth`.
pub fn build(
    setup: &HomeoSetup,
    depth: usize,
    registry: &StrategyRegistry,
    opts: &BuildOptions,
) -> Result<Vec<HomeoStage>> {
    let mut stages = vec![init_stage()];
    check_stage(setup, None, &stages[0])?;
    let mut forms = vec![(CellForm::single(Address::root()), CellForm::single(Address::root()))];
    for _ in 0..depth {
        let (next, next_forms) = step(setup, stages.last().expect("nonempty"), &forms, registry, opts)?;
        stages.push(next);
        forms = next_forms;
    }
    Ok(stages)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub src: Vec<Address>,
    pub dst: Vec<Address>,
    /// `mu(r)(src)` in the field of `r`.
    pub measure_r: FieldElement,
    /// `mu(s)(dst)` in the field of `s`.
    pub measure_s: FieldElement,
}

/// Clopen bijection `src -> dst` between `mu(r)` and `mu(s)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeoTable {
    pub r_field: FieldSpec,
    pub s_field: FieldSpec,
    /// `s` in the field of `r`.
    pub s_image: FieldElement,
    pub stage: usize,
    pub rows: Vec<TableRow>,
}

impl HomeoTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tables serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Malformed(format!("table JSON: {e}")))
    }

    /// The same bijection read backwards, between `mu(s)` and `mu(r)`.
    pub fn inverse(&self) -> Result<HomeoTable> {
        let r = self.r_field.build()?;
        let s = self.s_field.build()?;
        let emb = FieldEmbedding::new(&r, &s, &self.s_image)?;
        let image = emb.preimage(&r.generator()).ok_or(Error::NotAGenerator)?;
        Ok(HomeoTable {
            r_field: self.s_field.clone(),
            s_field: self.r_field.clone(),
            s_image: image,
            stage: self.stage,
            rows: self
                .rows
                .iter()
                .map(|row| TableRow {
                    src: row.dst.clone(),
                    dst: row.src.clone(),
                    measure_r: row.measure_s.clone(),
                    measure_s: row.measure_r.clone(),
                })
                .collect(),
        })
    }
}

pub fn export_table(setup: &HomeoSetup, stages: &[HomeoStage]) -> Result<HomeoTable> {
    let last = stages
        .last()
        .ok_or_else(|| Error::Malformed("no stages to export".into()))?;
    let f = &setup.r_field;
    let rows = last
        .p
        .iter()
        .zip(&last.q)
        .map(|(p, q)| TableRow {
            src: p.addresses.clone(),
            dst: q.addresses.clone(),
            measure_r: p.measure(f, &|c| setup.mu_r(c)),
            measure_s: setup.to_s_coords(&q.measure(f, &|c| setup.mu_s(c))),
        })
        .collect();
    Ok(HomeoTable {
        r_field: f.spec(),
        s_field: setup.s_field.spec(),
        s_image: setup.s_image.clone(),
        stage: last.index,
        rows,
    })
}

/// Summary of a verified table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableReport {
    pub rows: usize,
    pub src_addresses: usize,
    pub dst_addresses: usize,
}

/// Check a table from its contents: both sides partition the space, row
/// measures are the exact cylinder sums in their own fields, agree through
/// `s_image`, are positive and total 1.
pub fn verify_table(table: &HomeoTable) -> Result<TableReport> {
    let r = table.r_field.build()?;
    let s = table.s_field.build()?;
    let emb = FieldEmbedding::new(&r, &s, &table.s_image)?;
    let bad = |what: String| Error::StageInvariant {
        stage: table.stage,
        property: what,
    };
    if table.rows.is_empty() {
        return Err(bad("nonempty table".into()));
    }
    for (name, side) in [("source", true), ("target", false)] {
        let all: Vec<&Address> = table
            .rows
            .iter()
            .flat_map(|row| if side { row.src.iter() } else { row.dst.iter() })
            .collect();
        if !partitions_space(&all) {
            return Err(bad(format!("{name} addresses partition the space")));
        }
    }
    let (mut tr, mut ts) = (r.zero(), s.zero());
    for (i, row) in table.rows.iter().enumerate() {
        r.check_element(&row.measure_r)?;
        s.check_element(&row.measure_s)?;
        let mr = ClopenCell {
            addresses: row.src.clone(),
        }
        .measure(&r, &|c| r.cylinder(c));
        let ms = ClopenCell {
            addresses: row.dst.clone(),
        }
        .measure(&s, &|c| s.cylinder(c));
        if mr != row.measure_r || ms != row.measure_s || emb.apply(&ms) != mr || r.sign(&mr)? != Sign::Positive {
            return Err(Error::MeasureMismatch {
                stage: table.stage,
                cell: i,
            });
        }
        tr.add_assign(&mr);
        ts.add_assign(&ms);
    }
    if tr != r.one() || ts != s.one() {
        return Err(bad("row measures total 1".into()));
    }
    Ok(TableReport {
        rows: table.rows.len(),
        src_addresses: table.rows.iter().map(|row| row.src.len()).sum(),
        dst_addresses: table.rows.iter().map(|row| row.dst.len()).sum(),
    })
}

/// Field of `1 - r`.
pub fn complement_field(field: &NumberField) -> Result<NumberField> {
    let one_minus = field.one().sub(&field.generator());
    let mp = MinimalPolynomial::new(&field.minimal_polynomial_of(&one_minus))?;
    let (lo, hi) = field.root_interval();
    let one = num_rational::BigRational::one();
    NumberField::new(mp, &one - hi, &one - lo)
}

/// The bit flip `<1> <-> <0>` as a table from `mu(r)` to `mu(1-r)`.
pub fn complement_map(field: &NumberField) -> Result<HomeoTable> {
    let target = complement_field(field)?;
    let image = field.one().sub(&field.generator());
    let emb = FieldEmbedding::new(field, &target, &image)?;
    let rows = [1u8, 0]
        .iter()
        .map(|&b| {
            let src = Address::from_bits(vec![b]);
            let m = field.cylinder(src.size());
            TableRow {
                dst: vec![src.complement()],
                src: vec![src],
                measure_s: emb.preimage(&m).expect("embedding is onto"),
                measure_r: m,
            }
        })
        .collect();
    Ok(HomeoTable {
        r_field: field.spec(),
        s_field: target.spec(),
        s_image: image,
        stage: 1,
        rows,
    })
}

/// True when the two specs describe the same real number.
fn same_number(a: &FieldSpec, b: &FieldSpec) -> Result<bool> {
    let (fa, fb) = (a.build()?, b.build()?);
    if fa.minpoly() != fb.minpoly() {
        return Ok(false);
    }
    let ((alo, ahi), (blo, bhi)) = (fa.root_interval(), fb.root_interval());
    let lo = alo.max(blo);
    let hi = ahi.min(bhi);
    Ok(lo <= hi && fa.minpoly().to_poly().count_roots(&lo, &hi) == 1)
}

/// `second` after `first`, for tables whose middle cells match exactly.
///
/// Each `dst` of `first` must be the `src` of some row of `second`.
pub fn compose(first: &HomeoTable, second: &HomeoTable) -> Result<HomeoTable> {
    if !same_number(&first.s_field, &second.r_field)? {
        return Err(Error::FieldMismatch);
    }
    let r = first.r_field.build()?;
    let mid = first.s_field.build()?;
    // s-image of the composite: the second table's image, carried from the
    // middle field into the first field.
    let emb = FieldEmbedding::new(&r, &mid, &first.s_image)?;
    // Same number, same minimal polynomial: coordinates carry over.
    mid.check_element(&second.s_image)?;
    let s_image = emb.apply(&second.s_image);
    let by_src: HashMap<Vec<Address>, &TableRow> = second
        .rows
        .iter()
        .map(|row| {
            let mut k = row.src.clone();
            k.sort();
            (k, row)
        })
        .collect();
    let rows = first
        .rows
        .iter()
        .map(|row| {
            let mut k = row.dst.clone();
            k.sort();
            let next = by_src
                .get(&k)
                .ok_or_else(|| Error::Malformed("middle cells of the tables do not match".into()))?;
            Ok(TableRow {
                src: row.src.clone(),
                dst: next.dst.clone(),
                measure_r: row.measure_r.clone(),
                measure_s: next.measure_s.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(HomeoTable {
        r_field: first.r_field.clone(),
        s_field: second.s_field.clone(),
        s_image,
        stage: first.stage.max(second.stage),
        rows,
    })
}
