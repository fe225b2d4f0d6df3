//! Refinement certificates and their independent checker.

use serde::{Deserialize, Serialize};

use crate::cylinder::{witness_from_grouping, Cylinder, CylinderMultiset, RefinementWitness, TreePartition};
use crate::error::{Error, Fuel, Result};
use crate::numberfield::{FieldSpec, NumberField};
use crate::rewrite::{canonical_address, extract_refinement, Trace};

/// Tree-move trace from `{c}` and split trace from the partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualTrace {
    pub a: Trace,
    pub b: Trace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub field: FieldSpec,
    pub cylinder: Cylinder,
    pub parts: CylinderMultiset,
    pub strategy: String,
    /// Shared window of the canonical forms, when a canonicalizer was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    pub partition: TreePartition,
    /// Part index (from 0, parts in canonical order) of each leaf.
    pub grouping: Vec<usize>,
    pub witness: RefinementWitness,
    pub trace: DualTrace,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificates serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Malformed(format!("certificate JSON: {e}")))
    }
}

/// Summary of a successful check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub leaves: usize,
    pub parts: usize,
    pub depth: u32,
    pub moves_a: usize,
    pub moves_b: usize,
}

fn reject(msg: impl Into<String>) -> Error {
    Error::CertificateInvalid(msg.into())
}

/// Re-validate a certificate from its contents alone: rebuild the field,
/// replay both traces exactly, re-extract the refinement, and recheck the
/// partition and both witness invariants.
pub fn verify_certificate(cert: &Certificate, fuel: &Fuel) -> Result<CheckReport> {
    let field: NumberField = cert.field.build()?;
    let c = cert.cylinder;
    let parts = cert.parts.expand();
    if parts.is_empty() {
        return Err(reject("empty partition"));
    }
    if cert.parts.sum(&field) != field.cylinder(c) {
        return Err(Error::SumMismatch);
    }
    let start: CylinderMultiset = cert.trace.a.initial.iter().map(|i| i.cylinder()).collect();
    if cert.trace.a.initial.len() != 1 || start != CylinderMultiset::singleton(c) {
        return Err(reject("tree-move trace does not start from the cylinder"));
    }
    if cert.trace.b.initial_multiset() != cert.parts {
        return Err(reject("split trace does not start from the parts"));
    }
    let root = canonical_address(c);
    if cert.partition.root != root {
        return Err(reject("partition root is not the canonical address of the cylinder"));
    }
    cert.partition.validate()?;
    let ext = extract_refinement(&cert.trace.a, &cert.trace.b, &root, &field, fuel)?;
    if ext.partition.canonical() != cert.partition.canonical() {
        return Err(reject("partition differs from the one read off the traces"));
    }
    if ext.partition.leaves != cert.partition.leaves || ext.grouping != cert.grouping {
        return Err(reject("grouping differs from the one read off the traces"));
    }
    let witness = witness_from_grouping(&cert.partition, &cert.grouping, &parts, &field)?;
    if witness != cert.witness {
        return Err(reject("witness differs from the recomputed one"));
    }
    cert.witness.verify_cylinders(&field, c, &parts)?;
    // Direct per-part sums over the leaves.
    let mut sums = vec![field.zero(); parts.len()];
    for (leaf, &g) in cert.partition.leaves.iter().zip(&cert.grouping) {
        sums[g].add_assign(&field.cylinder(leaf.size()));
    }
    for (j, (s, p)) in sums.iter().zip(&parts).enumerate() {
        if s != &field.cylinder(*p) {
            return Err(Error::PartSumMismatch { part: j + 1 });
        }
    }
    Ok(CheckReport {
        leaves: cert.partition.leaves.len(),
        parts: parts.len(),
        depth: cert.partition.depth(),
        moves_a: cert.trace.a.moves.len(),
        moves_b: cert.trace.b.moves.len(),
    })
}
