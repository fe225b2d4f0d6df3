use std::cell::Cell;
use std::fmt;

use crate::cylinder::{Address, Cylinder};

/// Everything that can go wrong in the library.
///
/// Variant names double as the machine-readable error code reported by the
/// command-line front end (see [`Error::code`]).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    // number fields
    #[error("cannot parse polynomial `{input}`: {reason}")]
    PolynomialSyntax { input: String, reason: String },
    #[error("cannot parse rational `{0}`")]
    RationalSyntax(String),
    #[error("isolating interval must satisfy 0 <= lo < hi <= 1")]
    DegenerateInterval,
    #[error("polynomial has no root in the given interval inside (0,1)")]
    NoRootInInterval,
    #[error("polynomial has {count} roots in the given interval")]
    MultipleRootsInInterval { count: usize },
    #[error("polynomial is reducible over the rationals (factor {factor})")]
    ReduciblePolynomial { factor: String },
    #[error("could not certify the sign of an element after {steps} refinements")]
    SignUndetermined { steps: usize },
    #[error("elements belong to fields of different degree")]
    FieldMismatch,
    #[error("derived parameter does not generate the same field")]
    NotAGenerator,

    // cylinders and tree partitions
    #[error("address {addr} does not extend {root}")]
    NotADescendant { addr: Address, root: Address },
    #[error("addresses {0} and {1} are not prefix-free")]
    PrefixViolation(Address, Address),
    #[error("tree partition leaves uncovered region below {missing}")]
    IncompletenessGap { missing: Address },
    #[error("row {row} of the refinement matrix sums to {got}, expected {expected}")]
    RowSumMismatch { row: usize, got: u128, expected: u128 },
    #[error("part {part} does not sum to its declared size")]
    PartSumMismatch { part: usize },
    #[error("grouping refers to {got} leaves but the partition has {expected}")]
    GroupingShape { got: usize, expected: usize },
    #[error("depth {depth} exceeds the supported maximum {max}")]
    DepthTooLarge { depth: usize, max: usize },

    // rewriting
    #[error("unknown item id {0}")]
    UnknownItem(u64),
    #[error("item id {0} is already in use")]
    DuplicateItem(u64),
    #[error("move does not preserve the sum exactly")]
    SumMismatch,
    #[error("rewrite requires a field with minimal polynomial x^n+x-1")]
    NotSelmerField,
    #[error("invalid rewrite of {from} to {to}")]
    InvalidRewrite { from: Cylinder, to: Cylinder },
    #[error("move {index} is not allowed on this side of a dual trace")]
    NonTreeMoveInA { index: usize },
    #[error("move {index} is a merge on the split side of a dual trace")]
    NonSplitMoveInB { index: usize },
    #[error("final multisets of the two traces differ")]
    FinalMultisetMismatch,
    #[error("trace replay does not reproduce the recorded final multiset")]
    TraceFinalMismatch,
    #[error("item {0} is not labelled with a cylinder size")]
    UnlabelledItem(u64),
    #[error("fuel budget of {budget} exhausted")]
    FuelExhausted { budget: u64 },

    // refinement
    #[error("part {part} is not strictly smaller than the cylinder being refined")]
    PartNotSmaller { part: usize },
    #[error("strategy `{strategy}` is not applicable: {reason}")]
    StrategyInapplicable { strategy: String, reason: String },
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("window k={k} is below the largest exponent {max}")]
    WindowTooSmall { k: u32, max: u32 },
    #[error("no refinement found within depth {depth}")]
    NotFoundWithinBounds { depth: usize },
    #[error("certificate would have at least {leaves} leaves, above the limit {max}")]
    TooManyLeaves { leaves: u64, max: u64 },
    #[error("certificate rejected: {0}")]
    CertificateInvalid(String),

    // binomial representations
    #[error("coefficient a_{index} is out of range 0..=C(n,{index})")]
    CoefficientOutOfRange { index: usize },

    // homeomorphism construction
    #[error("refinement failed at stage {stage}: {reason}")]
    RefinementFailed { stage: usize, reason: String },
    #[error("measure mismatch at stage {stage}, cell {cell}")]
    MeasureMismatch { stage: usize, cell: usize },
    #[error("stage {stage} violates {property}")]
    StageInvariant { stage: usize, property: String },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
    #[error("macro move {name} does not apply to {target}")]
    MacroInapplicable { name: &'static str, target: Cylinder },
    #[error("macro move {name} on {target} violates its termination meter")]
    MeterViolation { name: &'static str, target: Cylinder },
    #[error("malformed input: {0}")]
    Malformed(String),
}

impl Error {
    /// Stable name of the error kind.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            PolynomialSyntax { .. } => "PolynomialSyntax",
            RationalSyntax(_) => "RationalSyntax",
            DegenerateInterval => "DegenerateInterval",
            NoRootInInterval => "NoRootInInterval",
            MultipleRootsInInterval { .. } => "MultipleRootsInInterval",
            ReduciblePolynomial { .. } => "ReduciblePolynomial",
            SignUndetermined { .. } => "SignUndetermined",
            FieldMismatch => "FieldMismatch",
            NotAGenerator => "NotAGenerator",
            NotADescendant { .. } => "NotADescendant",
            PrefixViolation(..) => "PrefixViolation",
            IncompletenessGap { .. } => "IncompletenessGap",
            RowSumMismatch { .. } => "RowSumMismatch",
            PartSumMismatch { .. } => "PartSumMismatch",
            GroupingShape { .. } => "GroupingShape",
            DepthTooLarge { .. } => "DepthTooLarge",
            UnknownItem(_) => "UnknownItem",
            DuplicateItem(_) => "DuplicateItem",
            SumMismatch => "SumMismatch",
            NotSelmerField => "NotSelmerField",
            InvalidRewrite { .. } => "InvalidRewrite",
            NonTreeMoveInA { .. } => "NonTreeMoveInA",
            NonSplitMoveInB { .. } => "NonSplitMoveInB",
            FinalMultisetMismatch => "FinalMultisetMismatch",
            TraceFinalMismatch => "TraceFinalMismatch",
            UnlabelledItem(_) => "UnlabelledItem",
            FuelExhausted { .. } => "FuelExhausted",
            PartNotSmaller { .. } => "PartNotSmaller",
            StrategyInapplicable { .. } => "StrategyInapplicable",
            UnknownStrategy(_) => "UnknownStrategy",
            WindowTooSmall { .. } => "WindowTooSmall",
            NotFoundWithinBounds { .. } => "NotFoundWithinBounds",
            TooManyLeaves { .. } => "TooManyLeaves",
            CertificateInvalid(_) => "CertificateInvalid",
            CoefficientOutOfRange { .. } => "CoefficientOutOfRange",
            RefinementFailed { .. } => "RefinementFailed",
            MeasureMismatch { .. } => "MeasureMismatch",
            StageInvariant { .. } => "StageInvariant",
            Overflow(_) => "Overflow",
            MacroInapplicable { .. } => "MacroInapplicable",
            MeterViolation { .. } => "MeterViolation",
            Malformed(_) => "Malformed",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Budget of elementary steps shared by the searches and rewriting drivers.
///
/// Shared by reference between nested searches, hence the cell.
#[derive(Debug, Clone)]
pub struct Fuel {
    budget: u64,
    used: Cell<u64>,
}

impl Fuel {
    pub const DEFAULT: u64 = 1_000_000;

    pub fn new(budget: u64) -> Self {
        Fuel {
            budget,
            used: Cell::new(0),
        }
    }

    /// Default budget, overridable through the `CANTOR_FUEL` environment variable.
    pub fn from_env() -> Self {
        let budget = std::env::var("CANTOR_FUEL")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(Self::DEFAULT);
        Fuel::new(budget)
    }

    pub fn burn(&self, amount: u64) -> Result<()> {
        let used = self.used.get().saturating_add(amount);
        self.used.set(used);
        if used > self.budget {
            Err(Error::FuelExhausted { budget: self.budget })
        } else {
            Ok(())
        }
    }

    pub fn used(&self) -> u64 {
        self.used.get()
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }
}

impl fmt::Display for Fuel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.used.get(), self.budget)
    }
}
