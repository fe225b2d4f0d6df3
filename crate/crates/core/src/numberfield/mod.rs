//! Exact arithmetic in `Q(r)` for a real algebraic `r` in `(0, 1)`.

mod field;
pub mod irreducible;
pub mod linalg;
pub mod poly;

pub use field::{FieldElement, FieldEmbedding, FieldSpec, MinimalPolynomial, NumberField, Sign};
pub use irreducible::Irreducibility;
pub use poly::{parse_rational, Poly};
