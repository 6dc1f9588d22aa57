//! Metamorphic testing toolkit for relational query engines.
//!
//! Seed queries are lowered to a small relational-algebra IR, rewritten by
//! rules that preserve duplicate sensitivity, and remapped back to SQL. The
//! resulting equivalent query pairs are executed against a target engine and
//! any divergence between the two result multisets is reported as a bug.
//!
//! The crate ships its own reference executor ([`refdb`]) with exact multiset
//! semantics and a registry of injectable faults, so the whole pipeline can be
//! exercised without an external database.

pub mod adapter;
pub mod algebra;
pub mod equiv;
pub mod harness;
pub mod refdb;
pub mod sensitivity;
pub mod sql;
pub mod transform;

pub use algebra::{AlgebraExpr, RelType};
pub use refdb::{Database, Relation, Value};
pub use sensitivity::Sensitivity;
pub use sql::{parse, Predicate, SqlQuery};
