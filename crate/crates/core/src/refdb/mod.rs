//! Reference executor with exact multiset semantics and Kleene three-valued
//! logic, plus a fault-injection layer that plants known correctness bugs.

mod algebra_eval;
mod database;
mod exec;
mod fault;
mod relation;
mod value;

pub use algebra_eval::eval_algebra;
pub use database::{Database, LoadError, Table};
pub use exec::{eval_agg, eval_pred, render_cell, Cell, Engine, ExecError, RenderedRows};
pub use fault::{FaultSpec, Stage, UnknownFault, FAULT_REGISTRY};
pub use relation::Relation;
pub use value::{Decimal, Incomparable, SqlType, TruthValue, Value, DEC_SCALE, MAX_SCALE};

/// Stable error codes raised by the reference engine.
pub mod codes {
    pub const UNKNOWN_TABLE: &str = "UNKNOWN_TABLE";
    pub const UNKNOWN_COLUMN: &str = "UNKNOWN_COLUMN";
    pub const NON_GROUPED_COLUMN: &str = "NON_GROUPED_COLUMN";
    pub const TYPE_MISMATCH: &str = "TYPE_MISMATCH";
    pub const DIV_BY_ZERO: &str = "DIV_BY_ZERO";
    pub const AMBIGUOUS_COLUMN: &str = "AMBIGUOUS_COLUMN";
    pub const DUPLICATE_TABLE: &str = "DUPLICATE_TABLE";
    pub const ARITY_MISMATCH: &str = "ARITY_MISMATCH";
    pub const UNSUPPORTED: &str = "UNSUPPORTED";
    pub const SYNTAX_ERROR: &str = "SYNTAX_ERROR";
    pub const OVERFLOW: &str = "OVERFLOW";
}
