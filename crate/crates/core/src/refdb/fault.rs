use std::fmt;

use serde::{Deserialize, Serialize};

/// Executor stage a fault corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Where,
    Having,
    Aggregate,
    Distinct,
    SetOp,
    Render,
}

/// A planted correctness bug. Each entry carries a witness: a query that
/// diverges from the clean engine on [`FaultSpec::WITNESS_SCRIPT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultSpec {
    pub name: &'static str,
    pub hook: Stage,
    pub description: &'static str,
    pub witness_sql: &'static str,
}

impl FaultSpec {
    /// Database every registry witness runs against.
    pub const WITNESS_SCRIPT: &'static str = "CREATE TABLE t0 (a INT, b DECIMAL(20,6));
INSERT INTO t0 VALUES (1, 0.0005), (1, 0.0005), (2, 1.5), (NULL, 0.25);
CREATE TABLE t1 (a INT, b DECIMAL(20,6));
INSERT INTO t1 VALUES (1, 0.5), (1, 0.5);";

    pub fn lookup(name: &str) -> Result<&'static FaultSpec, UnknownFault> {
        FAULT_REGISTRY
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| UnknownFault(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownFault(pub String);

impl fmt::Display for UnknownFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let known: Vec<&str> = FAULT_REGISTRY.iter().map(|f| f.name).collect();
        write!(f, "unknown fault {:?} (known: {})", self.0, known.join(", "))
    }
}

impl std::error::Error for UnknownFault {}

pub static FAULT_REGISTRY: [FaultSpec; 6] = [
    FaultSpec {
        name: "float-format-split",
        hook: Stage::Render,
        description: "SUM over decimals is formatted through a binary-float path when the query has a HAVING clause",
        witness_sql: "SELECT a, SUM(b) FROM t0 GROUP BY a HAVING a = 1",
    },
    FaultSpec {
        name: "drop-distinct",
        hook: Stage::Distinct,
        description: "SELECT DISTINCT keeps duplicates",
        witness_sql: "SELECT DISTINCT a FROM t0",
    },
    FaultSpec {
        name: "union-all-as-union",
        hook: Stage::SetOp,
        description: "UNION ALL removes duplicates when its left operand has a WHERE clause",
        witness_sql: "SELECT a FROM t0 WHERE a = 1 UNION ALL SELECT a FROM t1",
    },
    FaultSpec {
        name: "having-pre-group",
        hook: Stage::Having,
        description: "HAVING is pushed below grouping and keeps rows whose predicate is unknown",
        witness_sql: "SELECT a, COUNT(*) FROM t0 GROUP BY a HAVING a > 1",
    },
    FaultSpec {
        name: "null-where-true",
        hook: Stage::Where,
        description: "WHERE keeps rows whose predicate evaluates to unknown",
        witness_sql: "SELECT a FROM t0 WHERE a > 1",
    },
    FaultSpec {
        name: "sum-skips-duplicates",
        hook: Stage::Aggregate,
        description: "SUM counts each distinct value once when the query has a WHERE clause",
        witness_sql: "SELECT SUM(b) FROM t0 WHERE a = 1",
    },
];
