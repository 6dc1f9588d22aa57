//! Duplicate sensitivity: the static per-operator table, its fold over a
//! query, and a brute-force witness search that checks it operationally.

use serde::{Deserialize, Serialize};

use crate::algebra::AlgebraExpr;
use crate::refdb::{eval_algebra, Database, Decimal, SqlType, Value};
use crate::sql::{AggFunc, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sensitivity {
    Sensitive,
    Insensitive,
}

impl Sensitivity {
    /// Composition `g · h`: sensitive only when both parts are.
    pub fn compose(self, other: Sensitivity) -> Sensitivity {
        if self == Sensitivity::Sensitive && other == Sensitivity::Sensitive {
            Sensitivity::Sensitive
        } else {
            Sensitivity::Insensitive
        }
    }
}

/// Units the classification table is defined over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    Select,
    Where,
    Distinct,
    GroupBy,
    Union,
    UnionAll,
    Aggregate(AggFunc),
}

pub fn classify_operator(op: Operator) -> Sensitivity {
    use Sensitivity::*;
    match op {
        Operator::Select | Operator::Where | Operator::UnionAll => Sensitive,
        Operator::Distinct | Operator::GroupBy | Operator::Union => Insensitive,
        Operator::Aggregate(AggFunc::Sum | AggFunc::Count | AggFunc::Avg) => Sensitive,
        Operator::Aggregate(AggFunc::Min | AggFunc::Max) => Insensitive,
    }
}

fn own_operators(node: &AlgebraExpr, out: &mut Vec<Operator>) {
    match node {
        AlgebraExpr::Scan { .. } => {}
        AlgebraExpr::Project { .. } => out.push(Operator::Select),
        AlgebraExpr::Filter { .. } => out.push(Operator::Where),
        AlgebraExpr::Dedup { keys: None, .. } => out.push(Operator::Distinct),
        AlgebraExpr::Dedup { keys: Some(_), .. } => out.push(Operator::GroupBy),
        AlgebraExpr::Agg { keys, aggs, .. } => {
            if !keys.is_empty() {
                out.push(Operator::GroupBy);
            }
            out.extend(aggs.iter().map(|a| Operator::Aggregate(a.func)));
        }
        AlgebraExpr::Union { .. } => out.push(Operator::Union),
        AlgebraExpr::UnionAll { .. } => out.push(Operator::UnionAll),
    }
}

/// Operators contributed by each node, pre-order. A keyed γ contributes
/// its grouping δ as well as each aggregate function.
pub fn operators(e: &AlgebraExpr) -> Vec<Operator> {
    let mut out = Vec::new();
    for node in e.nodes() {
        own_operators(node, &mut out);
    }
    out
}

/// The composition rule folded over the flat operator list.
pub fn operator_fold(e: &AlgebraExpr) -> Sensitivity {
    operators(e)
        .into_iter()
        .map(classify_operator)
        .fold(Sensitivity::Sensitive, Sensitivity::compose)
}

/// The composition rule applied along each path from the root. Unary chains
/// fold exactly as [`operator_fold`]; a UNION ALL stays sensitive while
/// either input is, since the other input cannot absorb the change.
pub fn query_sensitivity(e: &AlgebraExpr) -> Sensitivity {
    match e {
        AlgebraExpr::Scan { .. } => Sensitivity::Sensitive,
        AlgebraExpr::Union { .. } => Sensitivity::Insensitive,
        AlgebraExpr::UnionAll { left, right } => {
            if query_sensitivity(left) == Sensitivity::Sensitive || query_sensitivity(right) == Sensitivity::Sensitive {
                Sensitivity::Sensitive
            } else {
                Sensitivity::Insensitive
            }
        }
        node => {
            let mut own = Vec::new();
            own_operators(node, &mut own);
            let child = node
                .children()
                .into_iter()
                .map(query_sensitivity)
                .fold(Sensitivity::Sensitive, Sensitivity::compose);
            own.into_iter().map(classify_operator).fold(child, Sensitivity::compose)
        }
    }
}

/// Search bounds for [`sensitivity_oracle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_tables: usize,
    /// Distinct base tuples across all tables.
    pub max_rows: usize,
    pub max_databases: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_tables: 2,
            max_rows: 3,
            max_databases: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    /// Doubling `row` of `table` in `database` changes the result.
    WitnessFound {
        database: Database,
        table: String,
        row: Vec<Value>,
    },
    NoWitnessWithinBudget {
        databases_checked: usize,
    },
}

impl OracleOutcome {
    pub fn is_witness(&self) -> bool {
        matches!(self, OracleOutcome::WitnessFound { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityVerdict {
    pub static_class: Sensitivity,
    pub oracle: OracleOutcome,
}

impl SensitivityVerdict {
    /// Static class and oracle agree when a witness exists exactly for
    /// sensitive queries.
    pub fn agrees(&self) -> bool {
        self.oracle.is_witness() == (self.static_class == Sensitivity::Sensitive)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("budget exceeded before enumeration could start: {0}")]
    BudgetExceeded(String),
}

pub fn verdict(e: &AlgebraExpr, schema: &Schema, budget: &OracleBudget) -> Result<SensitivityVerdict, OracleError> {
    Ok(SensitivityVerdict {
        static_class: query_sensitivity(e),
        oracle: sensitivity_oracle(e, schema, budget)?,
    })
}

fn domain(ty: SqlType) -> [Value; 3] {
    match ty {
        SqlType::Int => [Value::Null, Value::Int(0), Value::Int(1)],
        SqlType::Dec => [
            Value::Null,
            Value::Dec(Decimal::new(0, 0)),
            Value::Dec(Decimal::new(1, 0)),
        ],
        SqlType::Str => [Value::Null, Value::Str("0".into()), Value::Str("1".into())],
    }
}

fn all_tuples(types: &[SqlType]) -> Vec<Vec<Value>> {
    let mut out: Vec<Vec<Value>> = vec![Vec::new()];
    for &ty in types {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                domain(ty).into_iter().map(move |v| {
                    let mut t = prefix.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

/// k-subsets of 0..n in lexicographic order, for every k up to `max`.
fn subsets(n: usize, max: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..=max.min(n)).flat_map(move |k| Combinations::new(n, k))
}

struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            current: if k <= n { Some((0..k).collect()) } else { None },
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().unwrap();
        let k = cur.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if cur[i] < self.n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Enumerates small databases over `schema` and, on each, doubles each base
/// row's multiplicity in turn, looking for a change in the result of `e`.
pub fn sensitivity_oracle(
    e: &AlgebraExpr,
    schema: &Schema,
    budget: &OracleBudget,
) -> Result<OracleOutcome, OracleError> {
    let mut tables: Vec<String> = Vec::new();
    for node in e.nodes() {
        if let AlgebraExpr::Scan { tables: ts } = node {
            for t in ts {
                if !tables.contains(t) {
                    tables.push(t.clone());
                }
            }
        }
    }
    if tables.is_empty() {
        return Err(OracleError::BudgetExceeded("expression reads no table".into()));
    }
    if tables.len() > budget.max_tables {
        return Err(OracleError::BudgetExceeded(format!(
            "{} tables exceed the limit of {}",
            tables.len(),
            budget.max_tables
        )));
    }
    let mut empty = Database::default();
    let mut candidates: Vec<(String, Vec<Value>)> = Vec::new();
    for name in &tables {
        let ts = schema
            .table(name)
            .ok_or_else(|| OracleError::BudgetExceeded(format!("table {name} missing from schema")))?;
        empty
            .create_table(ts.clone())
            .map_err(|err| OracleError::BudgetExceeded(err.to_string()))?;
        let types: Vec<SqlType> = ts.columns.iter().map(|c| c.ty).collect();
        candidates.extend(all_tuples(&types).into_iter().map(|t| (name.clone(), t)));
    }

    let mut checked = 0;
    for pick in subsets(candidates.len(), budget.max_rows) {
        if checked >= budget.max_databases {
            break;
        }
        checked += 1;
        let mut db = empty.clone();
        for &i in &pick {
            let (t, row) = &candidates[i];
            db.insert(t, row.clone(), 1).expect("tuple fits its table");
        }
        let Ok(base) = eval_algebra(&db, e) else { continue };
        for &i in &pick {
            let (t, row) = &candidates[i];
            let mut doubled = db.clone();
            doubled.insert(t, row.clone(), 1).expect("tuple fits its table");
            match eval_algebra(&doubled, e) {
                Ok(r) if r.same_multiset(&base) => {}
                _ => {
                    return Ok(OracleOutcome::WitnessFound {
                        database: db,
                        table: t.clone(),
                        row: row.clone(),
                    })
                }
            }
        }
    }
    Ok(OracleOutcome::NoWitnessWithinBudget {
        databases_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::lower;
    use crate::sql::parse;

    fn schema() -> Schema {
        Database::from_script("CREATE TABLE t0 (a INT, b DECIMAL(20,6)); CREATE TABLE t1 (c INT);")
            .unwrap()
            .schema()
    }

    fn low(sql: &str) -> AlgebraExpr {
        lower(&parse(sql).unwrap()).unwrap()
    }

    #[test]
    fn operator_table() {
        assert_eq!(
            classify_operator(Operator::Aggregate(AggFunc::Sum)),
            Sensitivity::Sensitive
        );
        assert_eq!(
            classify_operator(Operator::Aggregate(AggFunc::Max)),
            Sensitivity::Insensitive
        );
        assert_eq!(classify_operator(Operator::GroupBy), Sensitivity::Insensitive);
        assert_eq!(classify_operator(Operator::UnionAll), Sensitivity::Sensitive);
        assert_eq!(classify_operator(Operator::Union), Sensitivity::Insensitive);
    }

    #[test]
    fn fold_examples() {
        assert_eq!(
            query_sensitivity(&low("SELECT DISTINCT a FROM t0 WHERE a > 0")),
            Sensitivity::Insensitive
        );
        assert_eq!(
            query_sensitivity(&low("SELECT a FROM t0 WHERE a > 0")),
            Sensitivity::Sensitive
        );
        assert_eq!(query_sensitivity(&low("SELECT a FROM t0")), Sensitivity::Sensitive);
        assert_eq!(
            query_sensitivity(&low("SELECT COUNT(*) FROM t0 GROUP BY a")),
            Sensitivity::Insensitive
        );
        assert_eq!(query_sensitivity(&low("SELECT SUM(b) FROM t0")), Sensitivity::Sensitive);
    }

    #[test]
    fn union_all_keeps_a_sensitive_branch() {
        let e = low("SELECT a FROM t0 UNION ALL SELECT DISTINCT a FROM t0");
        assert_eq!(operator_fold(&e), Sensitivity::Insensitive);
        assert_eq!(query_sensitivity(&e), Sensitivity::Sensitive);
        assert!(sensitivity_oracle(&e, &schema(), &OracleBudget::default())
            .unwrap()
            .is_witness());
        let both = low("SELECT DISTINCT a FROM t0 UNION ALL SELECT DISTINCT c FROM t1");
        assert_eq!(query_sensitivity(&both), Sensitivity::Insensitive);
        assert_eq!(
            query_sensitivity(&low("SELECT a FROM t0 UNION SELECT c FROM t1")),
            Sensitivity::Insensitive
        );
    }

    #[test]
    fn combinations_count() {
        assert_eq!(subsets(5, 3).count(), 1 + 5 + 10 + 10);
        assert_eq!(Combinations::new(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn oracle_examples() {
        let b = OracleBudget::default();
        assert!(sensitivity_oracle(&low("SELECT a FROM t0"), &schema(), &b)
            .unwrap()
            .is_witness());
        assert!(!sensitivity_oracle(&low("SELECT DISTINCT a FROM t0"), &schema(), &b)
            .unwrap()
            .is_witness());
        assert!(!sensitivity_oracle(&low("SELECT a FROM t0 WHERE FALSE"), &schema(), &b)
            .unwrap()
            .is_witness());
    }
}
