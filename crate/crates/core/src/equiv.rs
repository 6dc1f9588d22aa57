//! Bounded counterexample search for query pairs. A clean result does not
//! prove equivalence; it only says no database within the budget tells the
//! two queries apart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::refdb::{Database, Decimal, Engine, ExecError, Relation, SqlType, Value};
use crate::sql::{Schema, SqlQuery};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivBudget {
    /// Structured databases over {NULL, 0, 1}, tried first.
    pub tiny: usize,
    /// Random databases drawn afterwards.
    pub random: usize,
    /// Row cap per table for the random phase.
    pub max_rows: usize,
    pub seed: u64,
}

impl Default for EquivBudget {
    fn default() -> Self {
        EquivBudget {
            tiny: 8,
            random: 24,
            max_rows: 6,
            seed: 0,
        }
    }
}

impl EquivBudget {
    pub fn total(&self) -> usize {
        self.tiny.min(TINY_PATTERNS.len()) + self.random
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    NotEquivalent {
        witness: Database,
        left: Result<Relation, ExecError>,
        right: Result<Relation, ExecError>,
        budget_used: usize,
    },
    NoCounterexample {
        budget_used: usize,
    },
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::NoCounterexample { .. })
    }

    pub fn budget_used(&self) -> usize {
        match self {
            Verdict::NotEquivalent { budget_used, .. } | Verdict::NoCounterexample { budget_used } => *budget_used,
        }
    }
}

// Each pattern is a table's rows, every column of a row holding the same
// value: None = NULL, Some(0), Some(1). Duplicates come early.
const TINY_PATTERNS: [&[Option<i64>]; 10] = [
    &[],
    &[Some(1)],
    &[Some(1), Some(1)],
    &[None, None],
    &[Some(0), Some(1)],
    &[Some(0), Some(0)],
    &[None],
    &[Some(1), None],
    &[Some(0)],
    &[Some(0), None],
];

fn tiny_value(v: Option<i64>, ty: SqlType) -> Value {
    match (v, ty) {
        (None, _) => Value::Null,
        (Some(i), SqlType::Int) => Value::Int(i),
        (Some(i), SqlType::Dec) => Value::Dec(Decimal::from_int(i)),
        (Some(i), SqlType::Str) => Value::Str(i.to_string()),
    }
}

fn empty_db(schema: &Schema) -> Database {
    let mut db = Database::default();
    for t in &schema.tables {
        db.create_table(t.clone()).expect("schema has unique tables");
    }
    db
}

/// Deterministic database sequence the filter walks through.
pub fn witness_databases(schema: &Schema, pool: &[Value], budget: &EquivBudget) -> Vec<Database> {
    let mut out = Vec::with_capacity(budget.total());
    for pattern in TINY_PATTERNS.iter().take(budget.tiny) {
        let mut db = empty_db(schema);
        for t in &schema.tables {
            for &v in pattern.iter() {
                let row = t.columns.iter().map(|c| tiny_value(v, c.ty)).collect();
                db.insert(&t.name, row, 1).expect("tiny row fits");
            }
        }
        out.push(db);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    for _ in 0..budget.random {
        out.push(random_db(schema, pool, budget.max_rows, &mut rng));
    }
    out
}

fn pool_for(ty: SqlType, pool: &[Value]) -> Vec<Value> {
    let mut out = vec![Value::Null];
    let base: Vec<Value> = match ty {
        SqlType::Int => vec![Value::Int(0), Value::Int(1), Value::Int(-1)],
        SqlType::Dec => vec![
            Value::Dec(Decimal::from_int(0)),
            Value::Dec(Decimal::from_int(1)),
            Value::Dec(Decimal::new(5, 4)),
        ],
        SqlType::Str => vec![Value::Str("0".into()), Value::Str("a".into())],
    };
    for v in base.into_iter().chain(pool.iter().cloned()) {
        let fits = match (&v, ty) {
            (Value::Int(_), SqlType::Int | SqlType::Dec) => true,
            (Value::Dec(d), SqlType::Int) => d.normalized().scale == 0,
            (Value::Dec(d), SqlType::Dec) => d.normalized().scale <= 6,
            (Value::Str(_), SqlType::Str) => true,
            _ => false,
        };
        let v = match (v, ty) {
            (Value::Dec(d), SqlType::Int) if fits => match i64::try_from(d.normalized().mantissa) {
                Ok(i) => Value::Int(i),
                Err(_) => continue,
            },
            (v, _) => v,
        };
        if fits && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn random_db(schema: &Schema, pool: &[Value], max_rows: usize, rng: &mut ChaCha8Rng) -> Database {
    let mut db = empty_db(schema);
    for t in &schema.tables {
        let pools: Vec<Vec<Value>> = t.columns.iter().map(|c| pool_for(c.ty, pool)).collect();
        let n = rng.gen_range(0..=max_rows);
        let mut rows: Vec<Vec<Value>> = (0..n)
            .map(|_| pools.iter().map(|p| p.choose(rng).unwrap().clone()).collect())
            .collect();
        if n >= 2 {
            // force one duplicate and one NULL
            rows[n - 1] = rows[0].clone();
            let col = rng.gen_range(0..t.columns.len());
            rows[1][col] = Value::Null;
        }
        for row in rows {
            db.insert(&t.name, row, 1).expect("pooled row fits");
        }
    }
    db
}

/// Runs both queries on the clean engine over the witness sequence; the
/// first database on which the results differ (an error on only one side,
/// or on both with different codes, counts) is returned as a witness.
pub fn check_bounded(q1: &SqlQuery, q2: &SqlQuery, schema: &Schema, budget: &EquivBudget) -> Verdict {
    let mut pool: Vec<Value> = Vec::new();
    for lit in q1.constants().into_iter().chain(q2.constants()) {
        let v = lit.to_value();
        if !v.is_null() && !pool.contains(&v) {
            pool.push(v);
        }
    }
    let engine = Engine::clean();
    for (i, db) in witness_databases(schema, &pool, budget).into_iter().enumerate() {
        let left = engine.execute(&db, q1);
        let right = engine.execute(&db, q2);
        let same = match (&left, &right) {
            (Ok(l), Ok(r)) => l.same_multiset(r),
            (Err(l), Err(r)) => l.code == r.code,
            _ => false,
        };
        if !same {
            return Verdict::NotEquivalent {
                witness: db,
                left,
                right,
                budget_used: i + 1,
            };
        }
    }
    Verdict::NoCounterexample {
        budget_used: budget.total(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;

    fn schema() -> Schema {
        Database::from_script("CREATE TABLE t0 (a INT, b DECIMAL(20,6));")
            .unwrap()
            .schema()
    }

    fn check(a: &str, b: &str) -> Verdict {
        check_bounded(
            &parse(a).unwrap(),
            &parse(b).unwrap(),
            &schema(),
            &EquivBudget::default(),
        )
    }

    #[test]
    fn commuted_filters_pass() {
        let v = check(
            "SELECT a FROM t0 WHERE a > 0 AND b < 2",
            "SELECT a FROM t0 WHERE b < 2 AND a > 0",
        );
        assert_eq!(v, Verdict::NoCounterexample { budget_used: 32 });
    }

    #[test]
    fn distinct_is_caught_with_duplicate_witness() {
        let v = check("SELECT a FROM t0", "SELECT DISTINCT a FROM t0");
        let Verdict::NotEquivalent {
            witness, left, right, ..
        } = v
        else {
            panic!("expected a witness");
        };
        assert!(witness.table("t0").unwrap().rows.iter().any(|(_, m)| m >= 2));
        let engine = Engine::clean();
        let q1 = parse("SELECT a FROM t0").unwrap();
        assert_eq!(engine.execute(&witness, &q1), left);
        assert!(!left.unwrap().same_multiset(&right.unwrap()));
    }

    #[test]
    fn identical_queries_pass() {
        assert!(check("SELECT SUM(b) FROM t0 GROUP BY a", "SELECT SUM(b) FROM t0 GROUP BY a").is_equivalent());
    }

    #[test]
    fn asymmetric_error_is_non_equivalence() {
        let v = check("SELECT a FROM t0", "SELECT c FROM t0");
        assert!(matches!(v, Verdict::NotEquivalent { right: Err(_), .. }));
    }

    #[test]
    fn witness_sequence_is_deterministic_and_seeded() {
        let pool = vec![Value::Int(7)];
        let b = EquivBudget::default();
        assert_eq!(
            witness_databases(&schema(), &pool, &b),
            witness_databases(&schema(), &pool, &b)
        );
        let other = EquivBudget { seed: 1, ..b.clone() };
        assert_ne!(
            witness_databases(&schema(), &pool, &b),
            witness_databases(&schema(), &pool, &other)
        );
    }
}
