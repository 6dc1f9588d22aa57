use std::collections::BTreeMap;

use crate::algebra::AlgebraExpr;
use crate::sql::{render_agg, AggArg, ColumnRef, SelectItem};

use super::exec::{column_index, eval_agg, eval_pred};
use super::{codes, Database, ExecError, Relation, TruthValue, Value};

/// Working relation: row bindings plus the references they answer to.
struct Frame {
    columns: Vec<ColumnRef>,
    rows: BTreeMap<Vec<Value>, u64>,
}

impl Frame {
    fn into_relation(self) -> Relation {
        let names = self.columns.iter().map(|c| c.column.clone()).collect();
        Relation::from_rows(names, self.rows)
    }
}

// aggregate outputs are addressed by their rendered call under a table name
// no identifier can take
const AGG_SLOT: &str = "#agg";

fn agg_ref(call: &crate::sql::AggCall) -> ColumnRef {
    ColumnRef::qualified(AGG_SLOT, render_agg(call))
}

/// Evaluates an algebra expression operator by operator, independent of
/// the clause pipeline in [`super::Engine`]. Used to cross-check lowering.
pub fn eval_algebra(db: &Database, e: &AlgebraExpr) -> Result<Relation, ExecError> {
    Ok(eval(db, e)?.into_relation())
}

fn eval(db: &Database, e: &AlgebraExpr) -> Result<Frame, ExecError> {
    match e {
        AlgebraExpr::Scan { tables } => {
            let mut columns = Vec::new();
            let mut rows: Vec<(Vec<Value>, u64)> = vec![(Vec::new(), 1)];
            for name in tables {
                let table = db
                    .table(name)
                    .ok_or_else(|| ExecError::new(codes::UNKNOWN_TABLE, format!("unknown table {name}")))?;
                columns.extend(table.schema.columns.iter().map(|c| ColumnRef::qualified(name, &c.name)));
                let mut next = Vec::new();
                for (prefix, m) in &rows {
                    for (t, tm) in table.rows.iter() {
                        let mut row = prefix.clone();
                        row.extend(t.iter().cloned());
                        next.push((row, m * tm));
                    }
                }
                rows = next;
            }
            let mut out = BTreeMap::new();
            for (row, m) in rows {
                *out.entry(row).or_insert(0) += m;
            }
            Ok(Frame { columns, rows: out })
        }
        AlgebraExpr::Filter { pred, child } => {
            let mut f = eval(db, child)?;
            let mut kept = BTreeMap::new();
            for (row, m) in f.rows {
                if eval_pred(pred, &f.columns, &row)? == TruthValue::True {
                    kept.insert(row, m);
                }
            }
            f.rows = kept;
            Ok(f)
        }
        AlgebraExpr::Project { items, child } => {
            let f = eval(db, child)?;
            let idx: Vec<usize> = items
                .iter()
                .map(|item| match item {
                    SelectItem::Column(c) => column_index(&f.columns, c),
                    SelectItem::Agg(a) => column_index(&f.columns, &agg_ref(a)),
                })
                .collect::<Result<_, _>>()?;
            let columns = items
                .iter()
                .zip(&idx)
                .map(|(item, &i)| match item {
                    SelectItem::Column(_) => f.columns[i].clone(),
                    SelectItem::Agg(a) => ColumnRef::bare(render_agg(a)),
                })
                .collect();
            Ok(Frame {
                columns,
                rows: project_rows(&f.rows, &idx, false),
            })
        }
        AlgebraExpr::Dedup { keys, child } => {
            let f = eval(db, child)?;
            match keys {
                None => Ok(Frame {
                    rows: f.rows.into_keys().map(|r| (r, 1)).collect(),
                    columns: f.columns,
                }),
                Some(keys) => {
                    let idx: Vec<usize> = keys
                        .iter()
                        .map(|k| column_index(&f.columns, k))
                        .collect::<Result<_, _>>()?;
                    Ok(Frame {
                        columns: idx.iter().map(|&i| f.columns[i].clone()).collect(),
                        rows: project_rows(&f.rows, &idx, true),
                    })
                }
            }
        }
        AlgebraExpr::Agg { keys, aggs, child } => {
            let f = eval(db, child)?;
            let key_idx: Vec<usize> = keys
                .iter()
                .map(|k| column_index(&f.columns, k))
                .collect::<Result<_, _>>()?;
            let mut groups: BTreeMap<Vec<Value>, Vec<(&Vec<Value>, u64)>> = BTreeMap::new();
            if keys.is_empty() {
                groups.insert(Vec::new(), Vec::new());
            }
            for (row, &m) in &f.rows {
                let key = key_idx.iter().map(|&i| row[i].clone()).collect();
                groups.entry(key).or_default().push((row, m));
            }
            let mut rows = BTreeMap::new();
            for (key, members) in groups {
                let mut tuple = key;
                for call in aggs {
                    let input: Vec<(Value, u64)> = match &call.arg {
                        AggArg::Star => members.iter().map(|(_, m)| (Value::Int(1), *m)).collect(),
                        AggArg::Column(c) => {
                            let i = column_index(&f.columns, c)?;
                            members.iter().map(|(r, m)| (r[i].clone(), *m)).collect()
                        }
                    };
                    tuple.push(eval_agg(call, &input)?);
                }
                *rows.entry(tuple).or_insert(0) += 1;
            }
            let mut columns: Vec<ColumnRef> = key_idx.iter().map(|&i| f.columns[i].clone()).collect();
            columns.extend(aggs.iter().map(agg_ref));
            Ok(Frame { columns, rows })
        }
        AlgebraExpr::Union { left, right } | AlgebraExpr::UnionAll { left, right } => {
            let mut l = eval(db, left)?;
            let r = eval(db, right)?;
            if l.columns.len() != r.columns.len() {
                return Err(ExecError::new(
                    codes::ARITY_MISMATCH,
                    format!("{} vs {} columns", l.columns.len(), r.columns.len()),
                ));
            }
            for (row, m) in r.rows {
                *l.rows.entry(row).or_insert(0) += m;
            }
            if matches!(e, AlgebraExpr::Union { .. }) {
                l.rows.values_mut().for_each(|m| *m = 1);
            }
            Ok(l)
        }
    }
}

fn project_rows(rows: &BTreeMap<Vec<Value>, u64>, idx: &[usize], dedup: bool) -> BTreeMap<Vec<Value>, u64> {
    let mut out = BTreeMap::new();
    for (row, &m) in rows {
        let t: Vec<Value> = idx.iter().map(|&i| row[i].clone()).collect();
        let slot = out.entry(t).or_insert(0);
        *slot = if dedup { 1 } else { *slot + m };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::lower;
    use crate::refdb::Engine;
    use crate::sql::parse;

    fn db() -> Database {
        Database::from_script(
            "CREATE TABLE t0 (a INT, b DECIMAL(20,6));
             INSERT INTO t0 VALUES (1, 0.0005), (1, 0.0005), (2, 1.5), (NULL, 0.25), (NULL, NULL);
             CREATE TABLE t1 (c INT);
             INSERT INTO t1 VALUES (1), (1), (3);",
        )
        .unwrap()
    }

    #[test]
    fn matches_clause_pipeline() {
        let db = db();
        for sql in [
            "SELECT a FROM t0",
            "SELECT DISTINCT a FROM t0 WHERE b > 0",
            "SELECT a FROM t0 GROUP BY a HAVING a > 1",
            "SELECT a, SUM(b), COUNT(*), AVG(b) FROM t0 WHERE b < 1 GROUP BY a",
            "SELECT COUNT(a), MIN(b) FROM t0 WHERE a > 5",
            "SELECT DISTINCT SUM(b) FROM t0 GROUP BY a",
            "SELECT a FROM t0 UNION ALL SELECT c FROM t1 UNION SELECT c FROM t1",
            "SELECT t0.a, c FROM t0, t1 WHERE t0.a = t1.c",
        ] {
            let q = parse(sql).unwrap();
            let clause = Engine::clean().execute(&db, &q).unwrap();
            let planned = eval_algebra(&db, &lower(&q).unwrap()).unwrap();
            assert_eq!(clause, planned, "{sql}");
        }
    }
}
