use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fault::{FaultSpec, UnknownFault};
use super::value::Incomparable;
use super::{codes, Database, Decimal, Relation, SqlType, TruthValue, Value};
use crate::sql::{
    self, AggArg, AggCall, AggFunc, CmpOp, ColumnRef, Predicate, SelectItem, SetOp, SqlQuery, Term, TruthLiteral,
};

/// Execution failure with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ExecError {
    pub code: String,
    pub message: String,
}

impl ExecError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ExecError {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// One rendered field: the engine's text for the value plus a type tag.
/// `text == None` is SQL NULL.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub text: Option<String>,
    pub tag: Option<SqlType>,
}

impl Cell {
    pub fn null() -> Self {
        Cell { text: None, tag: None }
    }
}

/// Result rows as rendered text, duplicates expanded.
pub type RenderedRows = Vec<Vec<Cell>>;

pub fn render_cell(v: &Value) -> Cell {
    Cell {
        text: v.render(),
        tag: v.sql_type(),
    }
}

/// The reference engine, optionally with one planted fault.
#[derive(Debug, Clone, Copy, Default)]
pub struct Engine {
    fault: Option<&'static FaultSpec>,
}

impl Engine {
    pub fn clean() -> Self {
        Engine { fault: None }
    }

    /// An engine identical to [`Engine::clean`] except at the fault's stage.
    pub fn with_fault(name: &str) -> Result<Self, UnknownFault> {
        Ok(Engine {
            fault: Some(FaultSpec::lookup(name)?),
        })
    }

    pub fn fault(&self) -> Option<&'static FaultSpec> {
        self.fault
    }

    fn faulty(&self, name: &str) -> bool {
        self.fault.is_some_and(|f| f.name == name)
    }

    /// Executes `q` and returns its result multiset. Semantic problems are
    /// discovered here and reported with the codes in [`codes`].
    pub fn execute(&self, db: &Database, q: &SqlQuery) -> Result<Relation, ExecError> {
        let q_orig = q;
        let q = sql::qualify(q, &db.schema()).map_err(|errs| {
            let e = &errs[0];
            ExecError::new(e.code(), e.to_string())
        })?;
        let mut rel = self.exec_query(db, &q)?;
        // name outputs as written, not as qualified
        rel.columns = q_orig.select.iter().map(item_name).collect();
        Ok(rel)
    }

    /// Executes and renders, applying render-stage faults.
    pub fn execute_rendered(&self, db: &Database, q: &SqlQuery) -> Result<RenderedRows, ExecError> {
        let rel = self.execute(db, q)?;
        let split_columns: Vec<bool> = if self.faulty("float-format-split") && q.set_op.is_none() && q.having.is_some()
        {
            q.select
                .iter()
                .map(|s| matches!(s, SelectItem::Agg(AggCall { func: AggFunc::Sum, .. })))
                .collect()
        } else {
            vec![false; rel.arity()]
        };
        Ok(rel
            .expanded()
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&split_columns)
                    .map(|(v, split)| match v {
                        Value::Dec(d) if *split => Cell {
                            text: Some(format!("{:.20}", d.to_f64())),
                            tag: Some(SqlType::Dec),
                        },
                        v => render_cell(v),
                    })
                    .collect()
            })
            .collect())
    }

    /// Parses and executes; syntax errors surface as `SYNTAX_ERROR`.
    pub fn execute_sql(&self, db: &Database, text: &str) -> Result<RenderedRows, ExecError> {
        let q = sql::parse(text).map_err(|e| ExecError::new(codes::SYNTAX_ERROR, e.to_string()))?;
        self.execute_rendered(db, &q)
    }

    fn exec_query(&self, db: &Database, q: &SqlQuery) -> Result<Relation, ExecError> {
        let head = self.exec_block(db, q)?;
        let Some((op, rest)) = &q.set_op else {
            return Ok(head);
        };
        let tail = self.exec_query(db, rest)?;
        let all = head.union_all(&tail);
        Ok(match op {
            SetOp::Union => all.flatten(),
            SetOp::UnionAll if self.faulty("union-all-as-union") && q.where_pred.is_some() => all.flatten(),
            SetOp::UnionAll => all,
        })
    }

    fn exec_block(&self, db: &Database, q: &SqlQuery) -> Result<Relation, ExecError> {
        // FROM: multiset cross product
        let mut columns: Vec<ColumnRef> = Vec::new();
        let mut rows: Vec<(Vec<Value>, u64)> = vec![(Vec::new(), 1)];
        for name in &q.from {
            let table = db
                .table(name)
                .ok_or_else(|| ExecError::new(codes::UNKNOWN_TABLE, format!("unknown table {name}")))?;
            columns.extend(table.schema.columns.iter().map(|c| ColumnRef::qualified(name, &c.name)));
            let mut next = Vec::with_capacity(rows.len() * table.rows.distinct_len());
            for (prefix, m) in &rows {
                for (t, tm) in table.rows.iter() {
                    let mut row = prefix.clone();
                    row.extend(t.iter().cloned());
                    next.push((row, m * tm));
                }
            }
            rows = next;
        }

        if let Some(p) = &q.where_pred {
            let keep_unknown = self.faulty("null-where-true");
            let mut kept = Vec::with_capacity(rows.len());
            for (row, m) in rows {
                match eval_pred(p, &columns, &row)? {
                    TruthValue::True => kept.push((row, m)),
                    TruthValue::Unknown if keep_unknown => kept.push((row, m)),
                    _ => {}
                }
            }
            rows = kept;
        }

        let out_columns: Vec<String> = q.select.iter().map(item_name).collect();
        let mut out = Relation::new(out_columns);

        if q.is_grouped() {
            let keys: Vec<ColumnRef> = q.group_by.clone().unwrap_or_default();
            let key_idx: Vec<usize> = keys
                .iter()
                .map(|k| column_index(&columns, k))
                .collect::<Result<_, _>>()?;

            let mut having_done = false;
            if let (Some(h), true) = (&q.having, self.faulty("having-pre-group")) {
                let mut kept = Vec::with_capacity(rows.len());
                for (row, m) in rows {
                    if eval_pred(h, &columns, &row)? != TruthValue::False {
                        kept.push((row, m));
                    }
                }
                rows = kept;
                having_done = true;
            }

            let mut groups: BTreeMap<Vec<Value>, Vec<(Vec<Value>, u64)>> = BTreeMap::new();
            if keys.is_empty() {
                groups.insert(Vec::new(), Vec::new());
            }
            for (row, m) in rows {
                let key: Vec<Value> = key_idx.iter().map(|&i| row[i].clone()).collect();
                groups.entry(key).or_default().push((row, m));
            }

            let sum_once = self.faulty("sum-skips-duplicates") && q.where_pred.is_some();
            for (key, members) in groups {
                if let (Some(h), false) = (&q.having, having_done) {
                    if eval_pred(h, &keys, &key)? != TruthValue::True {
                        continue;
                    }
                }
                let mut tuple = Vec::with_capacity(q.select.len());
                for item in &q.select {
                    match item {
                        SelectItem::Column(c) => {
                            let i = column_index(&keys, c).map_err(|_| {
                                ExecError::new(codes::NON_GROUPED_COLUMN, format!("{c} is not grouped"))
                            })?;
                            tuple.push(key[i].clone());
                        }
                        SelectItem::Agg(call) => {
                            let mut input: Vec<(Value, u64)> = match &call.arg {
                                AggArg::Star => members.iter().map(|(_, m)| (Value::Int(1), *m)).collect(),
                                AggArg::Column(c) => {
                                    let i = column_index(&columns, c)?;
                                    members.iter().map(|(r, m)| (r[i].clone(), *m)).collect()
                                }
                            };
                            if sum_once && call.func == AggFunc::Sum {
                                let distinct: BTreeMap<Value, u64> = input.into_iter().map(|(v, _)| (v, 1)).collect();
                                input = distinct.into_iter().collect();
                            }
                            tuple.push(eval_agg(call, &input)?);
                        }
                    }
                }
                out.insert(tuple, 1);
            }
        } else {
            let idx: Vec<usize> = q
                .select
                .iter()
                .map(|item| match item {
                    SelectItem::Column(c) => column_index(&columns, c),
                    SelectItem::Agg(_) => unreachable!("aggregates imply grouping"),
                })
                .collect::<Result<_, _>>()?;
            for (row, m) in rows {
                out.insert(idx.iter().map(|&i| row[i].clone()).collect(), m);
            }
        }

        if q.distinct && !self.faulty("drop-distinct") {
            out = out.flatten();
        }
        Ok(out)
    }
}

fn item_name(item: &SelectItem) -> String {
    match item {
        SelectItem::Column(c) => c.column.clone(),
        SelectItem::Agg(call) => sql::render_agg(call),
    }
}

/// Position of `c` among `columns`. Qualified refs match exactly; bare refs
/// match by column name when unambiguous.
pub(crate) fn column_index(columns: &[ColumnRef], c: &ColumnRef) -> Result<usize, ExecError> {
    let mut hits = columns.iter().enumerate().filter(|(_, col)| match &c.table {
        Some(_) => *col == c,
        None => col.column == c.column,
    });
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => Ok(i),
        (Some(_), Some(_)) => Err(ExecError::new(codes::AMBIGUOUS_COLUMN, format!("ambiguous column {c}"))),
        (None, _) => Err(ExecError::new(codes::UNKNOWN_COLUMN, format!("unknown column {c}"))),
    }
}

/// Kleene evaluation of `p` over one row binding.
pub fn eval_pred(p: &Predicate, columns: &[ColumnRef], row: &[Value]) -> Result<TruthValue, ExecError> {
    Ok(match p {
        Predicate::Literal(TruthLiteral::True) => TruthValue::True,
        Predicate::Literal(TruthLiteral::False) => TruthValue::False,
        Predicate::Literal(TruthLiteral::Null) => TruthValue::Unknown,
        Predicate::Cmp(l, op, r) => {
            let lv = term_value(l, columns, row)?;
            let rv = term_value(r, columns, row)?;
            match lv.sql_cmp(&rv) {
                Err(Incomparable) => {
                    return Err(ExecError::new(
                        codes::TYPE_MISMATCH,
                        format!("cannot compare {lv} with {rv}"),
                    ))
                }
                Ok(None) => TruthValue::Unknown,
                Ok(Some(ord)) => {
                    use std::cmp::Ordering::*;
                    let b = match op {
                        CmpOp::Eq => ord == Equal,
                        CmpOp::Ne => ord != Equal,
                        CmpOp::Lt => ord == Less,
                        CmpOp::Le => ord != Greater,
                        CmpOp::Gt => ord == Greater,
                        CmpOp::Ge => ord != Less,
                    };
                    if b {
                        TruthValue::True
                    } else {
                        TruthValue::False
                    }
                }
            }
        }
        // both sides are evaluated so type errors surface regardless of
        // short-circuiting
        Predicate::And(l, r) => eval_pred(l, columns, row)?.and(eval_pred(r, columns, row)?),
        Predicate::Or(l, r) => eval_pred(l, columns, row)?.or(eval_pred(r, columns, row)?),
        Predicate::Not(inner) => !eval_pred(inner, columns, row)?,
    })
}

fn term_value(t: &Term, columns: &[ColumnRef], row: &[Value]) -> Result<Value, ExecError> {
    match t {
        Term::Const(l) => Ok(l.to_value()),
        Term::Column(c) => Ok(row[column_index(columns, c)?].clone()),
    }
}

/// Scale increase applied by AVG.
pub const AVG_EXTRA_SCALE: u32 = 4;

/// Evaluates one aggregate over a group given as `(value, multiplicity)`
/// pairs. For `COUNT(*)` the values are ignored.
pub fn eval_agg(call: &AggCall, group: &[(Value, u64)]) -> Result<Value, ExecError> {
    if call.func == AggFunc::Count {
        let n: u64 = match call.arg {
            AggArg::Star => group.iter().map(|(_, m)| m).sum(),
            AggArg::Column(_) => group.iter().filter(|(v, _)| !v.is_null()).map(|(_, m)| m).sum(),
        };
        return Ok(Value::Int(n as i64));
    }
    let present: Vec<&(Value, u64)> = group.iter().filter(|(v, _)| !v.is_null()).collect();
    if present.is_empty() {
        return Ok(Value::Null);
    }
    match call.func {
        AggFunc::Min => Ok(present.iter().map(|(v, _)| v).min().cloned().unwrap()),
        AggFunc::Max => Ok(present.iter().map(|(v, _)| v).max().cloned().unwrap()),
        AggFunc::Sum | AggFunc::Avg => {
            let overflow = || ExecError::new(codes::OVERFLOW, "numeric overflow in aggregate");
            let mut all_int = true;
            let mut total = Decimal::from_int(0);
            let mut count: u64 = 0;
            for (v, m) in &present {
                let d = match v {
                    Value::Int(i) => Decimal::from_int(*i),
                    Value::Dec(d) => {
                        all_int = false;
                        *d
                    }
                    other => {
                        return Err(ExecError::new(
                            codes::TYPE_MISMATCH,
                            format!("{} over non-numeric value {other}", call.func.name()),
                        ))
                    }
                };
                total = total
                    .checked_add(d.checked_mul_int(*m as i128).ok_or_else(overflow)?)
                    .ok_or_else(overflow)?;
                count += m;
            }
            if call.func == AggFunc::Sum {
                if all_int {
                    return Ok(match i64::try_from(total.mantissa) {
                        Ok(i) => Value::Int(i),
                        Err(_) => Value::Dec(total),
                    });
                }
                return Ok(Value::Dec(total));
            }
            let scale = total.scale + AVG_EXTRA_SCALE;
            let avg = total
                .div_int_round(count as i128, scale)
                .ok_or_else(|| ExecError::new(codes::DIV_BY_ZERO, "AVG over empty input"))?;
            Ok(Value::Dec(avg))
        }
        AggFunc::Count => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;

    fn db() -> Database {
        Database::from_script(
            "CREATE TABLE t0 (a INT, b DECIMAL(20,6), s VARCHAR(8));
             INSERT INTO t0 VALUES (1, 0.0005, 'x'), (1, 0.0005, 'x'), (2, 1.5, NULL), (NULL, NULL, 'y');
             CREATE TABLE t1 (a INT);
             INSERT INTO t1 VALUES (1), (1), (3);",
        )
        .unwrap()
    }

    fn run(sql: &str) -> Relation {
        Engine::clean().execute(&db(), &parse(sql).unwrap()).unwrap()
    }

    fn ints(rows: &[(Option<i64>, u64)]) -> Vec<(Vec<Value>, u64)> {
        rows.iter()
            .map(|(v, m)| (vec![v.map(Value::Int).unwrap_or(Value::Null)], *m))
            .collect()
    }

    fn assert_rel(r: &Relation, expected: &[(Option<i64>, u64)]) {
        let exp = Relation::from_rows(r.columns.clone(), ints(expected));
        assert!(r.same_multiset(&exp), "got {r:?}, expected {expected:?}");
    }

    #[test]
    fn projection_keeps_multiplicity() {
        assert_rel(&run("SELECT a FROM t1"), &[(Some(1), 2), (Some(3), 1)]);
    }

    #[test]
    fn distinct_flattens() {
        assert_rel(&run("SELECT DISTINCT a FROM t1"), &[(Some(1), 1), (Some(3), 1)]);
    }

    #[test]
    fn where_drops_unknown() {
        assert_rel(&run("SELECT a FROM t0 WHERE a > 0"), &[(Some(1), 2), (Some(2), 1)]);
        assert_rel(&run("SELECT a FROM t0 WHERE NOT a > 1"), &[(Some(1), 2)]);
    }

    #[test]
    fn nulls_group_together() {
        let r = run("SELECT a, COUNT(*) FROM t0 GROUP BY a");
        assert_eq!(r.distinct_len(), 3);
        assert_eq!(r.multiplicity(&[Value::Null, Value::Int(1)]), 1);
        assert_eq!(r.multiplicity(&[Value::Int(1), Value::Int(2)]), 1);
    }

    #[test]
    fn decimal_sum_is_exact() {
        let r = run("SELECT SUM(b) FROM t0 WHERE a = 1");
        let (t, _) = r.iter().next().unwrap();
        assert_eq!(t[0].render().unwrap(), "0.001000");
        assert_eq!(t[0], Value::Dec(Decimal::parse("0.001").unwrap()));
    }

    #[test]
    fn empty_input_aggregates() {
        let r = run("SELECT COUNT(*), SUM(a), MIN(a), AVG(a) FROM t0 WHERE FALSE");
        let rows = r.expanded();
        assert_eq!(rows, vec![vec![Value::Int(0), Value::Null, Value::Null, Value::Null]]);
        // a grouped query over empty input has no groups at all
        assert!(run("SELECT COUNT(*) FROM t0 WHERE FALSE GROUP BY a").is_empty());
    }

    #[test]
    fn union_and_union_all() {
        let all = run("SELECT a FROM t0 UNION ALL SELECT a FROM t1");
        assert_eq!(all.len(), 7);
        let set = run("SELECT a FROM t0 UNION SELECT a FROM t1");
        assert!(set.same_multiset(&all.flatten()));
    }

    #[test]
    fn cross_product_multiplies() {
        let r = run("SELECT t1.a FROM t0, t1 WHERE t0.a = 1");
        assert_rel(&r, &[(Some(1), 4), (Some(3), 2)]);
    }

    #[test]
    fn runtime_errors_carry_codes() {
        let e = Engine::clean();
        let db = db();
        let code = |sql: &str| e.execute(&db, &parse(sql).unwrap()).unwrap_err().code;
        assert_eq!(code("SELECT a FROM nope"), codes::UNKNOWN_TABLE);
        assert_eq!(code("SELECT zz FROM t0"), codes::UNKNOWN_COLUMN);
        assert_eq!(code("SELECT a, SUM(b) FROM t0"), codes::NON_GROUPED_COLUMN);
        assert_eq!(code("SELECT a FROM t0 WHERE s > 1"), codes::TYPE_MISMATCH);
        assert_eq!(code("SELECT SUM(s) FROM t0"), codes::TYPE_MISMATCH);
    }

    #[test]
    fn agg_respects_multiplicity() {
        let sum = AggCall {
            func: AggFunc::Sum,
            arg: AggArg::Column(ColumnRef::bare("a")),
        };
        let max = AggCall {
            func: AggFunc::Max,
            arg: AggArg::Column(ColumnRef::bare("a")),
        };
        let g = [(Value::Int(1), 2), (Value::Int(2), 1)];
        assert_eq!(eval_agg(&sum, &g).unwrap(), Value::Int(4));
        assert_eq!(eval_agg(&max, &g).unwrap(), Value::Int(2));
        let g2 = [(Value::Int(1), 5), (Value::Int(2), 3)];
        assert_eq!(eval_agg(&max, &g2).unwrap(), Value::Int(2));
        let star = AggCall {
            func: AggFunc::Count,
            arg: AggArg::Star,
        };
        assert_eq!(eval_agg(&star, &[]).unwrap(), Value::Int(0));
        assert_eq!(eval_agg(&sum, &[(Value::Null, 3)]).unwrap(), Value::Null);
        let avg = AggCall {
            func: AggFunc::Avg,
            arg: AggArg::Column(ColumnRef::bare("a")),
        };
        assert_eq!(eval_agg(&avg, &g).unwrap().render().unwrap(), "1.3333");
    }

    #[test]
    fn kleene_examples() {
        let cols: [ColumnRef; 0] = [];
        let p = |s: &str| {
            parse(&format!("SELECT a FROM t WHERE {s}"))
                .unwrap()
                .where_pred
                .unwrap()
        };
        assert_eq!(eval_pred(&p("1 > NULL"), &cols, &[]).unwrap(), TruthValue::Unknown);
        assert_eq!(eval_pred(&p("TRUE AND NULL"), &cols, &[]).unwrap(), TruthValue::Unknown);
        assert_eq!(eval_pred(&p("FALSE AND NULL"), &cols, &[]).unwrap(), TruthValue::False);
        assert_eq!(eval_pred(&p("NOT NULL"), &cols, &[]).unwrap(), TruthValue::Unknown);
        assert_eq!(eval_pred(&p("TRUE OR NULL"), &cols, &[]).unwrap(), TruthValue::True);
        assert!(eval_pred(&p("'a' < 1"), &cols, &[]).is_err());
    }
}
