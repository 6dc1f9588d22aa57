use std::ops::RangeInclusive;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::refdb::{Database, Decimal, SqlType, Value};
use crate::sql::{
    AggArg, AggCall, AggFunc, CmpOp, ColumnRef, ColumnSchema, Literal, Predicate, Schema, SelectItem, SetOp, SqlQuery,
    TableSchema, Term, TruthLiteral,
};

/// The five seed productions:
///
/// 1. `SELECT C' FROM T'`
/// 2. `SELECT C' FROM T WHERE p`
/// 3. `SELECT A FROM T'`
/// 4. `SELECT A FROM T' GROUP BY C`
/// 5. a set operation over two or three blocks
pub const PRODUCTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct GeneratorConfig {
    pub table_count: RangeInclusive<usize>,
    pub column_count: RangeInclusive<usize>,
    pub row_count: RangeInclusive<usize>,
    /// Relative weights of INT, DECIMAL and VARCHAR columns.
    pub type_weights: [u32; 3],
    /// Probability that a generated cell is NULL.
    pub null_weight: f64,
    /// Probability that a generated row copies an earlier one.
    pub duplicate_weight: f64,
    pub grammar_weights: [u32; PRODUCTIONS],
    pub queries_per_iteration: usize,
    pub rng_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            table_count: 1..=3,
            column_count: 1..=3,
            row_count: 2..=8,
            type_weights: [5, 4, 1],
            null_weight: 0.15,
            duplicate_weight: 0.3,
            grammar_weights: [2, 3, 2, 3, 2],
            queries_per_iteration: 2000,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0} range is empty")]
    EmptyRange(&'static str),
    #[error("at least one grammar weight must be positive")]
    NoProduction,
    #[error("at least one type weight must be positive")]
    NoType,
    #[error("queries per iteration must be at least 1")]
    NoQueries,
    #[error("bad grammar weights {0:?}: expected prodN=W pairs, optionally others=W")]
    BadWeights(String),
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.table_count.is_empty() || *self.table_count.start() == 0 {
            return Err(ConfigError::EmptyRange("table count"));
        }
        if self.column_count.is_empty() || *self.column_count.start() == 0 {
            return Err(ConfigError::EmptyRange("column count"));
        }
        if self.row_count.is_empty() {
            return Err(ConfigError::EmptyRange("row count"));
        }
        if self.grammar_weights.iter().all(|w| *w == 0) {
            return Err(ConfigError::NoProduction);
        }
        if self.type_weights.iter().all(|w| *w == 0) {
            return Err(ConfigError::NoType);
        }
        if self.queries_per_iteration == 0 {
            return Err(ConfigError::NoQueries);
        }
        Ok(())
    }
}

/// Parses `prod4=1,others=0`. Productions not named take the `others`
/// weight, or keep their default when `others` is absent.
pub fn parse_grammar_weights(text: &str, defaults: [u32; PRODUCTIONS]) -> Result<[u32; PRODUCTIONS], ConfigError> {
    let bad = || ConfigError::BadWeights(text.to_string());
    let mut named: [Option<u32>; PRODUCTIONS] = [None; PRODUCTIONS];
    let mut others = None;
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        let w: u32 = v.trim().parse().map_err(|_| bad())?;
        match k.trim() {
            "others" => others = Some(w),
            k => {
                let i: usize = k.strip_prefix("prod").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
                if !(1..=PRODUCTIONS).contains(&i) {
                    return Err(bad());
                }
                named[i - 1] = Some(w);
            }
        }
    }
    let mut out = defaults;
    for i in 0..PRODUCTIONS {
        out[i] = named[i].or(others).unwrap_or(defaults[i]);
    }
    if out.iter().all(|w| *w == 0) {
        return Err(ConfigError::NoProduction);
    }
    Ok(out)
}

const TYPES: [SqlType; 3] = [SqlType::Int, SqlType::Dec, SqlType::Str];

/// Non-NULL values cells and constants are drawn from: small integers,
/// 32-bit boundaries, and decimals whose binary approximations are inexact.
pub fn value_pool(ty: SqlType) -> Vec<Value> {
    match ty {
        SqlType::Int => [0, 1, -1, 2, 3, 2147483647, -2147483647].map(Value::Int).to_vec(),
        SqlType::Dec => [(5, 4), (1, 3), (15, 1), (0, 0), (1, 0), (-5, 1), (2147483647, 0)]
            .map(|(m, s)| Value::Dec(Decimal::new(m, s)))
            .to_vec(),
        SqlType::Str => ["a", "b", "", "0"].map(|s| Value::Str(s.to_string())).to_vec(),
    }
}

fn random_value(ty: SqlType, cfg: &GeneratorConfig, rng: &mut impl Rng) -> Value {
    if rng.gen_bool(cfg.null_weight) {
        return Value::Null;
    }
    value_pool(ty).choose(rng).unwrap().clone()
}

fn random_schema(cfg: &GeneratorConfig, rng: &mut impl Rng) -> Vec<TableSchema> {
    let types = WeightedIndex::new(cfg.type_weights).expect("validated weights");
    (0..rng.gen_range(cfg.table_count.clone()))
        .map(|t| TableSchema {
            name: format!("t{t}"),
            columns: (0..rng.gen_range(cfg.column_count.clone()))
                .map(|c| ColumnSchema {
                    name: format!("c{c}"),
                    ty: TYPES[types.sample(rng)],
                })
                .collect(),
        })
        .collect()
}

/// A random database and the script that recreates it. When rows are
/// allowed, `t0` always holds a duplicated row containing a NULL.
pub fn generate_database(cfg: &GeneratorConfig, rng: &mut impl Rng) -> (Database, String) {
    let mut db = Database::default();
    for (ti, ts) in random_schema(cfg, rng).into_iter().enumerate() {
        let n = rng.gen_range(cfg.row_count.clone());
        let mut rows: Vec<Vec<Value>> = Vec::with_capacity(n + 1);
        for _ in 0..n {
            if !rows.is_empty() && rng.gen_bool(cfg.duplicate_weight) {
                let copy = rows.choose(rng).unwrap().clone();
                rows.push(copy);
            } else {
                rows.push(ts.columns.iter().map(|c| random_value(c.ty, cfg, rng)).collect());
            }
        }
        if ti == 0 && *cfg.row_count.end() > 0 {
            if rows.is_empty() {
                rows.push(ts.columns.iter().map(|c| random_value(c.ty, cfg, rng)).collect());
            }
            let col = rng.gen_range(0..ts.columns.len());
            rows[0][col] = Value::Null;
            let first = rows[0].clone();
            rows.push(first);
        }
        let name = ts.name.clone();
        db.create_table(ts).expect("fresh table names");
        for row in rows {
            db.insert(&name, row, 1).expect("generated rows fit");
        }
    }
    let script = db.to_script();
    (db, script)
}

/// Seed query generator over a fixed schema.
pub struct SeedGenerator<'a> {
    cfg: &'a GeneratorConfig,
    schema: &'a Schema,
}

/// A column together with how it is written in the query.
#[derive(Clone)]
struct Col {
    reference: ColumnRef,
    ty: SqlType,
}

impl<'a> SeedGenerator<'a> {
    pub fn new(cfg: &'a GeneratorConfig, schema: &'a Schema) -> Self {
        SeedGenerator { cfg, schema }
    }

    pub fn production(&self, rng: &mut impl Rng) -> usize {
        WeightedIndex::new(self.cfg.grammar_weights)
            .expect("validated weights")
            .sample(rng)
            + 1
    }

    pub fn generate(&self, rng: &mut impl Rng) -> SqlQuery {
        let prod = self.production(rng);
        self.generate_production(prod, rng)
    }

    pub fn generate_production(&self, prod: usize, rng: &mut impl Rng) -> SqlQuery {
        match prod {
            1 => self.plain_block(false, rng),
            2 => self.plain_block(true, rng),
            3 => self.aggregate_block(false, rng),
            4 => self.aggregate_block(true, rng),
            _ => self.set_operation(rng),
        }
    }

    fn columns_of(&self, tables: &[&TableSchema]) -> Vec<Col> {
        let qualify = tables.len() > 1;
        tables
            .iter()
            .flat_map(|t| {
                t.columns.iter().map(move |c| Col {
                    reference: if qualify {
                        ColumnRef::qualified(&t.name, &c.name)
                    } else {
                        ColumnRef::bare(&c.name)
                    },
                    ty: c.ty,
                })
            })
            .collect()
    }

    fn pick_tables(&self, allow_many: bool, rng: &mut impl Rng) -> Vec<&'a TableSchema> {
        let all: Vec<&TableSchema> = self.schema.tables.iter().collect();
        let n = if allow_many && all.len() > 1 && rng.gen_bool(0.2) {
            2
        } else {
            1
        };
        let mut picked: Vec<&TableSchema> = all.choose_multiple(rng, n).copied().collect();
        picked.sort_by(|a, b| a.name.cmp(&b.name));
        picked
    }

    fn pick_columns(&self, cols: &[Col], rng: &mut impl Rng) -> Vec<Col> {
        let n = rng.gen_range(1..=cols.len().min(3));
        cols.choose_multiple(rng, n).cloned().collect()
    }

    fn constant(&self, ty: SqlType, rng: &mut impl Rng) -> Literal {
        if rng.gen_bool(0.05) {
            return Literal::Null;
        }
        Literal::from_value(value_pool(ty).choose(rng).unwrap())
    }

    fn atom(&self, cols: &[Col], rng: &mut impl Rng) -> Predicate {
        let roll: f64 = rng.gen();
        if roll < 0.03 {
            return Predicate::Literal(
                *[TruthLiteral::True, TruthLiteral::False, TruthLiteral::Null]
                    .choose(rng)
                    .unwrap(),
            );
        }
        let c = cols.choose(rng).unwrap();
        let op = *CmpOp::ALL.choose(rng).unwrap();
        let compatible: Vec<&Col> = cols
            .iter()
            .filter(|o| o.ty.is_numeric() == c.ty.is_numeric() && o.reference != c.reference)
            .collect();
        let rhs = if roll < 0.2 && !compatible.is_empty() {
            Term::Column(compatible.choose(rng).unwrap().reference.clone())
        } else {
            Term::Const(self.constant(c.ty, rng))
        };
        Predicate::cmp(Term::Column(c.reference.clone()), op, rhs)
    }

    fn predicate(&self, cols: &[Col], depth: u32, rng: &mut impl Rng) -> Predicate {
        if depth == 0 || rng.gen_bool(0.6) {
            return self.atom(cols, rng);
        }
        match rng.gen_range(0..5) {
            0 | 1 => Predicate::and(
                self.predicate(cols, depth - 1, rng),
                self.predicate(cols, depth - 1, rng),
            ),
            2 | 3 => Predicate::or(
                self.predicate(cols, depth - 1, rng),
                self.predicate(cols, depth - 1, rng),
            ),
            _ => Predicate::not(self.predicate(cols, depth - 1, rng)),
        }
    }

    /// Productions 1 and 2, with optional DISTINCT or a plain GROUP BY.
    fn plain_block(&self, with_where: bool, rng: &mut impl Rng) -> SqlQuery {
        let tables = self.pick_tables(true, rng);
        let cols = self.columns_of(&tables);
        let picked = self.pick_columns(&cols, rng);
        let mut q = SqlQuery {
            select: picked.iter().map(|c| SelectItem::Column(c.reference.clone())).collect(),
            distinct: false,
            from: tables.iter().map(|t| t.name.clone()).collect(),
            where_pred: None,
            group_by: None,
            having: None,
            set_op: None,
        };
        if with_where || rng.gen_bool(0.1) {
            q.where_pred = Some(self.predicate(&cols, 2, rng));
        }
        let roll: f64 = rng.gen();
        if roll < 0.2 {
            q.distinct = true;
        } else if roll < 0.3 && tables.len() == 1 {
            let mut keys: Vec<ColumnRef> = picked.iter().map(|c| c.reference.clone()).collect();
            keys.dedup();
            q.group_by = Some(keys);
            if rng.gen_bool(0.3) {
                q.having = Some(self.predicate(&picked, 1, rng));
            }
        }
        q
    }

    fn aggregate(&self, cols: &[Col], rng: &mut impl Rng) -> AggCall {
        let numeric: Vec<&Col> = cols.iter().filter(|c| c.ty.is_numeric()).collect();
        let func = *AggFunc::ALL.choose(rng).unwrap();
        let arg = match func {
            AggFunc::Count if rng.gen_bool(0.4) => AggArg::Star,
            AggFunc::Count | AggFunc::Min | AggFunc::Max => AggArg::Column(cols.choose(rng).unwrap().reference.clone()),
            AggFunc::Sum | AggFunc::Avg => match numeric.choose(rng) {
                Some(c) => AggArg::Column(c.reference.clone()),
                None => {
                    return AggCall {
                        func: AggFunc::Count,
                        arg: AggArg::Star,
                    }
                }
            },
        };
        AggCall { func, arg }
    }

    /// Productions 3 and 4; grouped queries read a single table.
    fn aggregate_block(&self, grouped: bool, rng: &mut impl Rng) -> SqlQuery {
        let tables = self.pick_tables(false, rng);
        let cols = self.columns_of(&tables);
        let mut select = Vec::new();
        let mut group_by = None;
        let mut keys: Vec<Col> = Vec::new();
        if grouped {
            keys = self.pick_columns(&cols, rng);
            group_by = Some(keys.iter().map(|c| c.reference.clone()).collect::<Vec<_>>());
            let shown = rng.gen_range(0..=keys.len());
            select.extend(keys[..shown].iter().map(|c| SelectItem::Column(c.reference.clone())));
        }
        for _ in 0..rng.gen_range(1..=2) {
            select.push(SelectItem::Agg(self.aggregate(&cols, rng)));
        }
        let mut q = SqlQuery {
            select,
            distinct: grouped && rng.gen_bool(0.05),
            from: tables.iter().map(|t| t.name.clone()).collect(),
            where_pred: None,
            group_by,
            having: None,
            set_op: None,
        };
        if rng.gen_bool(0.3) {
            q.where_pred = Some(self.predicate(&cols, 1, rng));
        }
        if grouped && rng.gen_bool(0.25) {
            q.having = Some(self.predicate(&keys, 1, rng));
        }
        q
    }

    /// A block shaped like `head` (same output types) over a random table.
    fn matching_block(&self, types: &[SqlType], rng: &mut impl Rng) -> Option<SqlQuery> {
        let mut tables: Vec<&TableSchema> = self.schema.tables.iter().collect();
        tables.shuffle(rng);
        for t in tables {
            let cols = self.columns_of(&[t]);
            let mut select = Vec::new();
            for ty in types {
                let same: Vec<&Col> = cols.iter().filter(|c| c.ty == *ty).collect();
                match same.choose(rng) {
                    Some(c) => select.push(SelectItem::Column(c.reference.clone())),
                    None => break,
                }
            }
            if select.len() != types.len() {
                continue;
            }
            let mut q = SqlQuery::simple(select, t.name.clone());
            if rng.gen_bool(0.5) {
                q.where_pred = Some(self.predicate(&cols, 1, rng));
            }
            q.distinct = rng.gen_bool(0.1);
            return Some(q);
        }
        None
    }

    /// Production 5: `B1 op B2 [op B3]` over plain blocks of matching types.
    fn set_operation(&self, rng: &mut impl Rng) -> SqlQuery {
        let tables = self.pick_tables(false, rng);
        let cols = self.columns_of(&tables);
        let picked = self.pick_columns(&cols, rng);
        let types: Vec<SqlType> = picked.iter().map(|c| c.ty).collect();
        let mut head = SqlQuery::simple(
            picked.iter().map(|c| SelectItem::Column(c.reference.clone())).collect(),
            tables[0].name.clone(),
        );
        if rng.gen_bool(0.5) {
            head.where_pred = Some(self.predicate(&cols, 1, rng));
        }
        let n_more = if rng.gen_bool(0.25) { 2 } else { 1 };
        let mut blocks = vec![head];
        for _ in 0..n_more {
            // the head's own table always matches, so this cannot fail
            blocks.push(
                self.matching_block(&types, rng)
                    .expect("head table matches its own types"),
            );
        }
        let op = if rng.gen_bool(0.5) {
            SetOp::Union
        } else {
            SetOp::UnionAll
        };
        let mixed = rng.gen_bool(0.2);
        let mut tail: Option<SqlQuery> = None;
        while let Some(mut b) = blocks.pop() {
            if let Some(t) = tail.take() {
                let this_op = if mixed && rng.gen_bool(0.5) {
                    if op == SetOp::Union {
                        SetOp::UnionAll
                    } else {
                        SetOp::Union
                    }
                } else {
                    op
                };
                b.set_op = Some((this_op, Box::new(t)));
            }
            tail = Some(b);
        }
        tail.unwrap()
    }
}

/// One seed drawn with the configured production weights.
pub fn generate_seed(cfg: &GeneratorConfig, schema: &Schema, rng: &mut impl Rng) -> SqlQuery {
    SeedGenerator::new(cfg, schema).generate(rng)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sql::{parse, validate};

    #[test]
    fn weights_parse() {
        let d = GeneratorConfig::default().grammar_weights;
        assert_eq!(parse_grammar_weights("prod4=1,others=0", d).unwrap(), [0, 0, 0, 1, 0]);
        assert_eq!(parse_grammar_weights("prod1=9", d).unwrap()[0], 9);
        assert!(parse_grammar_weights("prod9=1", d).is_err());
        assert!(parse_grammar_weights("others=0", d).is_err());
    }

    #[test]
    fn database_has_forced_duplicate_and_null() {
        let cfg = GeneratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (db, script) = generate_database(&cfg, &mut rng);
            let t0 = db.table("t0").unwrap();
            assert!(t0.rows.iter().any(|(row, m)| m >= 2 && row.iter().any(Value::is_null)));
            assert_eq!(Database::from_script(&script).unwrap(), db);
        }
    }

    #[test]
    fn empty_row_range_gives_empty_tables() {
        let cfg = GeneratorConfig {
            row_count: 0..=0,
            ..GeneratorConfig::default()
        };
        let (db, _) = generate_database(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(db.tables.iter().all(|t| t.rows.is_empty()));
    }

    #[test]
    fn seeds_validate_and_round_trip() {
        let cfg = GeneratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (db, _) = generate_database(&cfg, &mut rng);
            let schema = db.schema();
            for _ in 0..40 {
                let q = generate_seed(&cfg, &schema, &mut rng);
                assert_eq!(validate(&q, &schema), Ok(()), "{q}");
                assert_eq!(parse(&q.to_string()).unwrap(), q);
            }
        }
    }

    #[test]
    fn production_four_is_grouped() {
        let cfg = GeneratorConfig {
            grammar_weights: [0, 0, 0, 1, 0],
            ..GeneratorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (db, _) = generate_database(&cfg, &mut rng);
        for _ in 0..100 {
            let q = generate_seed(&cfg, &db.schema(), &mut rng);
            assert!(q.group_by.is_some() && q.has_aggregate() && q.set_op.is_none());
        }
    }
}
