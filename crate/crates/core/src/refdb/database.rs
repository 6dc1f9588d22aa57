use serde::{Deserialize, Serialize};

use super::{Decimal, Relation, SqlType, Value, DEC_SCALE};
use crate::sql::lexer::{tokenize, Tok};
use crate::sql::{ColumnSchema, Schema, TableSchema};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub schema: TableSchema,
    pub rows: Relation,
}

/// Named tables, each a multiset relation over its scheme.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("script parse error at byte {pos}: {message}")]
    Script { pos: usize, message: String },
    #[error("invalid fixture: {0}")]
    Fixture(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("duplicate table {0}")]
    DuplicateTable(String),
    #[error("duplicate column {column} in table {table}")]
    DuplicateColumn { table: String, column: String },
    #[error("table {table}: {message}")]
    BadRow { table: String, message: String },
}

impl Database {
    pub fn schema(&self) -> Schema {
        Schema {
            tables: self.tables.iter().map(|t| t.schema.clone()).collect(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.schema.name == name)
    }

    pub fn table_mut(&mut self, name: &str) -> Option<&mut Table> {
        self.tables.iter_mut().find(|t| t.schema.name == name)
    }

    pub fn create_table(&mut self, schema: TableSchema) -> Result<(), LoadError> {
        if self.table(&schema.name).is_some() {
            return Err(LoadError::DuplicateTable(schema.name));
        }
        for (i, c) in schema.columns.iter().enumerate() {
            if schema.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(LoadError::DuplicateColumn {
                    table: schema.name.clone(),
                    column: c.name.clone(),
                });
            }
        }
        let rows = Relation::new(schema.columns.iter().map(|c| c.name.clone()).collect());
        self.tables.push(Table { schema, rows });
        Ok(())
    }

    /// Inserts one row, coercing values to the column domains.
    pub fn insert(&mut self, table: &str, values: Vec<Value>, mult: u64) -> Result<(), LoadError> {
        let t = self
            .table_mut(table)
            .ok_or_else(|| LoadError::UnknownTable(table.to_string()))?;
        if values.len() != t.schema.columns.len() {
            return Err(LoadError::BadRow {
                table: table.to_string(),
                message: format!("expected {} values, got {}", t.schema.columns.len(), values.len()),
            });
        }
        let mut row = Vec::with_capacity(values.len());
        for (v, c) in values.into_iter().zip(&t.schema.columns) {
            row.push(coerce(v, c.ty).ok_or_else(|| LoadError::BadRow {
                table: table.to_string(),
                message: format!("value does not fit column {} ({})", c.name, c.ty.tag()),
            })?);
        }
        t.rows.insert(row, mult);
        Ok(())
    }

    /// CREATE TABLE / INSERT script that [`Database::from_script`] loads back
    /// to an identical database. Rows are emitted in sorted order with
    /// duplicates repeated.
    pub fn to_script(&self) -> String {
        let mut out = self.ddl();
        out.push_str(&self.inserts().join(""));
        out
    }

    pub fn ddl(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            let cols: Vec<String> = t
                .schema
                .columns
                .iter()
                .map(|c| format!("{} {}", c.name, c.ty.keyword()))
                .collect();
            out.push_str(&format!("CREATE TABLE {} ({});\n", t.schema.name, cols.join(", ")));
        }
        out
    }

    /// One INSERT statement per non-empty table.
    pub fn inserts(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.tables {
            let rows: Vec<String> = t
                .rows
                .expanded()
                .iter()
                .map(|r| {
                    let vals: Vec<String> = r.iter().map(Value::to_sql_literal).collect();
                    format!("({})", vals.join(", "))
                })
                .collect();
            if !rows.is_empty() {
                out.push(format!("INSERT INTO {} VALUES {};\n", t.schema.name, rows.join(", ")));
            }
        }
        out
    }

    /// Loads a script of `CREATE TABLE` and `INSERT INTO ... VALUES`
    /// statements. `DROP TABLE [IF EXISTS]` is accepted; `--` comments are
    /// skipped.
    pub fn from_script(script: &str) -> Result<Database, LoadError> {
        let mut db = Database::default();
        db.apply_script(script)?;
        Ok(db)
    }

    pub fn apply_script(&mut self, script: &str) -> Result<(), LoadError> {
        let cleaned: String = script
            .lines()
            .map(|l| if l.trim_start().starts_with("--") { "" } else { l })
            .collect::<Vec<_>>()
            .join("\n");
        let tokens = tokenize(&cleaned).map_err(|e| LoadError::Script {
            pos: e.position,
            message: e.to_string(),
        })?;
        let mut cur = Cursor { toks: &tokens, pos: 0 };
        loop {
            while cur.eat_sym(";") {}
            if cur.peek() == &Tok::Eof {
                return Ok(());
            }
            if cur.eat_word("create") {
                cur.expect_word("table")?;
                let name = cur.word()?;
                cur.expect_sym("(")?;
                let mut columns = Vec::new();
                loop {
                    let col = cur.word()?;
                    let ty = cur.column_type()?;
                    columns.push(ColumnSchema { name: col, ty });
                    if !cur.eat_sym(",") {
                        break;
                    }
                }
                cur.expect_sym(")")?;
                self.create_table(TableSchema { name, columns })?;
            } else if cur.eat_word("drop") {
                cur.expect_word("table")?;
                let if_exists = cur.eat_word("if");
                if if_exists {
                    cur.expect_word("exists")?;
                }
                let name = cur.word()?;
                let before = self.tables.len();
                self.tables.retain(|t| t.schema.name != name);
                if before == self.tables.len() && !if_exists {
                    return Err(LoadError::UnknownTable(name));
                }
            } else if cur.eat_word("insert") {
                cur.expect_word("into")?;
                let name = cur.word()?;
                cur.expect_word("values")?;
                loop {
                    cur.expect_sym("(")?;
                    let mut vals = Vec::new();
                    loop {
                        vals.push(cur.value()?);
                        if !cur.eat_sym(",") {
                            break;
                        }
                    }
                    cur.expect_sym(")")?;
                    self.insert(&name, vals, 1)?;
                    if !cur.eat_sym(",") {
                        break;
                    }
                }
            } else {
                return Err(cur.error("CREATE, DROP or INSERT"));
            }
            if cur.peek() != &Tok::Eof {
                cur.expect_sym(";")?;
            }
        }
    }

    /// JSON fixture: `{"tables": [{"name", "columns": [{"name", "type"}], "rows": [[...]]}]}`.
    pub fn from_json(text: &str) -> Result<Database, LoadError> {
        let fixture: Fixture = serde_json::from_str(text).map_err(|e| LoadError::Fixture(e.to_string()))?;
        let mut db = Database::default();
        for t in fixture.tables {
            let name = t.name.to_ascii_lowercase();
            let columns: Vec<ColumnSchema> = t
                .columns
                .into_iter()
                .map(|c| ColumnSchema {
                    name: c.name.to_ascii_lowercase(),
                    ty: c.ty,
                })
                .collect();
            db.create_table(TableSchema {
                name: name.clone(),
                columns: columns.clone(),
            })?;
            for row in t.rows {
                let vals = row
                    .iter()
                    .zip(&columns)
                    .map(|(v, c)| json_value(v, c.ty))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|m| LoadError::BadRow {
                        table: name.clone(),
                        message: m,
                    })?;
                if row.len() != columns.len() {
                    return Err(LoadError::BadRow {
                        table: name.clone(),
                        message: format!("expected {} values, got {}", columns.len(), row.len()),
                    });
                }
                db.insert(&name, vals, 1)?;
            }
        }
        Ok(db)
    }

    pub fn to_json(&self) -> String {
        let fixture = Fixture {
            tables: self
                .tables
                .iter()
                .map(|t| FixtureTable {
                    name: t.schema.name.clone(),
                    columns: t
                        .schema
                        .columns
                        .iter()
                        .map(|c| FixtureColumn {
                            name: c.name.clone(),
                            ty: c.ty,
                        })
                        .collect(),
                    rows: t
                        .rows
                        .expanded()
                        .into_iter()
                        .map(|r| {
                            r.into_iter()
                                .map(|v| match v {
                                    Value::Null => serde_json::Value::Null,
                                    Value::Int(i) => serde_json::Value::from(i),
                                    other => serde_json::Value::String(other.render().unwrap()),
                                })
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&fixture).expect("fixture serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct Fixture {
    tables: Vec<FixtureTable>,
}

#[derive(Serialize, Deserialize)]
struct FixtureTable {
    name: String,
    columns: Vec<FixtureColumn>,
    #[serde(default)]
    rows: Vec<Vec<serde_json::Value>>,
}

#[derive(Serialize, Deserialize)]
struct FixtureColumn {
    name: String,
    #[serde(rename = "type")]
    ty: SqlType,
}

fn json_value(v: &serde_json::Value, ty: SqlType) -> Result<Value, String> {
    use serde_json::Value as J;
    Ok(match (v, ty) {
        (J::Null, _) => Value::Null,
        (J::Number(n), SqlType::Int) => Value::Int(n.as_i64().ok_or_else(|| format!("{n} is not an integer"))?),
        (J::Number(n), SqlType::Dec) => {
            Value::Dec(Decimal::parse(&n.to_string()).ok_or_else(|| format!("{n} is not a plain decimal"))?)
        }
        (J::String(s), SqlType::Dec) => Value::Dec(Decimal::parse(s).ok_or_else(|| format!("{s} is not a decimal"))?),
        (J::String(s), SqlType::Int) => Value::Int(s.parse().map_err(|_| format!("{s} is not an integer"))?),
        (J::String(s), SqlType::Str) => Value::Str(s.clone()),
        (other, ty) => return Err(format!("{other} does not fit a {} column", ty.tag())),
    })
}

fn coerce(v: Value, ty: SqlType) -> Option<Value> {
    match (v, ty) {
        (Value::Null, _) => Some(Value::Null),
        (v @ Value::Int(_), SqlType::Int) => Some(v),
        // stored decimals share one scale so equal values render alike
        (Value::Int(i), SqlType::Dec) => Decimal::from_int(i).rescale(DEC_SCALE).map(Value::Dec),
        (Value::Dec(d), SqlType::Dec) => d.normalized().rescale(DEC_SCALE).map(Value::Dec),
        (v @ Value::Str(_), SqlType::Str) => Some(v),
        _ => None,
    }
}

struct Cursor<'a> {
    toks: &'a [crate::sql::lexer::Token],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn error(&self, expected: &str) -> LoadError {
        LoadError::Script {
            pos: self.toks[self.pos].pos,
            message: format!("expected {expected}, found {}", self.peek().describe()),
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Tok::Word(x) if x == w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), LoadError> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.error(&w.to_ascii_uppercase()))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(x) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), LoadError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.error(s))
        }
    }

    fn word(&mut self) -> Result<String, LoadError> {
        match self.peek() {
            Tok::Word(w) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn column_type(&mut self) -> Result<SqlType, LoadError> {
        let w = self.word()?;
        let ty = match w.as_str() {
            "int" | "integer" | "bigint" | "smallint" => SqlType::Int,
            "decimal" | "numeric" | "dec" => SqlType::Dec,
            "varchar" | "char" | "text" => SqlType::Str,
            _ => return Err(self.error("column type")),
        };
        // optional precision arguments
        if self.eat_sym("(") {
            while !self.eat_sym(")") {
                if self.peek() == &Tok::Eof {
                    return Err(self.error(")"));
                }
                self.pos += 1;
            }
        }
        Ok(ty)
    }

    fn value(&mut self) -> Result<Value, LoadError> {
        let v = match self.peek() {
            Tok::Number(n) if n.contains('.') => Value::Dec(Decimal::parse(n).ok_or_else(|| self.error("decimal"))?),
            Tok::Number(n) => match n.parse::<i64>() {
                Ok(i) => Value::Int(i),
                Err(_) => return Err(self.error("integer in range")),
            },
            Tok::Str(s) => Value::Str(s.clone()),
            Tok::Word(w) if w == "null" => Value::Null,
            _ => return Err(self.error("literal")),
        };
        self.pos += 1;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCRIPT: &str = "CREATE TABLE t0 (a INT, b DECIMAL(20,6), s VARCHAR(32));
        -- comment line
        INSERT INTO t0 VALUES (1, 0.0005, 'x'), (1, 0.0005, 'x'), (NULL, -2.5, 'it''s');
        CREATE TABLE t1 (a INT);";

    #[test]
    fn script_loads_multiset() {
        let db = Database::from_script(SCRIPT).unwrap();
        let t0 = db.table("t0").unwrap();
        assert_eq!(t0.rows.len(), 3);
        assert_eq!(t0.rows.distinct_len(), 2);
        assert!(db.table("t1").unwrap().rows.is_empty());
    }

    #[test]
    fn script_round_trips() {
        let db = Database::from_script(SCRIPT).unwrap();
        let again = Database::from_script(&db.to_script()).unwrap();
        assert_eq!(db, again);
        assert_eq!(db.to_script(), again.to_script());
    }

    #[test]
    fn json_fixture_round_trips() {
        let db = Database::from_script(SCRIPT).unwrap();
        let again = Database::from_json(&db.to_json()).unwrap();
        assert_eq!(db, again);
    }

    #[test]
    fn json_fixture_parses_documented_shape() {
        let db = Database::from_json(
            r#"{"tables": [{"name": "t0", "columns": [{"name": "a", "type": "int"}, {"name": "c0", "type": "dec"}],
                "rows": [[1, 0.0005], [null, "0.001"]]}]}"#,
        )
        .unwrap();
        let t0 = db.table("t0").unwrap();
        assert_eq!(
            t0.rows.multiplicity(&[Value::Int(1), Value::Dec(Decimal::new(5, 4))]),
            1
        );
        assert_eq!(t0.rows.multiplicity(&[Value::Null, Value::Dec(Decimal::new(1, 3))]), 1);
    }

    #[test]
    fn rejects_bad_rows_and_duplicates() {
        assert!(matches!(
            Database::from_script("CREATE TABLE t (a INT); INSERT INTO t VALUES ('x');"),
            Err(LoadError::BadRow { .. })
        ));
        assert!(matches!(
            Database::from_script("CREATE TABLE t (a INT, a INT);"),
            Err(LoadError::DuplicateColumn { .. })
        ));
        assert!(matches!(
            Database::from_script("CREATE TABLE t (a INT); CREATE TABLE t (b INT);"),
            Err(LoadError::DuplicateTable(_))
        ));
        assert!(matches!(
            Database::from_script("INSERT INTO nope VALUES (1);"),
            Err(LoadError::UnknownTable(_))
        ));
    }

    #[test]
    fn drop_table_removes() {
        let mut db = Database::from_script(SCRIPT).unwrap();
        db.apply_script("DROP TABLE t1; DROP TABLE IF EXISTS t9;").unwrap();
        assert!(db.table("t1").is_none());
        assert!(db.apply_script("DROP TABLE t9").is_err());
    }
}
