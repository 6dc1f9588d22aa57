use std::fmt;

use serde::{Deserialize, Serialize};

use super::*;
use crate::refdb::SqlType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SqlType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSchema>,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableSchema>,
}

impl Schema {
    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SemanticError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("ambiguous column {0}")]
    AmbiguousColumn(String),
    #[error("table {0} listed twice in FROM")]
    DuplicateTable(String),
    #[error("column {0} is neither grouped nor aggregated")]
    NonGroupedColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("grouped queries must read a single table")]
    GroupedMultiTable,
    #[error("set operation arity mismatch: {left} vs {right}")]
    ArityMismatch { left: usize, right: usize },
}

impl SemanticError {
    /// Stable error code shared with the executor.
    pub fn code(&self) -> &'static str {
        match self {
            SemanticError::UnknownTable(_) => "UNKNOWN_TABLE",
            SemanticError::UnknownColumn(_) => "UNKNOWN_COLUMN",
            SemanticError::AmbiguousColumn(_) => "AMBIGUOUS_COLUMN",
            SemanticError::DuplicateTable(_) => "DUPLICATE_TABLE",
            SemanticError::NonGroupedColumn(_) => "NON_GROUPED_COLUMN",
            SemanticError::TypeMismatch(_) => "TYPE_MISMATCH",
            SemanticError::GroupedMultiTable => "UNSUPPORTED",
            SemanticError::ArityMismatch { .. } => "ARITY_MISMATCH",
        }
    }
}

/// Checks `q` against `schema`. On success every column resolves, grouping
/// rules hold and all comparisons are between compatible types.
pub fn validate(q: &SqlQuery, schema: &Schema) -> Result<(), Vec<SemanticError>> {
    qualify(q, schema).map(|_| ())
}

/// Validates and returns a copy with every column reference table-qualified.
pub fn qualify(q: &SqlQuery, schema: &Schema) -> Result<SqlQuery, Vec<SemanticError>> {
    let mut errors = Vec::new();
    let out = qualify_block(q, schema, &mut errors);
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// Output column types of a validated query (`None` = unknown/any).
pub(crate) fn output_types(q: &SqlQuery, schema: &Schema) -> Vec<Option<SqlType>> {
    let scope = Scope::new(&q.from, schema);
    q.select
        .iter()
        .map(|item| match item {
            SelectItem::Column(c) => scope.resolve(c).ok().map(|(_, t)| t),
            SelectItem::Agg(call) => match (call.func, &call.arg) {
                (AggFunc::Count, _) => Some(SqlType::Int),
                (AggFunc::Avg, _) => Some(SqlType::Dec),
                (_, AggArg::Column(c)) => scope.resolve(c).ok().map(|(_, t)| t),
                (_, AggArg::Star) => None,
            },
        })
        .collect()
}

struct Scope<'a> {
    tables: Vec<&'a TableSchema>,
}

impl<'a> Scope<'a> {
    fn new(from: &[String], schema: &'a Schema) -> Self {
        Scope {
            tables: from.iter().filter_map(|t| schema.table(t)).collect(),
        }
    }

    fn resolve(&self, c: &ColumnRef) -> Result<(ColumnRef, SqlType), SemanticError> {
        match &c.table {
            Some(t) => {
                let table = self
                    .tables
                    .iter()
                    .find(|ts| &ts.name == t)
                    .ok_or_else(|| SemanticError::UnknownColumn(c.to_string()))?;
                let col = table
                    .column(&c.column)
                    .ok_or_else(|| SemanticError::UnknownColumn(c.to_string()))?;
                Ok((c.clone(), col.ty))
            }
            None => {
                let mut hits = self
                    .tables
                    .iter()
                    .filter_map(|t| t.column(&c.column).map(|col| (t.name.clone(), col.ty)));
                match (hits.next(), hits.next()) {
                    (Some((t, ty)), None) => Ok((ColumnRef::qualified(t, &c.column), ty)),
                    (Some(_), Some(_)) => Err(SemanticError::AmbiguousColumn(c.to_string())),
                    (None, _) => Err(SemanticError::UnknownColumn(c.to_string())),
                }
            }
        }
    }
}

fn qualify_block(q: &SqlQuery, schema: &Schema, errors: &mut Vec<SemanticError>) -> SqlQuery {
    let before = errors.len();
    for (i, t) in q.from.iter().enumerate() {
        if schema.table(t).is_none() {
            errors.push(SemanticError::UnknownTable(t.clone()));
        } else if q.from[..i].contains(t) {
            errors.push(SemanticError::DuplicateTable(t.clone()));
        }
    }
    let scope = Scope::new(&q.from, schema);
    let tables_ok = errors.len() == before;
    let resolve = |c: &ColumnRef, errors: &mut Vec<SemanticError>| -> Option<(ColumnRef, SqlType)> {
        if !tables_ok {
            return None;
        }
        match scope.resolve(c) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(e);
                None
            }
        }
    };

    if q.is_grouped() && q.from.len() > 1 {
        errors.push(SemanticError::GroupedMultiTable);
    }

    let group_by: Option<Vec<ColumnRef>> = q.group_by.as_ref().map(|g| {
        g.iter()
            .map(|c| resolve(c, errors).map(|r| r.0).unwrap_or_else(|| c.clone()))
            .collect()
    });

    let mut select = Vec::with_capacity(q.select.len());
    for item in &q.select {
        match item {
            SelectItem::Column(c) => {
                let resolved = resolve(c, errors);
                if let Some((rc, _)) = &resolved {
                    if q.is_grouped() && !group_by.as_ref().is_some_and(|g| g.contains(rc)) {
                        errors.push(SemanticError::NonGroupedColumn(c.to_string()));
                    }
                }
                select.push(SelectItem::Column(resolved.map(|r| r.0).unwrap_or_else(|| c.clone())));
            }
            SelectItem::Agg(call) => {
                let arg = match &call.arg {
                    AggArg::Star => AggArg::Star,
                    AggArg::Column(c) => match resolve(c, errors) {
                        Some((rc, ty)) => {
                            if matches!(call.func, AggFunc::Sum | AggFunc::Avg) && ty == SqlType::Str {
                                errors.push(SemanticError::TypeMismatch(format!(
                                    "{}({c}) over a string column",
                                    call.func.name()
                                )));
                            }
                            AggArg::Column(rc)
                        }
                        None => AggArg::Column(c.clone()),
                    },
                };
                select.push(SelectItem::Agg(AggCall { func: call.func, arg }));
            }
        }
    }

    let check_pred = |p: &Predicate, errors: &mut Vec<SemanticError>, grouped_only: bool| -> Predicate {
        check_types(p, &scope, tables_ok, errors);
        let mapped = p.map_columns(&|c| scope.resolve(c).map(|r| r.0).unwrap_or_else(|_| c.clone()));
        if tables_ok {
            for c in p.columns() {
                match scope.resolve(c) {
                    Ok((rc, _)) => {
                        if grouped_only && !group_by.as_ref().is_some_and(|g| g.contains(&rc)) {
                            errors.push(SemanticError::NonGroupedColumn(c.to_string()));
                        }
                    }
                    Err(e) => errors.push(e),
                }
            }
        }
        mapped
    };
    let where_pred = q.where_pred.as_ref().map(|p| check_pred(p, errors, false));
    let having = q.having.as_ref().map(|p| check_pred(p, errors, true));

    let set_op = q.set_op.as_ref().map(|(op, rest)| {
        let rest_q = qualify_block(rest, schema, errors);
        if rest.select.len() != q.select.len() {
            errors.push(SemanticError::ArityMismatch {
                left: q.select.len(),
                right: rest.select.len(),
            });
        } else if errors.is_empty() {
            let lt = output_types(&q.head(), schema);
            let rt = output_types(rest, schema);
            for (l, r) in lt.iter().zip(&rt) {
                if let (Some(l), Some(r)) = (l, r) {
                    if l.is_numeric() != r.is_numeric() {
                        errors.push(SemanticError::TypeMismatch(format!(
                            "{} column unioned with {} column",
                            l.tag(),
                            r.tag()
                        )));
                    }
                }
            }
        }
        (*op, Box::new(rest_q))
    });

    SqlQuery {
        select,
        distinct: q.distinct,
        from: q.from.clone(),
        where_pred,
        group_by,
        having,
        set_op,
    }
}

fn check_types(p: &Predicate, scope: &Scope, tables_ok: bool, errors: &mut Vec<SemanticError>) {
    match p {
        Predicate::Literal(_) => {}
        Predicate::Cmp(l, _, r) => {
            let ty = |t: &Term| -> Option<SqlType> {
                match t {
                    Term::Column(c) if tables_ok => scope.resolve(c).ok().map(|r| r.1),
                    Term::Column(_) => None,
                    Term::Const(lit) => lit.to_value().sql_type(),
                }
            };
            if let (Some(a), Some(b)) = (ty(l), ty(r)) {
                if a.is_numeric() != b.is_numeric() {
                    errors.push(SemanticError::TypeMismatch(format!(
                        "cannot compare {} with {}",
                        a.tag(),
                        b.tag()
                    )));
                }
            }
        }
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            check_types(l, scope, tables_ok, errors);
            check_types(r, scope, tables_ok, errors);
        }
        Predicate::Not(inner) => check_types(inner, scope, tables_ok, errors),
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tables {
            let cols: Vec<String> = t.columns.iter().map(|c| format!("{} {}", c.name, c.ty.tag())).collect();
            writeln!(f, "{}({})", t.name, cols.join(", "))?;
        }
        Ok(())
    }
}
