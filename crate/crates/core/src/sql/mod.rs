//! Surface SQL for the supported subset: single-block SELECT with optional
//! DISTINCT, WHERE, GROUP BY, HAVING, aggregate calls, and UNION / UNION ALL.

pub(crate) mod lexer;
mod parser;
mod render;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::refdb::{Decimal, Value};

pub use parser::{parse, SyntaxError};
pub use validate::{qualify, validate, ColumnSchema, Schema, SemanticError, TableSchema};

/// A column reference, optionally qualified by its table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn bare(column: impl Into<String>) -> Self {
        ColumnRef {
            table: None,
            column: column.into(),
        }
    }

    pub fn qualified(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: Some(table.into()),
            column: column.into(),
        }
    }

    /// Same column regardless of qualification. Only meaningful for
    /// single-table scopes.
    pub fn same_column(&self, other: &ColumnRef) -> bool {
        self.column == other.column
            && match (&self.table, &other.table) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

/// Constant literal. Equality is structural, unlike [`Value`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Dec(Decimal),
    Str(String),
    Null,
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Int(v) => Value::Int(*v),
            Literal::Dec(d) => Value::Dec(*d),
            Literal::Str(s) => Value::Str(s.clone()),
            Literal::Null => Value::Null,
        }
    }

    pub fn from_value(v: &Value) -> Self {
        match v {
            Value::Int(v) => Literal::Int(*v),
            // scale-0 decimals would render as integers
            Value::Dec(d) if d.scale == 0 => match i64::try_from(d.mantissa) {
                Ok(v) => Literal::Int(v),
                Err(_) => Literal::Dec(Decimal::new(d.mantissa * 10, 1)),
            },
            Value::Dec(d) => Literal::Dec(*d),
            Value::Str(s) => Literal::Str(s.clone()),
            Value::Null => Literal::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Column(ColumnRef),
    Const(Literal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TruthLiteral {
    True,
    False,
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    Literal(TruthLiteral),
    Cmp(Term, CmpOp, Term),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn cmp(l: Term, op: CmpOp, r: Term) -> Self {
        Predicate::Cmp(l, op, r)
    }

    pub fn and(l: Predicate, r: Predicate) -> Self {
        Predicate::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Predicate, r: Predicate) -> Self {
        Predicate::Or(Box::new(l), Box::new(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(p: Predicate) -> Self {
        Predicate::Not(Box::new(p))
    }

    /// Column references in left-to-right order.
    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a ColumnRef>) {
        match self {
            Predicate::Literal(_) => {}
            Predicate::Cmp(l, _, r) => {
                for t in [l, r] {
                    if let Term::Column(c) = t {
                        out.push(c);
                    }
                }
            }
            Predicate::And(l, r) | Predicate::Or(l, r) => {
                l.collect_columns(out);
                r.collect_columns(out);
            }
            Predicate::Not(p) => p.collect_columns(out),
        }
    }

    /// Constants in left-to-right order.
    pub fn constants(&self) -> Vec<&Literal> {
        let mut out = Vec::new();
        self.visit_terms(&mut |t| {
            if let Term::Const(l) = t {
                out.push(l)
            }
        });
        out
    }

    fn visit_terms<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        match self {
            Predicate::Literal(_) => {}
            Predicate::Cmp(l, _, r) => {
                f(l);
                f(r);
            }
            Predicate::And(l, r) | Predicate::Or(l, r) => {
                l.visit_terms(f);
                r.visit_terms(f);
            }
            Predicate::Not(p) => p.visit_terms(f),
        }
    }

    pub fn map_columns(&self, f: &impl Fn(&ColumnRef) -> ColumnRef) -> Predicate {
        let term = |t: &Term| match t {
            Term::Column(c) => Term::Column(f(c)),
            other => other.clone(),
        };
        match self {
            Predicate::Literal(l) => Predicate::Literal(*l),
            Predicate::Cmp(l, op, r) => Predicate::Cmp(term(l), *op, term(r)),
            Predicate::And(l, r) => Predicate::and(l.map_columns(f), r.map_columns(f)),
            Predicate::Or(l, r) => Predicate::or(l.map_columns(f), r.map_columns(f)),
            Predicate::Not(p) => Predicate::not(p.map_columns(f)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

impl AggFunc {
    pub const ALL: [AggFunc; 5] = [AggFunc::Count, AggFunc::Sum, AggFunc::Min, AggFunc::Max, AggFunc::Avg];

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
            AggFunc::Avg => "AVG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggArg {
    Star,
    Column(ColumnRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggCall {
    pub func: AggFunc,
    pub arg: AggArg,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectItem {
    Column(ColumnRef),
    Agg(AggCall),
}

impl SelectItem {
    pub fn map_columns(&self, f: &impl Fn(&ColumnRef) -> ColumnRef) -> SelectItem {
        match self {
            SelectItem::Column(c) => SelectItem::Column(f(c)),
            SelectItem::Agg(AggCall {
                func,
                arg: AggArg::Column(c),
            }) => SelectItem::Agg(AggCall {
                func: *func,
                arg: AggArg::Column(f(c)),
            }),
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetOp {
    Union,
    UnionAll,
}

impl SetOp {
    pub fn keyword(self) -> &'static str {
        match self {
            SetOp::Union => "UNION",
            SetOp::UnionAll => "UNION ALL",
        }
    }
}

/// One query of the supported subset. A set operation chains to the right:
/// `a UNION b UNION ALL c` is `a UNION (b UNION ALL c)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SqlQuery {
    pub select: Vec<SelectItem>,
    pub distinct: bool,
    pub from: Vec<String>,
    pub where_pred: Option<Predicate>,
    pub group_by: Option<Vec<ColumnRef>>,
    pub having: Option<Predicate>,
    pub set_op: Option<(SetOp, Box<SqlQuery>)>,
}

impl SqlQuery {
    pub fn simple(select: Vec<SelectItem>, table: impl Into<String>) -> Self {
        SqlQuery {
            select,
            distinct: false,
            from: vec![table.into()],
            where_pred: None,
            group_by: None,
            having: None,
            set_op: None,
        }
    }

    pub fn has_aggregate(&self) -> bool {
        self.select.iter().any(|s| matches!(s, SelectItem::Agg(_)))
    }

    /// True if this block (ignoring any set-op tail) groups its input.
    pub fn is_grouped(&self) -> bool {
        self.group_by.is_some() || self.has_aggregate()
    }

    /// The SELECT block without its set-op tail.
    pub fn head(&self) -> SqlQuery {
        SqlQuery {
            set_op: None,
            ..self.clone()
        }
    }

    /// Applies `f` to every column reference of this block and its tail.
    pub fn map_columns(&self, f: &impl Fn(&ColumnRef) -> ColumnRef) -> SqlQuery {
        SqlQuery {
            select: self.select.iter().map(|s| s.map_columns(f)).collect(),
            distinct: self.distinct,
            from: self.from.clone(),
            where_pred: self.where_pred.as_ref().map(|p| p.map_columns(f)),
            group_by: self.group_by.as_ref().map(|g| g.iter().map(f).collect()),
            having: self.having.as_ref().map(|p| p.map_columns(f)),
            set_op: self.set_op.as_ref().map(|(op, r)| (*op, Box::new(r.map_columns(f)))),
        }
    }

    /// Every constant literal in the query, tail included.
    pub fn constants(&self) -> Vec<Literal> {
        let mut out: Vec<Literal> = Vec::new();
        for p in [&self.where_pred, &self.having].into_iter().flatten() {
            out.extend(p.constants().into_iter().cloned());
        }
        if let Some((_, r)) = &self.set_op {
            out.extend(r.constants());
        }
        out
    }

    /// Every table named in FROM clauses, tail included.
    pub fn tables(&self) -> Vec<String> {
        let mut out = self.from.clone();
        if let Some((_, r)) = &self.set_op {
            for t in r.tables() {
                if !out.contains(&t) {
                    out.push(t);
                }
            }
        }
        out
    }
}

impl fmt::Display for SqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render::render(self))
    }
}

pub use render::{render, render_agg, render_predicate};
