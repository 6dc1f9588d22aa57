//! Relational-algebra IR over π (project), σ (filter), γ (aggregate),
//! δ (dedup), ∪ and ∪all, with the SQL lowering and the reverse remapping.
//!
//! A single SELECT block always lowers to the chain
//!
//! ```text
//! [Dedup *] Project [Filter..] [Dedup keys | Agg] [Filter..] Scan
//! ```
//!
//! where the filters below the grouping node come from WHERE (one per
//! top-level conjunct) and the ones above from HAVING. A plain
//! `SELECT DISTINCT cols` lowers to `Project cols / Dedup cols`, the same
//! shape as `GROUP BY cols`; that shared shape is what lets the remapper
//! produce both surface forms for one δ.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sql::{render_agg, render_predicate, AggCall, ColumnRef, Predicate, SelectItem, SetOp, SqlQuery};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgebraExpr {
    /// Base relation; several tables form their multiset cross product.
    Scan { tables: Vec<String> },
    /// π. Items are plain columns or references to aggregates computed below.
    Project {
        items: Vec<SelectItem>,
        child: Box<AlgebraExpr>,
    },
    /// σ
    Filter { pred: Predicate, child: Box<AlgebraExpr> },
    /// δ. `keys == None` collapses whole tuples; otherwise the output is the
    /// distinct key tuples.
    Dedup {
        keys: Option<Vec<ColumnRef>>,
        child: Box<AlgebraExpr>,
    },
    /// γ. Outputs one tuple per group: key values followed by aggregates.
    Agg {
        keys: Vec<ColumnRef>,
        aggs: Vec<AggCall>,
        child: Box<AlgebraExpr>,
    },
    Union {
        left: Box<AlgebraExpr>,
        right: Box<AlgebraExpr>,
    },
    UnionAll {
        left: Box<AlgebraExpr>,
        right: Box<AlgebraExpr>,
    },
}

/// Operator kinds, the unit of sensitivity classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Project,
    Filter,
    Dedup,
    Agg,
    Union,
    UnionAll,
}

impl AlgebraExpr {
    pub fn scan(table: impl Into<String>) -> Self {
        AlgebraExpr::Scan {
            tables: vec![table.into()],
        }
    }

    pub fn project(items: Vec<SelectItem>, child: AlgebraExpr) -> Self {
        AlgebraExpr::Project {
            items,
            child: Box::new(child),
        }
    }

    pub fn filter(pred: Predicate, child: AlgebraExpr) -> Self {
        AlgebraExpr::Filter {
            pred,
            child: Box::new(child),
        }
    }

    pub fn dedup(keys: Option<Vec<ColumnRef>>, child: AlgebraExpr) -> Self {
        AlgebraExpr::Dedup {
            keys,
            child: Box::new(child),
        }
    }

    pub fn agg(keys: Vec<ColumnRef>, aggs: Vec<AggCall>, child: AlgebraExpr) -> Self {
        AlgebraExpr::Agg {
            keys,
            aggs,
            child: Box::new(child),
        }
    }

    pub fn kind(&self) -> Option<OpKind> {
        Some(match self {
            AlgebraExpr::Scan { .. } => return None,
            AlgebraExpr::Project { .. } => OpKind::Project,
            AlgebraExpr::Filter { .. } => OpKind::Filter,
            AlgebraExpr::Dedup { .. } => OpKind::Dedup,
            AlgebraExpr::Agg { .. } => OpKind::Agg,
            AlgebraExpr::Union { .. } => OpKind::Union,
            AlgebraExpr::UnionAll { .. } => OpKind::UnionAll,
        })
    }

    pub fn children(&self) -> Vec<&AlgebraExpr> {
        match self {
            AlgebraExpr::Scan { .. } => vec![],
            AlgebraExpr::Project { child, .. }
            | AlgebraExpr::Filter { child, .. }
            | AlgebraExpr::Dedup { child, .. }
            | AlgebraExpr::Agg { child, .. } => vec![child],
            AlgebraExpr::Union { left, right } | AlgebraExpr::UnionAll { left, right } => vec![left, right],
        }
    }

    pub fn children_mut(&mut self) -> Vec<&mut AlgebraExpr> {
        match self {
            AlgebraExpr::Scan { .. } => vec![],
            AlgebraExpr::Project { child, .. }
            | AlgebraExpr::Filter { child, .. }
            | AlgebraExpr::Dedup { child, .. }
            | AlgebraExpr::Agg { child, .. } => vec![child],
            AlgebraExpr::Union { left, right } | AlgebraExpr::UnionAll { left, right } => vec![left, right],
        }
    }

    /// Pre-order list of every node.
    pub fn nodes(&self) -> Vec<&AlgebraExpr> {
        let mut out = vec![self];
        for c in self.children() {
            out.extend(c.nodes());
        }
        out
    }

    /// Node at a path of child indices from the root.
    pub fn at(&self, path: &[usize]) -> Option<&AlgebraExpr> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children().get(*i)?.at(rest),
        }
    }

    pub fn at_mut(&mut self, path: &[usize]) -> Option<&mut AlgebraExpr> {
        match path.split_first() {
            None => Some(self),
            Some((i, rest)) => self.children_mut().into_iter().nth(*i)?.at_mut(rest),
        }
    }

    /// Every node path, children before parents (post-order).
    pub fn paths_post_order(&self) -> Vec<Vec<usize>> {
        fn walk(e: &AlgebraExpr, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            for (i, c) in e.children().into_iter().enumerate() {
                prefix.push(i);
                walk(c, prefix, out);
                prefix.pop();
            }
            out.push(prefix.clone());
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Operator kinds in pre-order (Scan excluded).
    pub fn operators(&self) -> Vec<OpKind> {
        self.nodes().into_iter().filter_map(AlgebraExpr::kind).collect()
    }

    fn header(&self) -> String {
        let cols = |c: &[ColumnRef]| c.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ");
        match self {
            AlgebraExpr::Scan { tables } => format!("Scan {}", tables.join(" x ")),
            AlgebraExpr::Project { items, .. } => {
                let items: Vec<String> = items.iter().map(item_label).collect();
                format!("Project [{}]", items.join(", "))
            }
            AlgebraExpr::Filter { pred, .. } => format!("Filter ({})", render_predicate(pred)),
            AlgebraExpr::Dedup { keys: None, .. } => "Dedup [*]".to_string(),
            AlgebraExpr::Dedup { keys: Some(k), .. } => format!("Dedup [{}]", cols(k)),
            AlgebraExpr::Agg { keys, aggs, .. } => {
                let aggs: Vec<String> = aggs.iter().map(render_agg).collect();
                format!("Agg [{}] by [{}]", aggs.join(", "), cols(keys))
            }
            AlgebraExpr::Union { .. } => "Union".to_string(),
            AlgebraExpr::UnionAll { .. } => "UnionAll".to_string(),
        }
    }

    /// Debug dump: one operator per line, children indented two spaces.
    pub fn dump(&self) -> String {
        fn walk(e: &AlgebraExpr, depth: usize, out: &mut String) {
            out.push_str(&"  ".repeat(depth));
            out.push_str(&e.header());
            out.push('\n');
            for c in e.children() {
                walk(c, depth + 1, out);
            }
        }
        let mut out = String::new();
        walk(self, 0, &mut out);
        out
    }
}

impl fmt::Display for AlgebraExpr {
    /// Compact single-line form: `Project [a] / Dedup [a] / Scan t0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgebraExpr::Union { left, right } | AlgebraExpr::UnionAll { left, right } => {
                write!(f, "{} ({}) ({})", self.header(), left, right)
            }
            other => {
                f.write_str(&other.header())?;
                if let Some(c) = other.children().first() {
                    write!(f, " / {c}")?;
                }
                Ok(())
            }
        }
    }
}

fn item_label(item: &SelectItem) -> String {
    match item {
        SelectItem::Column(c) => c.to_string(),
        SelectItem::Agg(a) => render_agg(a),
    }
}

// ---------------------------------------------------------------------------
// Typing

/// Output type of an algebra expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelType {
    /// τ_b
    Multiset,
    /// τ_s
    Set,
    /// τ_v: one value tuple per group
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("type error at {node}: expected {expected}, found {found}")]
pub struct TypeError {
    pub node: String,
    pub expected: String,
    pub found: String,
}

/// Non-fatal typing observations, e.g. δ applied to an input that is
/// already a set (treated as the identity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lint {
    pub node: String,
    pub message: String,
}

/// Output columns of a node as far as they are known without a schema.
#[derive(Debug, Clone, PartialEq)]
enum Outputs {
    /// Columns of base tables; anything may be referenced.
    Open,
    Cols(Vec<SelectItem>),
}

impl Outputs {
    fn has_column(&self, c: &ColumnRef) -> bool {
        match self {
            Outputs::Open => true,
            Outputs::Cols(cols) => cols
                .iter()
                .any(|o| matches!(o, SelectItem::Column(oc) if oc.same_column(c))),
        }
    }

    fn has_item(&self, item: &SelectItem) -> bool {
        match (self, item) {
            (_, SelectItem::Column(c)) => self.has_column(c),
            (Outputs::Open, SelectItem::Agg(_)) => false,
            (Outputs::Cols(cols), SelectItem::Agg(a)) => {
                cols.iter().any(|o| matches!(o, SelectItem::Agg(oa) if oa == a))
            }
        }
    }
}

/// Output type of the root by the typing judgments; δ over a set input is
/// accepted as the identity and reported through [`typecheck_with_lints`].
pub fn typecheck(e: &AlgebraExpr) -> Result<RelType, TypeError> {
    typecheck_with_lints(e).map(|(t, _)| t)
}

pub fn typecheck_with_lints(e: &AlgebraExpr) -> Result<(RelType, Vec<Lint>), TypeError> {
    let mut lints = Vec::new();
    let (t, _) = check(e, &mut lints)?;
    Ok((t, lints))
}

fn check(e: &AlgebraExpr, lints: &mut Vec<Lint>) -> Result<(RelType, Outputs), TypeError> {
    let err = |expected: &str, found: String| TypeError {
        node: e.header(),
        expected: expected.to_string(),
        found,
    };
    match e {
        AlgebraExpr::Scan { tables } => {
            if tables.is_empty() {
                return Err(err("at least one table", "none".into()));
            }
            Ok((RelType::Multiset, Outputs::Open))
        }
        AlgebraExpr::Project { items, child } => {
            let (t, out) = check(child, lints)?;
            if items.is_empty() {
                return Err(err("non-empty projection", "empty list".into()));
            }
            for item in items {
                if !out.has_item(item) {
                    return Err(err("columns of the child", item_label(item)));
                }
            }
            Ok((t, Outputs::Cols(items.clone())))
        }
        AlgebraExpr::Filter { pred, child } => {
            let (t, out) = check(child, lints)?;
            for c in pred.columns() {
                if !out.has_column(c) {
                    return Err(err("columns of the child", c.to_string()));
                }
            }
            Ok((t, out))
        }
        AlgebraExpr::Dedup { keys, child } => {
            let (t, out) = check(child, lints)?;
            if t == RelType::Set {
                lints.push(Lint {
                    node: e.header(),
                    message: "dedup over a set input is the identity".into(),
                });
            }
            let out = match keys {
                None => out,
                Some(keys) => {
                    if keys.is_empty() {
                        return Err(err("non-empty key list", "empty list".into()));
                    }
                    for k in keys {
                        if !out.has_column(k) {
                            return Err(err("columns of the child", k.to_string()));
                        }
                    }
                    Outputs::Cols(keys.iter().cloned().map(SelectItem::Column).collect())
                }
            };
            Ok((RelType::Set, out))
        }
        AlgebraExpr::Agg { keys, aggs, child } => {
            let (_, out) = check(child, lints)?;
            if aggs.is_empty() {
                return Err(err("at least one aggregate", "none".into()));
            }
            for k in keys {
                if !out.has_column(k) {
                    return Err(err("columns of the child", k.to_string()));
                }
            }
            for a in aggs {
                if let crate::sql::AggArg::Column(c) = &a.arg {
                    if !out.has_column(c) {
                        return Err(err("columns of the child", c.to_string()));
                    }
                }
            }
            let mut cols: Vec<SelectItem> = keys.iter().cloned().map(SelectItem::Column).collect();
            cols.extend(aggs.iter().cloned().map(SelectItem::Agg));
            Ok((RelType::Value, Outputs::Cols(cols)))
        }
        AlgebraExpr::Union { left, right } | AlgebraExpr::UnionAll { left, right } => {
            let (_, lo) = check(left, lints)?;
            let (_, ro) = check(right, lints)?;
            if let (Outputs::Cols(l), Outputs::Cols(r)) = (&lo, &ro) {
                if l.len() != r.len() {
                    return Err(err(&format!("{} columns", l.len()), format!("{} columns", r.len())));
                }
            }
            let t = if matches!(e, AlgebraExpr::Union { .. }) {
                RelType::Set
            } else {
                RelType::Multiset
            };
            Ok((t, lo))
        }
    }
}

// ---------------------------------------------------------------------------
// Lowering

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoweringError {
    #[error("HAVING without grouping")]
    HavingWithoutGrouping,
    #[error("empty select list")]
    EmptySelect,
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Splits the top-level left-nested AND chain: `(p1 AND p2) AND p3` gives
/// `[p1, p2, p3]`. Right operands are kept whole so the split is reversible.
pub fn split_conjuncts(p: &Predicate) -> Vec<Predicate> {
    match p {
        Predicate::And(l, r) => {
            let mut out = split_conjuncts(l);
            out.push((**r).clone());
            out
        }
        other => vec![other.clone()],
    }
}

/// Inverse of [`split_conjuncts`].
pub fn join_conjuncts(parts: &[Predicate]) -> Option<Predicate> {
    let mut iter = parts.iter().cloned();
    let first = iter.next()?;
    Some(iter.fold(first, Predicate::and))
}

/// Lowers a query to the IR in SQL evaluation order. Column references are
/// kept exactly as written.
pub fn lower(q: &SqlQuery) -> Result<AlgebraExpr, LoweringError> {
    let e = lower_query(q)?;
    typecheck(&e)?;
    Ok(e)
}

fn lower_query(q: &SqlQuery) -> Result<AlgebraExpr, LoweringError> {
    let head = lower_block(q)?;
    Ok(match &q.set_op {
        None => head,
        Some((op, rest)) => {
            let right = Box::new(lower_query(rest)?);
            match op {
                SetOp::Union => AlgebraExpr::Union {
                    left: Box::new(head),
                    right,
                },
                SetOp::UnionAll => AlgebraExpr::UnionAll {
                    left: Box::new(head),
                    right,
                },
            }
        }
    })
}

fn lower_block(q: &SqlQuery) -> Result<AlgebraExpr, LoweringError> {
    if q.select.is_empty() {
        return Err(LoweringError::EmptySelect);
    }
    let mut e = AlgebraExpr::Scan { tables: q.from.clone() };
    if let Some(p) = &q.where_pred {
        for c in split_conjuncts(p) {
            e = AlgebraExpr::filter(c, e);
        }
    }
    if q.is_grouped() {
        let keys = q.group_by.clone().unwrap_or_default();
        if q.has_aggregate() {
            let mut aggs: Vec<AggCall> = Vec::new();
            for item in &q.select {
                if let SelectItem::Agg(a) = item {
                    if !aggs.contains(a) {
                        aggs.push(a.clone());
                    }
                }
            }
            e = AlgebraExpr::agg(keys, aggs, e);
        } else {
            e = AlgebraExpr::dedup(Some(keys), e);
        }
        if let Some(h) = &q.having {
            for c in split_conjuncts(h) {
                e = AlgebraExpr::filter(c, e);
            }
        }
        e = AlgebraExpr::project(q.select.clone(), e);
        if q.distinct {
            e = AlgebraExpr::dedup(None, e);
        }
    } else {
        if q.having.is_some() {
            return Err(LoweringError::HavingWithoutGrouping);
        }
        if q.distinct {
            e = AlgebraExpr::dedup(Some(distinct_columns(&q.select)), e);
        }
        e = AlgebraExpr::project(q.select.clone(), e);
    }
    Ok(e)
}

/// Plain select columns in first-occurrence order, duplicates removed.
pub fn distinct_columns(items: &[SelectItem]) -> Vec<ColumnRef> {
    let mut out: Vec<ColumnRef> = Vec::new();
    for item in items {
        if let SelectItem::Column(c) = item {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Remapping

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RemapError {
    #[error("filter above grouping references non-grouped column {0}")]
    NonGroupedFilter(String),
    #[error("no SQL form for {0}")]
    Unsupported(String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Every surface realization of `e`: each δ as DISTINCT or GROUP BY where
/// both are possible, each σ as WHERE below grouping and HAVING above it.
/// Every returned query lowers back to `e`.
pub fn remap_to_sql(e: &AlgebraExpr) -> Result<Vec<SqlQuery>, RemapError> {
    typecheck(e)?;
    remap_query(e)
}

fn remap_query(e: &AlgebraExpr) -> Result<Vec<SqlQuery>, RemapError> {
    let (op, left, right) = match e {
        AlgebraExpr::Union { left, right } => (SetOp::Union, left, right),
        AlgebraExpr::UnionAll { left, right } => (SetOp::UnionAll, left, right),
        block => return remap_block(block),
    };
    if matches!(**left, AlgebraExpr::Union { .. } | AlgebraExpr::UnionAll { .. }) {
        return Err(RemapError::Unsupported("set operation as a left operand".into()));
    }
    let heads = remap_block(left)?;
    let tails = remap_query(right)?;
    let mut out = Vec::with_capacity(heads.len() * tails.len());
    for h in &heads {
        for t in &tails {
            let mut q = h.clone();
            q.set_op = Some((op, Box::new(t.clone())));
            out.push(q);
        }
    }
    Ok(out)
}

fn collect_filters(mut e: &AlgebraExpr) -> (Vec<Predicate>, &AlgebraExpr) {
    // top-down order; callers reverse to get evaluation order
    let mut preds = Vec::new();
    while let AlgebraExpr::Filter { pred, child } = e {
        preds.push(pred.clone());
        e = child;
    }
    preds.reverse();
    (preds, e)
}

fn remap_block(e: &AlgebraExpr) -> Result<Vec<SqlQuery>, RemapError> {
    let unsupported = |what: &str| RemapError::Unsupported(what.to_string());
    let (distinct_top, proj) = match e {
        AlgebraExpr::Dedup { keys: None, child } => (true, &**child),
        other => (false, other),
    };
    let AlgebraExpr::Project { items, child } = proj else {
        return Err(unsupported(&format!("block without projection: {}", proj.header())));
    };
    let (above, node) = collect_filters(child);
    let base = |tables: &[String]| SqlQuery {
        select: items.clone(),
        distinct: distinct_top,
        from: tables.to_vec(),
        where_pred: None,
        group_by: None,
        having: None,
        set_op: None,
    };
    let scan_of = |n: &AlgebraExpr| -> Result<(Vec<Predicate>, Vec<String>), RemapError> {
        let (below, scan) = collect_filters(n);
        match scan {
            AlgebraExpr::Scan { tables } => Ok((below, tables.clone())),
            other => Err(unsupported(&format!("nested operator {}", other.header()))),
        }
    };
    let check_having = |keys: &[ColumnRef]| -> Result<(), RemapError> {
        for p in &above {
            for c in p.columns() {
                if !keys.iter().any(|k| k.same_column(c)) {
                    return Err(RemapError::NonGroupedFilter(c.to_string()));
                }
            }
        }
        Ok(())
    };

    match node {
        AlgebraExpr::Scan { tables } => {
            if distinct_top {
                return Err(unsupported("whole-row dedup over an ungrouped block"));
            }
            if items.iter().any(|i| matches!(i, SelectItem::Agg(_))) {
                return Err(unsupported("aggregate without grouping node"));
            }
            let mut q = base(tables);
            q.where_pred = join_conjuncts(&above);
            Ok(vec![q])
        }
        AlgebraExpr::Agg { keys, aggs, child } => {
            let (below, tables) = scan_of(child)?;
            check_having(keys)?;
            if keys.is_empty() && !above.is_empty() {
                return Err(unsupported("HAVING without GROUP BY keys"));
            }
            // the projection must use every aggregate, in first-use order
            let used: Vec<AggCall> = items
                .iter()
                .filter_map(|i| match i {
                    SelectItem::Agg(a) => Some(a.clone()),
                    _ => None,
                })
                .fold(Vec::new(), |mut acc, a| {
                    if !acc.contains(&a) {
                        acc.push(a);
                    }
                    acc
                });
            if &used != aggs {
                return Err(unsupported("aggregate list differs from projection"));
            }
            let mut q = base(&tables);
            q.where_pred = join_conjuncts(&below);
            q.group_by = if keys.is_empty() { None } else { Some(keys.clone()) };
            q.having = join_conjuncts(&above);
            Ok(vec![q])
        }
        AlgebraExpr::Dedup {
            keys: Some(keys),
            child,
        } => {
            let (below, tables) = scan_of(child)?;
            check_having(keys)?;
            if items.iter().any(|i| matches!(i, SelectItem::Agg(_))) {
                return Err(unsupported("aggregate over dedup"));
            }
            let mut out = Vec::new();
            let mut grouped = base(&tables);
            grouped.where_pred = join_conjuncts(&below);
            grouped.group_by = Some(keys.clone());
            grouped.having = join_conjuncts(&above);
            out.push(grouped);
            if !distinct_top && above.is_empty() && &distinct_columns(items) == keys {
                let mut d = base(&tables);
                d.distinct = true;
                d.where_pred = join_conjuncts(&below);
                out.push(d);
            }
            Ok(out)
        }
        other => Err(unsupported(&format!("nested operator {}", other.header()))),
    }
}
