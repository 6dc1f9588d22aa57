use rand::seq::SliceRandom;
use rand::RngCore;

use super::{PairingMode, RewriteRule, RuleEnv};
use crate::algebra::{distinct_columns, AlgebraExpr};
use crate::refdb::{Decimal, SqlType, Value};
use crate::sql::{CmpOp, ColumnRef, Literal, Predicate, SelectItem, Term};

/// Every shipped rule in catalog order.
pub fn default_catalog() -> Vec<RewriteRule> {
    vec![
        RewriteRule {
            id: "R1",
            name: "projection-pull-up",
            pairing: PairingMode::SeedVsMutant,
            matcher: r1_match,
            builder: r1_build,
        },
        RewriteRule {
            id: "R2",
            name: "commutative-selections",
            pairing: PairingMode::SeedVsMutant,
            matcher: r2_match,
            builder: r2_build,
        },
        RewriteRule {
            id: "R3",
            name: "cascade-of-projection",
            pairing: PairingMode::SeedVsMutant,
            matcher: r3_match,
            builder: r3_build,
        },
        RewriteRule {
            id: "R4",
            name: "commutative-union",
            pairing: PairingMode::SeedVsMutant,
            matcher: r4_match,
            builder: r4_build,
        },
        RewriteRule {
            id: "R5",
            name: "dedup-insertion",
            pairing: PairingMode::MutantVsMutant,
            matcher: r5_match,
            builder: r5_build,
        },
        RewriteRule {
            id: "R6",
            name: "grouped-filter-insertion",
            pairing: PairingMode::MutantVsMutant,
            matcher: r6_match,
            builder: r6_build,
        },
        RewriteRule {
            id: "R7",
            name: "dedup-filter-commutation",
            pairing: PairingMode::SeedVsMutant,
            matcher: r7_match,
            builder: r7_build,
        },
    ]
}

fn is_set_op(e: &AlgebraExpr) -> bool {
    matches!(e, AlgebraExpr::Union { .. } | AlgebraExpr::UnionAll { .. })
}

/// Tables of the block whose operator chain contains `e`.
fn block_tables(e: &AlgebraExpr) -> Option<&[String]> {
    let mut cur = e;
    loop {
        match cur {
            AlgebraExpr::Scan { tables } => return Some(tables),
            AlgebraExpr::Union { .. } | AlgebraExpr::UnionAll { .. } => return None,
            other => cur = other.children()[0],
        }
    }
}

fn child(e: &AlgebraExpr) -> Option<&AlgebraExpr> {
    match e {
        AlgebraExpr::Project { child, .. }
        | AlgebraExpr::Filter { child, .. }
        | AlgebraExpr::Dedup { child, .. }
        | AlgebraExpr::Agg { child, .. } => Some(child),
        _ => None,
    }
}

fn grouping_keys(e: &AlgebraExpr) -> Option<&[ColumnRef]> {
    match e {
        AlgebraExpr::Dedup { keys: Some(k), .. } => Some(k),
        AlgebraExpr::Agg { keys, .. } if !keys.is_empty() => Some(keys),
        _ => None,
    }
}

fn with_child(e: &AlgebraExpr, new_child: AlgebraExpr) -> AlgebraExpr {
    let mut out = e.clone();
    if let Some(c) = out.children_mut().into_iter().next() {
        *c = new_child;
    }
    out
}

// R1: π directly over σ in a single-table block. The pair differs only in
// how the columns at the site are written (bare vs table-qualified).

fn r1_match(root: &AlgebraExpr, path: &[usize], _: &RuleEnv) -> bool {
    let Some(node @ AlgebraExpr::Project { child, .. }) = root.at(path) else {
        return false;
    };
    matches!(**child, AlgebraExpr::Filter { .. }) && block_tables(node).is_some_and(|t| t.len() == 1)
}

fn r1_build(node: &AlgebraExpr, _: &RuleEnv, _: &mut dyn RngCore) -> Vec<AlgebraExpr> {
    let AlgebraExpr::Project { items, child } = node else {
        return vec![];
    };
    let AlgebraExpr::Filter { pred, child: below } = &**child else {
        return vec![];
    };
    let table = block_tables(node).unwrap()[0].clone();
    let mut refs: Vec<&ColumnRef> = pred.columns();
    refs.extend(items.iter().filter_map(|i| match i {
        SelectItem::Column(c) => Some(c),
        _ => None,
    }));
    let qualify = refs.iter().any(|c| c.table.is_none());
    let toggle = |c: &ColumnRef| {
        if qualify {
            ColumnRef::qualified(&table, &c.column)
        } else {
            ColumnRef::bare(&c.column)
        }
    };
    let items = items
        .iter()
        .map(|i| match i {
            SelectItem::Column(c) => SelectItem::Column(toggle(c)),
            other => other.clone(),
        })
        .collect();
    vec![AlgebraExpr::project(
        items,
        AlgebraExpr::filter(pred.map_columns(&toggle), (**below).clone()),
    )]
}

// R2: σ1·σ2 → σ2·σ1

fn r2_match(root: &AlgebraExpr, path: &[usize], _: &RuleEnv) -> bool {
    match root.at(path) {
        Some(AlgebraExpr::Filter { pred, child }) => {
            matches!(&**child, AlgebraExpr::Filter { pred: inner, .. } if inner != pred)
        }
        _ => false,
    }
}

fn r2_build(node: &AlgebraExpr, _: &RuleEnv, _: &mut dyn RngCore) -> Vec<AlgebraExpr> {
    let AlgebraExpr::Filter { pred: p1, child } = node else {
        return vec![];
    };
    let AlgebraExpr::Filter { pred: p2, child: below } = &**child else {
        return vec![];
    };
    vec![AlgebraExpr::filter(
        p2.clone(),
        AlgebraExpr::filter(p1.clone(), (**below).clone()),
    )]
}

// R3: π1·π2 → π1 when π1's columns are among π2's

fn plain_columns(items: &[SelectItem]) -> Option<Vec<&ColumnRef>> {
    items
        .iter()
        .map(|i| match i {
            SelectItem::Column(c) => Some(c),
            SelectItem::Agg(_) => None,
        })
        .collect()
}

fn r3_match(root: &AlgebraExpr, path: &[usize], _: &RuleEnv) -> bool {
    let Some(AlgebraExpr::Project { items: outer, child }) = root.at(path) else {
        return false;
    };
    let AlgebraExpr::Project { items: inner, .. } = &**child else {
        return false;
    };
    match (plain_columns(outer), plain_columns(inner)) {
        (Some(o), Some(i)) => o.iter().all(|c| i.iter().any(|ic| ic.same_column(c))),
        _ => false,
    }
}

fn r3_build(node: &AlgebraExpr, _: &RuleEnv, _: &mut dyn RngCore) -> Vec<AlgebraExpr> {
    let AlgebraExpr::Project { items, child } = node else {
        return vec![];
    };
    let AlgebraExpr::Project { child: below, .. } = &**child else {
        return vec![];
    };
    vec![AlgebraExpr::project(items.clone(), (**below).clone())]
}

// R4: E1 ∪ E2 → E2 ∪ E1 for two single blocks. Only offered when every set
// operation in the query is the same kind, so the result does not depend on
// how the target associates mixed chains.

fn uniform_set_ops(root: &AlgebraExpr) -> bool {
    let mut kinds = root
        .nodes()
        .into_iter()
        .filter(|n| is_set_op(n))
        .map(std::mem::discriminant);
    match kinds.next() {
        None => true,
        Some(first) => kinds.all(|k| k == first),
    }
}

fn r4_match(root: &AlgebraExpr, path: &[usize], _: &RuleEnv) -> bool {
    match root.at(path) {
        Some(AlgebraExpr::Union { left, right } | AlgebraExpr::UnionAll { left, right }) => {
            !is_set_op(left) && !is_set_op(right) && left != right && uniform_set_ops(root)
        }
        _ => false,
    }
}

fn r4_build(node: &AlgebraExpr, _: &RuleEnv, _: &mut dyn RngCore) -> Vec<AlgebraExpr> {
    match node {
        AlgebraExpr::Union { left, right } => vec![AlgebraExpr::Union {
            left: right.clone(),
            right: left.clone(),
        }],
        AlgebraExpr::UnionAll { left, right } => vec![AlgebraExpr::UnionAll {
            left: right.clone(),
            right: left.clone(),
        }],
        _ => vec![],
    }
}

// R5: insert δ over the WHERE chain of a plain single-table query. The
// single mutant has two surface forms, DISTINCT and GROUP BY.

fn r5_match(root: &AlgebraExpr, path: &[usize], _: &RuleEnv) -> bool {
    if !path.is_empty() {
        return false;
    }
    let AlgebraExpr::Project { items, child } = root else {
        return false;
    };
    if plain_columns(items).is_none() {
        return false;
    }
    let mut cur: &AlgebraExpr = child;
    while let AlgebraExpr::Filter { child, .. } = cur {
        cur = child;
    }
    matches!(cur, AlgebraExpr::Scan { tables } if tables.len() == 1)
}

fn r5_build(node: &AlgebraExpr, _: &RuleEnv, _: &mut dyn RngCore) -> Vec<AlgebraExpr> {
    let AlgebraExpr::Project { items, child } = node else {
        return vec![];
    };
    let keys = distinct_columns(items);
    vec![AlgebraExpr::project(
        items.clone(),
        AlgebraExpr::dedup(Some(keys), (**child).clone()),
    )]
}

// R6: a fresh predicate over grouping columns, once below the grouping
// node (WHERE) and once above it (HAVING).

fn r6_match(root: &AlgebraExpr, path: &[usize], _: &RuleEnv) -> bool {
    root.at(path)
        .is_some_and(|n| grouping_keys(n).is_some() && block_tables(n).is_some_and(|t| t.len() == 1))
}

fn default_constants(ty: SqlType) -> Vec<Value> {
    match ty {
        SqlType::Int => vec![Value::Int(0), Value::Int(1)],
        SqlType::Dec => vec![Value::Dec(Decimal::new(5, 4)), Value::Dec(Decimal::new(1, 0))],
        SqlType::Str => vec![Value::Str("a".into())],
    }
}

/// `key op constant` with the constant taken from the live data in that
/// column when there is any.
pub(crate) fn grouped_predicate(
    keys: &[ColumnRef],
    table: &str,
    env: &RuleEnv,
    rng: &mut dyn RngCore,
) -> Option<Predicate> {
    let key = keys.choose(rng)?;
    let schema = env.schema.table(table)?;
    let pos = schema.columns.iter().position(|c| c.name == key.column)?;
    let ty = schema.columns[pos].ty;
    let mut pool: Vec<Value> = env
        .db
        .and_then(|db| db.table(table))
        .map(|t| {
            t.rows
                .iter()
                .map(|(row, _)| row[pos].clone())
                .filter(|v| !v.is_null())
                .collect()
        })
        .unwrap_or_default();
    if pool.is_empty() {
        pool = default_constants(ty);
    }
    let value = pool.choose(rng)?;
    let op = *CmpOp::ALL.choose(rng)?;
    Some(Predicate::cmp(
        Term::Column(key.clone()),
        op,
        Term::Const(Literal::from_value(value)),
    ))
}

fn r6_build(node: &AlgebraExpr, env: &RuleEnv, rng: &mut dyn RngCore) -> Vec<AlgebraExpr> {
    let (Some(keys), Some(tables), Some(below)) = (grouping_keys(node), block_tables(node), child(node)) else {
        return vec![];
    };
    let Some(p) = grouped_predicate(keys, &tables[0], env, rng) else {
        return vec![];
    };
    let before = with_child(node, AlgebraExpr::filter(p.clone(), below.clone()));
    let after = AlgebraExpr::filter(p, node.clone());
    vec![before, after]
}

// R7: δ·σ ↔ σ·δ when σ only reads the grouping keys.

fn keys_cover(keys: &[ColumnRef], p: &Predicate) -> bool {
    p.columns().iter().all(|c| keys.iter().any(|k| k.same_column(c)))
}

fn r7_match(root: &AlgebraExpr, path: &[usize], _: &RuleEnv) -> bool {
    let Some(node) = root.at(path) else {
        return false;
    };
    if let (Some(keys), Some(AlgebraExpr::Filter { pred, .. })) = (grouping_keys(node), child(node)) {
        return keys_cover(keys, pred);
    }
    if let AlgebraExpr::Filter { pred, child } = node {
        if let Some(keys) = grouping_keys(child) {
            return keys_cover(keys, pred);
        }
    }
    false
}

fn r7_build(node: &AlgebraExpr, _: &RuleEnv, _: &mut dyn RngCore) -> Vec<AlgebraExpr> {
    if grouping_keys(node).is_some() {
        if let Some(AlgebraExpr::Filter { pred, child: below }) = child(node) {
            return vec![AlgebraExpr::filter(pred.clone(), with_child(node, (**below).clone()))];
        }
    }
    if let AlgebraExpr::Filter { pred, child: grouping } = node {
        if let Some(below) = child(grouping) {
            return vec![with_child(grouping, AlgebraExpr::filter(pred.clone(), below.clone()))];
        }
    }
    vec![]
}
