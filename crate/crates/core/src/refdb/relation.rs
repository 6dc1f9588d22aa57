use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Value;

/// Finite multiset of tuples stored as `(tuple, multiplicity)` pairs.
///
/// Tuples are keyed by [`Value`] equality, so no two entries are equal and
/// every multiplicity is at least one. Iteration order is the sorted tuple
/// order, which keeps serialization deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub columns: Vec<String>,
    rows: BTreeMap<Vec<Value>, u64>,
}

impl Relation {
    pub fn new(columns: Vec<String>) -> Self {
        Relation {
            columns,
            rows: BTreeMap::new(),
        }
    }

    pub fn from_rows(columns: Vec<String>, rows: impl IntoIterator<Item = (Vec<Value>, u64)>) -> Self {
        let mut r = Relation::new(columns);
        for (t, m) in rows {
            r.insert(t, m);
        }
        r
    }

    /// Adds `mult` copies of `tuple`. Zero multiplicity is a no-op.
    pub fn insert(&mut self, tuple: Vec<Value>, mult: u64) {
        if mult == 0 {
            return;
        }
        *self.rows.entry(tuple).or_insert(0) += mult;
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    /// Total row count, counting multiplicity.
    pub fn len(&self) -> u64 {
        self.rows.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn distinct_len(&self) -> usize {
        self.rows.len()
    }

    pub fn multiplicity(&self, tuple: &[Value]) -> u64 {
        self.rows.get(tuple).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<Value>, u64)> {
        self.rows.iter().map(|(t, m)| (t, *m))
    }

    /// Every tuple with multiplicity one.
    pub fn flatten(&self) -> Relation {
        Relation {
            columns: self.columns.clone(),
            rows: self.rows.keys().map(|t| (t.clone(), 1)).collect(),
        }
    }

    /// Multiset sum; column names come from `self`.
    pub fn union_all(&self, other: &Relation) -> Relation {
        let mut out = self.clone();
        for (t, m) in other.iter() {
            out.insert(t.clone(), m);
        }
        out
    }

    /// Same tuples with the same multiplicities; column names ignored.
    pub fn same_multiset(&self, other: &Relation) -> bool {
        self.rows == other.rows
    }

    /// Tuples whose multiplicity differs, as `(tuple, left, right)`.
    pub fn diff(&self, other: &Relation) -> Vec<(Vec<Value>, u64, u64)> {
        let mut out = Vec::new();
        for (t, m) in self.iter() {
            let o = other.multiplicity(t);
            if o != m {
                out.push((t.clone(), m, o));
            }
        }
        for (t, m) in other.iter() {
            if self.multiplicity(t) == 0 {
                out.push((t.clone(), 0, m));
            }
        }
        out
    }

    /// Expands multiplicities into a row list in sorted order.
    pub fn expanded(&self) -> Vec<Vec<Value>> {
        let mut out = Vec::new();
        for (t, m) in self.iter() {
            for _ in 0..m {
                out.push(t.clone());
            }
        }
        out
    }

    /// Returns a copy where `tuple` occurs `factor` times as often.
    pub fn scale_tuple(&self, tuple: &[Value], factor: u64) -> Relation {
        let mut out = self.clone();
        if let Some(m) = out.rows.get_mut(tuple) {
            *m *= factor;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refdb::Decimal;

    fn rel(rows: &[(i64, u64)]) -> Relation {
        Relation::from_rows(vec!["a".into()], rows.iter().map(|(v, m)| (vec![Value::Int(*v)], *m)))
    }

    #[test]
    fn entries_merge_on_value_equality() {
        let mut r = Relation::new(vec!["a".into()]);
        r.insert(vec![Value::Int(1)], 1);
        r.insert(vec![Value::Dec(Decimal::new(10, 1))], 2);
        r.insert(vec![Value::Int(2)], 0);
        assert_eq!(r.distinct_len(), 1);
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn flatten_and_union_laws() {
        let l = rel(&[(1, 2), (2, 1)]);
        let r = rel(&[(1, 1), (3, 4)]);
        let all = l.union_all(&r);
        assert_eq!(all.len(), l.len() + r.len());
        assert_eq!(all.flatten(), rel(&[(1, 1), (2, 1), (3, 1)]));
    }

    #[test]
    fn diff_reports_both_sides() {
        let d = rel(&[(1, 2)]).diff(&rel(&[(1, 1), (2, 1)]));
        assert_eq!(d.len(), 2);
        assert_eq!(d[0], (vec![Value::Int(1)], 2, 1));
        assert_eq!(d[1], (vec![Value::Int(2)], 0, 1));
    }
}
