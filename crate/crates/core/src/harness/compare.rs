use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::refdb::{Cell, Decimal, RenderedRows, SqlType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareMode {
    /// Multisets of parsed values; decimals compared numerically.
    Canonical,
    /// Multisets of the engine's own text.
    RawText,
    /// Canonical first, then raw text.
    Both,
}

impl fmt::Display for CompareMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareMode::Canonical => "canonical",
            CompareMode::RawText => "raw-text",
            CompareMode::Both => "both",
        })
    }
}

impl FromStr for CompareMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(CompareMode::Canonical),
            "raw-text" => Ok(CompareMode::RawText),
            "both" => Ok(CompareMode::Both),
            other => Err(format!("unknown compare mode {other:?} (canonical, raw-text, both)")),
        }
    }
}

/// Rendered tuple as it crosses the wire.
pub type TextTuple = Vec<Option<String>>;

/// A tuple whose multiplicity differs between the two sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleDiff {
    pub tuple: TextTuple,
    pub left: u64,
    pub right: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    /// `canonical` or `raw-text`: the comparison that failed.
    pub mode: CompareMode,
    pub diffs: Vec<TupleDiff>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Comparison {
    Match,
    Mismatch(Mismatch),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("arity mismatch: {left} vs {right} columns")]
pub struct ArityMismatch {
    pub left: usize,
    pub right: usize,
}

/// Value of one rendered cell. The tag decides the type; untagged text is
/// read as an integer, then a decimal, then a string.
pub fn canonical_value(cell: &Cell) -> Value {
    let Some(text) = &cell.text else {
        return Value::Null;
    };
    let as_dec = |t: &str| Decimal::parse(t).map(|d| Value::Dec(d.normalized()));
    let parsed = match cell.tag {
        Some(SqlType::Str) => None,
        Some(SqlType::Int) => text.parse().ok().map(Value::Int).or_else(|| as_dec(text)),
        Some(SqlType::Dec) | None => text.parse().ok().map(Value::Int).or_else(|| as_dec(text)),
    };
    parsed.unwrap_or_else(|| Value::Str(text.clone()))
}

fn text_tuple(row: &[Cell]) -> TextTuple {
    row.iter().map(|c| c.text.clone()).collect()
}

/// Sorted `(tuple, multiplicity)` list of the rendered text.
pub fn text_multiset(rows: &RenderedRows) -> Vec<(TextTuple, u64)> {
    let mut m: BTreeMap<TextTuple, u64> = BTreeMap::new();
    for r in rows {
        *m.entry(text_tuple(r)).or_insert(0) += 1;
    }
    m.into_iter().collect()
}

fn diff_maps<K: Ord + Clone>(l: &BTreeMap<K, (u64, TextTuple)>, r: &BTreeMap<K, (u64, TextTuple)>) -> Vec<TupleDiff> {
    let mut out = Vec::new();
    for (k, (lm, lt)) in l {
        let rm = r.get(k).map_or(0, |(m, _)| *m);
        if *lm != rm {
            out.push(TupleDiff {
                tuple: lt.clone(),
                left: *lm,
                right: rm,
            });
        }
    }
    for (k, (rm, rt)) in r {
        if !l.contains_key(k) {
            out.push(TupleDiff {
                tuple: rt.clone(),
                left: 0,
                right: *rm,
            });
        }
    }
    out
}

fn keyed<K: Ord>(rows: &RenderedRows, key: impl Fn(&[Cell]) -> K) -> BTreeMap<K, (u64, TextTuple)> {
    let mut m: BTreeMap<K, (u64, TextTuple)> = BTreeMap::new();
    for r in rows {
        m.entry(key(r)).or_insert_with(|| (0, text_tuple(r))).0 += 1;
    }
    m
}

/// Order-insensitive comparison of two results; column names play no part.
pub fn compare_results(
    left: &RenderedRows,
    right: &RenderedRows,
    mode: CompareMode,
) -> Result<Comparison, ArityMismatch> {
    if let (Some(l), Some(r)) = (left.first(), right.first()) {
        if l.len() != r.len() {
            return Err(ArityMismatch {
                left: l.len(),
                right: r.len(),
            });
        }
    }
    if matches!(mode, CompareMode::Canonical | CompareMode::Both) {
        let canon = |row: &[Cell]| row.iter().map(canonical_value).collect::<Vec<Value>>();
        let diffs = diff_maps(&keyed(left, canon), &keyed(right, canon));
        if !diffs.is_empty() {
            return Ok(Comparison::Mismatch(Mismatch {
                mode: CompareMode::Canonical,
                diffs,
            }));
        }
    }
    if matches!(mode, CompareMode::RawText | CompareMode::Both) {
        let diffs = diff_maps(&keyed(left, text_tuple), &keyed(right, text_tuple));
        if !diffs.is_empty() {
            return Ok(Comparison::Mismatch(Mismatch {
                mode: CompareMode::RawText,
                diffs,
            }));
        }
    }
    Ok(Comparison::Match)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(cells: &[(&str, SqlType, usize)]) -> RenderedRows {
        cells
            .iter()
            .flat_map(|(t, ty, n)| {
                std::iter::repeat_n(
                    vec![Cell {
                        text: Some(t.to_string()),
                        tag: Some(*ty),
                    }],
                    *n,
                )
            })
            .collect()
    }

    #[test]
    fn equal_multisets_match() {
        let a = rows(&[("1", SqlType::Int, 2)]);
        assert_eq!(compare_results(&a, &a, CompareMode::Both), Ok(Comparison::Match));
    }

    #[test]
    fn multiplicity_difference_is_reported() {
        let a = rows(&[("1", SqlType::Int, 2)]);
        let b = rows(&[("1", SqlType::Int, 1)]);
        let Ok(Comparison::Mismatch(m)) = compare_results(&a, &b, CompareMode::Canonical) else {
            panic!()
        };
        assert_eq!(
            m.diffs,
            vec![TupleDiff {
                tuple: vec![Some("1".into())],
                left: 2,
                right: 1
            }]
        );
    }

    #[test]
    fn trailing_zeros_only_differ_textually() {
        let a = rows(&[("0.001", SqlType::Dec, 1)]);
        let b = rows(&[("0.001000", SqlType::Dec, 1)]);
        assert_eq!(compare_results(&a, &b, CompareMode::Canonical), Ok(Comparison::Match));
        assert!(matches!(
            compare_results(&a, &b, CompareMode::RawText),
            Ok(Comparison::Mismatch(_))
        ));
    }

    #[test]
    fn float_artifacts_differ_in_both_modes() {
        let a = rows(&[("0.001", SqlType::Dec, 1)]);
        let b = rows(&[("0.00100000000000000002", SqlType::Dec, 1)]);
        for mode in [CompareMode::Canonical, CompareMode::RawText] {
            assert!(matches!(compare_results(&a, &b, mode), Ok(Comparison::Mismatch(_))));
        }
    }

    #[test]
    fn arity_is_checked() {
        let a = rows(&[("1", SqlType::Int, 1)]);
        let b = vec![vec![Cell::null(), Cell::null()]];
        assert!(compare_results(&a, &b, CompareMode::Both).is_err());
    }

    #[test]
    fn untagged_numbers_are_numeric() {
        let a = vec![vec![Cell {
            text: Some("2".into()),
            tag: None,
        }]];
        let b = rows(&[("2.0", SqlType::Dec, 1)]);
        assert_eq!(compare_results(&a, &b, CompareMode::Canonical), Ok(Comparison::Match));
        assert_eq!("raw-text".parse::<CompareMode>(), Ok(CompareMode::RawText));
    }
}
