use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Exact fixed-point decimal: `mantissa * 10^-scale`.
///
/// Equality is structural (`1.0` and `1.00` differ); use [`Decimal::cmp_num`]
/// or [`Value`] comparisons for numeric semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decimal {
    pub mantissa: i128,
    pub scale: u32,
}

/// Largest scale we keep; anything beyond is an input error.
pub const MAX_SCALE: u32 = 30;

impl Decimal {
    pub fn new(mantissa: i128, scale: u32) -> Self {
        Decimal { mantissa, scale }
    }

    pub fn from_int(v: i64) -> Self {
        Decimal::new(v as i128, 0)
    }

    /// Parses `-?digits(.digits)?`. Returns `None` on anything else.
    pub fn parse(text: &str) -> Option<Self> {
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let scale = frac_part.len() as u32;
        if scale > MAX_SCALE {
            return None;
        }
        let mut mantissa: i128 = 0;
        for b in int_part.bytes().chain(frac_part.bytes()) {
            mantissa = mantissa.checked_mul(10)?.checked_add((b - b'0') as i128)?;
        }
        Some(Decimal::new(if neg { -mantissa } else { mantissa }, scale))
    }

    /// Rescales to a larger scale. `None` on overflow.
    pub fn rescale(self, scale: u32) -> Option<Self> {
        if scale < self.scale {
            return None;
        }
        let factor = 10i128.checked_pow(scale - self.scale)?;
        Some(Decimal::new(self.mantissa.checked_mul(factor)?, scale))
    }

    /// Strips trailing fractional zeros.
    pub fn normalized(self) -> Self {
        let mut d = self;
        while d.scale > 0 && d.mantissa % 10 == 0 {
            d.mantissa /= 10;
            d.scale -= 1;
        }
        d
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        let scale = self.scale.max(other.scale);
        let a = self.rescale(scale)?;
        let b = other.rescale(scale)?;
        Some(Decimal::new(a.mantissa.checked_add(b.mantissa)?, scale))
    }

    pub fn checked_mul_int(self, k: i128) -> Option<Self> {
        Some(Decimal::new(self.mantissa.checked_mul(k)?, self.scale))
    }

    /// Division by a non-zero integer at `scale` (which must be at least the
    /// current scale), rounded half away from zero.
    pub fn div_int_round(self, divisor: i128, scale: u32) -> Option<Self> {
        if divisor == 0 {
            return None;
        }
        let num = self.rescale(scale)?;
        let q = num.mantissa / divisor;
        let r = num.mantissa % divisor;
        let adjust = if r != 0 && r.abs() * 2 >= divisor.abs() {
            if (num.mantissa < 0) != (divisor < 0) {
                -1
            } else {
                1
            }
        } else {
            0
        };
        Some(Decimal::new(q + adjust, scale))
    }

    pub fn cmp_num(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        match (self.rescale(scale), other.rescale(scale)) {
            (Some(a), Some(b)) => a.mantissa.cmp(&b.mantissa),
            // overflow only happens for astronomically large values; fall back
            // to comparing via the normalized forms
            _ => {
                let (a, b) = (self.normalized(), other.normalized());
                (a.mantissa as f64 / 10f64.powi(a.scale as i32))
                    .partial_cmp(&(b.mantissa as f64 / 10f64.powi(b.scale as i32)))
                    .unwrap_or(Ordering::Equal)
            }
        }
    }

    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.scale as i32)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = self.mantissa < 0;
        let digits = self.mantissa.unsigned_abs().to_string();
        let scale = self.scale as usize;
        let body = if scale == 0 {
            digits
        } else if digits.len() > scale {
            let (i, fr) = digits.split_at(digits.len() - scale);
            format!("{i}.{fr}")
        } else {
            format!("0.{}{}", "0".repeat(scale - digits.len()), digits)
        };
        if neg {
            write!(f, "-{body}")
        } else {
            f.write_str(&body)
        }
    }
}

/// Column domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SqlType {
    Int,
    Dec,
    Str,
}

/// Scale of every stored DECIMAL column value.
pub const DEC_SCALE: u32 = 6;

impl SqlType {
    pub fn is_numeric(self) -> bool {
        matches!(self, SqlType::Int | SqlType::Dec)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            SqlType::Int => "INT",
            SqlType::Dec => "DECIMAL(20,6)",
            SqlType::Str => "VARCHAR(32)",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SqlType::Int => "int",
            SqlType::Dec => "dec",
            SqlType::Str => "str",
        }
    }
}

/// A field value.
///
/// Equality, ordering and hashing are numeric for `Int`/`Dec` (so `1` equals
/// `1.00`), which is what grouping, DISTINCT and multiset comparison need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Dec(Decimal),
    Str(String),
    Null,
}

/// A string compared with a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incomparable;

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Value::Int(v) => Some(Decimal::from_int(*v)),
            Value::Dec(d) => Some(*d),
            _ => None,
        }
    }

    pub fn sql_type(&self) -> Option<SqlType> {
        match self {
            Value::Int(_) => Some(SqlType::Int),
            Value::Dec(_) => Some(SqlType::Dec),
            Value::Str(_) => Some(SqlType::Str),
            Value::Null => None,
        }
    }

    /// SQL comparison. `None` when either side is Null.
    pub fn sql_cmp(&self, other: &Value) -> Result<Option<Ordering>, Incomparable> {
        match (self, other) {
            (Value::Null, _) | (_, Value::Null) => Ok(None),
            (Value::Str(a), Value::Str(b)) => Ok(Some(a.cmp(b))),
            (Value::Str(_), _) | (_, Value::Str(_)) => Err(Incomparable),
            (Value::Int(a), Value::Int(b)) => Ok(Some(a.cmp(b))),
            (a, b) => Ok(Some(a.as_decimal().unwrap().cmp_num(&b.as_decimal().unwrap()))),
        }
    }

    /// Canonical text rendering used by the built-in engine.
    pub fn render(&self) -> Option<String> {
        match self {
            Value::Int(v) => Some(v.to_string()),
            Value::Dec(d) => Some(d.to_string()),
            Value::Str(s) => Some(s.clone()),
            Value::Null => None,
        }
    }

    /// SQL literal syntax (quoted strings, `NULL`).
    pub fn to_sql_literal(&self) -> String {
        match self {
            Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
            Value::Null => "NULL".to_string(),
            other => other.render().unwrap(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) | Value::Dec(_) => 1,
            Value::Str(_) => 2,
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.rank().cmp(&other.rank()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        match (self, other) {
            (Value::Null, Value::Null) => Ordering::Equal,
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (a, b) => a.as_decimal().unwrap().cmp_num(&b.as_decimal().unwrap()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Null => {}
            Value::Str(s) => s.hash(state),
            num => {
                let d = num.as_decimal().unwrap().normalized();
                d.mantissa.hash(state);
                d.scale.hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sql_literal())
    }
}

/// Kleene three-valued truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthValue {
    True,
    False,
    Unknown,
}

impl std::ops::Not for TruthValue {
    type Output = TruthValue;

    fn not(self) -> TruthValue {
        match self {
            TruthValue::True => TruthValue::False,
            TruthValue::False => TruthValue::True,
            TruthValue::Unknown => TruthValue::Unknown,
        }
    }
}

impl TruthValue {
    pub fn and(self, other: TruthValue) -> TruthValue {
        use TruthValue::*;
        match (self, other) {
            (False, _) | (_, False) => False,
            (True, True) => True,
            _ => Unknown,
        }
    }

    pub fn or(self, other: TruthValue) -> TruthValue {
        use TruthValue::*;
        match (self, other) {
            (True, _) | (_, True) => True,
            (False, False) => False,
            _ => Unknown,
        }
    }

    pub fn is_true(self) -> bool {
        self == TruthValue::True
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parse_and_display() {
        let d = Decimal::parse("0.0005").unwrap();
        assert_eq!(d, Decimal::new(5, 4));
        assert_eq!(d.to_string(), "0.0005");
        assert_eq!(Decimal::parse("-12.50").unwrap().to_string(), "-12.50");
        assert_eq!(Decimal::parse("7").unwrap(), Decimal::new(7, 0));
        assert!(Decimal::parse("1e3").is_none());
        assert!(Decimal::parse("").is_none());
        assert!(Decimal::parse(".").is_none());
    }

    #[test]
    fn decimal_sum_is_exact() {
        let a = Decimal::parse("0.0005").unwrap();
        let s = a.checked_add(a).unwrap();
        assert_eq!(s.to_string(), "0.0010");
        assert_eq!(s.normalized().to_string(), "0.001");
    }

    #[test]
    fn decimal_division_rounds_half_away() {
        let one = Decimal::from_int(1);
        assert_eq!(one.div_int_round(3, 4).unwrap().to_string(), "0.3333");
        let two = Decimal::from_int(2);
        assert_eq!(two.div_int_round(3, 4).unwrap().to_string(), "0.6667");
        let neg = Decimal::from_int(-2);
        assert_eq!(neg.div_int_round(3, 4).unwrap().to_string(), "-0.6667");
        assert_eq!(Decimal::new(5, 1).div_int_round(2, 4).unwrap().to_string(), "0.2500");
    }

    #[test]
    fn numeric_equality_crosses_int_and_dec() {
        assert_eq!(Value::Int(1), Value::Dec(Decimal::new(100, 2)));
        assert_ne!(Value::Int(1), Value::Str("1".into()));
        assert!(Value::Null < Value::Int(i64::MIN));
    }

    #[test]
    fn comparisons_with_null_are_unknown() {
        assert_eq!(Value::Int(1).sql_cmp(&Value::Null), Ok(None));
        assert!(Value::Int(1).sql_cmp(&Value::Str("a".into())).is_err());
    }

    #[test]
    fn kleene_tables() {
        use TruthValue::*;
        assert_eq!(True.and(Unknown), Unknown);
        assert_eq!(False.and(Unknown), False);
        assert_eq!(True.or(Unknown), True);
        assert_eq!(False.or(Unknown), Unknown);
        assert_eq!(!Unknown, Unknown);
    }
}
