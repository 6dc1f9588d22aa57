use std::fmt;

use super::lexer::{tokenize, Tok, Token};
use super::*;

/// Parse failure: byte position, what the parser would have accepted there,
/// and what it found instead.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct SyntaxError {
    pub position: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl SyntaxError {
    pub(crate) fn new(position: usize, expected: &[&str], found: &str) -> Self {
        SyntaxError {
            position,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: found.to_string(),
        }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "syntax error at byte {}: expected {}, found {}",
            self.position,
            self.expected.join(" or "),
            self.found
        )
    }
}

const RESERVED: [&str; 15] = [
    "select", "distinct", "from", "where", "group", "by", "having", "union", "all", "and", "or", "not", "true",
    "false", "null",
];

/// Parses a single statement of the supported subset. A trailing `;` is
/// accepted and ignored.
pub fn parse(text: &str) -> Result<SqlQuery, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let q = p.query()?;
    if p.peek() == &Tok::Sym(";") {
        p.pos += 1;
    }
    p.expect_eof()?;
    Ok(q)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let t = &self.tokens[self.pos];
        SyntaxError::new(t.pos, expected, &t.tok.describe())
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&[&kw.to_ascii_uppercase()]))
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> PResult<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error(&[sym]))
        }
    }

    fn expect_eof(&self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.error(&["end of input"]))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Tok::Word(w) if !RESERVED.contains(&w.as_str()) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error(&[what])),
        }
    }

    fn query(&mut self) -> PResult<SqlQuery> {
        let mut q = self.select_core()?;
        if self.eat_kw("union") {
            let op = if self.eat_kw("all") {
                SetOp::UnionAll
            } else {
                SetOp::Union
            };
            let rest = self.query()?;
            q.set_op = Some((op, Box::new(rest)));
        }
        Ok(q)
    }

    fn select_core(&mut self) -> PResult<SqlQuery> {
        self.expect_kw("select")?;
        let distinct = self.eat_kw("distinct");
        let mut select = vec![self.select_item()?];
        while self.eat_sym(",") {
            select.push(self.select_item()?);
        }
        self.expect_kw("from")?;
        let mut from = vec![self.ident("table name")?];
        while self.eat_sym(",") {
            from.push(self.ident("table name")?);
        }
        let where_pred = if self.eat_kw("where") {
            Some(self.predicate()?)
        } else {
            None
        };
        let group_by = if self.eat_kw("group") {
            self.expect_kw("by")?;
            let mut cols = vec![self.column_ref()?];
            while self.eat_sym(",") {
                cols.push(self.column_ref()?);
            }
            Some(cols)
        } else {
            None
        };
        let having = if self.is_kw("having") {
            if group_by.is_none() {
                return Err(self.error(&["GROUP BY"]));
            }
            self.pos += 1;
            Some(self.predicate()?)
        } else {
            None
        };
        Ok(SqlQuery {
            select,
            distinct,
            from,
            where_pred,
            group_by,
            having,
            set_op: None,
        })
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if let Tok::Word(w) = self.peek() {
            let func = AggFunc::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(w));
            if let (Some(func), Tok::Sym("(")) = (func, self.peek_at(1)) {
                self.pos += 2;
                let arg = if self.eat_sym("*") {
                    if func != AggFunc::Count {
                        self.pos -= 1;
                        return Err(self.error(&["column name"]));
                    }
                    AggArg::Star
                } else {
                    AggArg::Column(self.column_ref()?)
                };
                self.expect_sym(")")?;
                return Ok(SelectItem::Agg(AggCall { func, arg }));
            }
        }
        match self.column_ref() {
            Ok(c) => Ok(SelectItem::Column(c)),
            Err(_) => Err(self.error(&["column name", "aggregate call"])),
        }
    }

    fn column_ref(&mut self) -> PResult<ColumnRef> {
        let first = self.ident("column name")?;
        if self.eat_sym(".") {
            let col = self.ident("column name")?;
            Ok(ColumnRef::qualified(first, col))
        } else {
            Ok(ColumnRef::bare(first))
        }
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        let mut left = self.and_pred()?;
        while self.eat_kw("or") {
            let right = self.and_pred()?;
            left = Predicate::or(left, right);
        }
        Ok(left)
    }

    fn and_pred(&mut self) -> PResult<Predicate> {
        let mut left = self.not_pred()?;
        while self.eat_kw("and") {
            let right = self.not_pred()?;
            left = Predicate::and(left, right);
        }
        Ok(left)
    }

    fn not_pred(&mut self) -> PResult<Predicate> {
        if self.eat_kw("not") {
            return Ok(Predicate::not(self.not_pred()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Predicate> {
        if self.eat_sym("(") {
            let p = self.predicate()?;
            self.expect_sym(")")?;
            return Ok(p);
        }
        let next_is_cmp = matches!(self.peek_at(1), Tok::Sym(s) if is_cmp(s));
        if !next_is_cmp {
            if self.eat_kw("true") {
                return Ok(Predicate::Literal(TruthLiteral::True));
            }
            if self.eat_kw("false") {
                return Ok(Predicate::Literal(TruthLiteral::False));
            }
            if self.eat_kw("null") {
                return Ok(Predicate::Literal(TruthLiteral::Null));
            }
        }
        let left = self.term().map_err(|_| self.error(&["predicate"]))?;
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return Err(self.error(&["comparison operator"])),
        };
        self.pos += 1;
        let right = self.term()?;
        Ok(Predicate::Cmp(left, op, right))
    }

    fn term(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Number(n) => {
                let t = &self.tokens[self.pos];
                let lit = if n.contains('.') {
                    Decimal::parse(&n).map(Literal::Dec)
                } else {
                    n.parse::<i64>().ok().map(Literal::Int)
                };
                match lit {
                    Some(l) => {
                        self.pos += 1;
                        Ok(Term::Const(l))
                    }
                    None => Err(SyntaxError::new(t.pos, &["numeric literal in range"], &n)),
                }
            }
            Tok::Str(s) => {
                self.pos += 1;
                Ok(Term::Const(Literal::Str(s)))
            }
            Tok::Word(w) if w == "null" => {
                self.pos += 1;
                Ok(Term::Const(Literal::Null))
            }
            _ => Ok(Term::Column(self.column_ref()?)),
        }
    }
}

fn is_cmp(s: &str) -> bool {
    matches!(s, "=" | "!=" | "<" | "<=" | ">" | ">=")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(c: &str) -> Term {
        Term::Column(ColumnRef::bare(c))
    }

    #[test]
    fn parses_grouped_example() {
        let q = parse("SELECT a FROM t0 WHERE a > 1 GROUP BY a").unwrap();
        assert_eq!(q.select, vec![SelectItem::Column(ColumnRef::bare("a"))]);
        assert_eq!(q.from, vec!["t0"]);
        assert_eq!(
            q.where_pred,
            Some(Predicate::cmp(col("a"), CmpOp::Gt, Term::Const(Literal::Int(1))))
        );
        assert_eq!(q.group_by, Some(vec![ColumnRef::bare("a")]));
        assert!(!q.distinct && q.having.is_none() && q.set_op.is_none());
    }

    #[test]
    fn parses_minimal_query() {
        let q = parse("SELECT a FROM t0").unwrap();
        assert_eq!(
            q,
            SqlQuery::simple(vec![SelectItem::Column(ColumnRef::bare("a"))], "t0")
        );
    }

    #[test]
    fn empty_select_list_fails_at_from() {
        let err = parse("SELECT FROM t0").unwrap_err();
        assert_eq!(err.position, 7);
        assert_eq!(err.found, "FROM");
        assert!(err.expected.contains(&"column name".to_string()));
    }

    #[test]
    fn having_requires_group_by() {
        let err = parse("SELECT a FROM t0 HAVING a > 1").unwrap_err();
        assert_eq!(err.expected, vec!["GROUP BY"]);
    }

    #[test]
    fn star_only_with_count() {
        assert!(parse("SELECT COUNT(*) FROM t0").is_ok());
        assert!(parse("SELECT SUM(*) FROM t0").is_err());
    }

    #[test]
    fn null_as_truth_literal_and_as_term() {
        let q = parse("SELECT a FROM t0 WHERE NULL").unwrap();
        assert_eq!(q.where_pred, Some(Predicate::Literal(TruthLiteral::Null)));
        let q = parse("SELECT a FROM t0 WHERE NULL = a").unwrap();
        assert_eq!(
            q.where_pred,
            Some(Predicate::cmp(Term::Const(Literal::Null), CmpOp::Eq, col("a")))
        );
    }

    #[test]
    fn precedence_and_binds_tighter_than_or() {
        let q = parse("SELECT a FROM t0 WHERE a = 1 OR a = 2 AND NOT a = 3").unwrap();
        match q.where_pred.unwrap() {
            Predicate::Or(_, r) => assert!(matches!(*r, Predicate::And(_, _))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn union_chains_right() {
        let q = parse("SELECT a FROM t0 UNION SELECT a FROM t1 UNION ALL SELECT b FROM t2;").unwrap();
        let (op, rest) = q.set_op.unwrap();
        assert_eq!(op, SetOp::Union);
        assert_eq!(rest.set_op.as_ref().unwrap().0, SetOp::UnionAll);
    }

    #[test]
    fn out_of_subset_input_is_rejected() {
        for bad in [
            "SELECT a FROM t0 ORDER BY a",
            "SELECT a FROM t0 JOIN t1",
            "SELECT a FROM",
            "DELETE FROM t0",
            "SELECT a FROM t0 WHERE a >",
            "",
        ] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn identifiers_are_case_insensitive() {
        assert_eq!(parse("select A from T0").unwrap(), parse("SELECT a FROM t0").unwrap());
    }
}
