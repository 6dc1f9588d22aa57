use super::*;

/// Canonical SQL text. Keywords upper case, identifiers as stored, single
/// spaces, minimal parentheses for the left-associative predicate grammar.
pub fn render(q: &SqlQuery) -> String {
    let mut out = String::from("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    out.push_str(&join(q.select.iter().map(render_item)));
    out.push_str(" FROM ");
    out.push_str(&q.from.join(", "));
    if let Some(p) = &q.where_pred {
        out.push_str(" WHERE ");
        out.push_str(&render_predicate(p));
    }
    if let Some(g) = &q.group_by {
        out.push_str(" GROUP BY ");
        out.push_str(&join(g.iter().map(|c| c.to_string())));
    }
    if let Some(p) = &q.having {
        out.push_str(" HAVING ");
        out.push_str(&render_predicate(p));
    }
    if let Some((op, rest)) = &q.set_op {
        out.push(' ');
        out.push_str(op.keyword());
        out.push(' ');
        out.push_str(&render(rest));
    }
    out
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(", ")
}

fn render_item(item: &SelectItem) -> String {
    match item {
        SelectItem::Column(c) => c.to_string(),
        SelectItem::Agg(call) => render_agg(call),
    }
}

pub fn render_agg(call: &AggCall) -> String {
    match &call.arg {
        AggArg::Star => format!("{}(*)", call.func.name()),
        AggArg::Column(c) => format!("{}({c})", call.func.name()),
    }
}

pub fn render_predicate(p: &Predicate) -> String {
    render_pred(p, 0)
}

// OR = 1, AND = 2, NOT = 3, atoms = 4
fn precedence(p: &Predicate) -> u8 {
    match p {
        Predicate::Or(..) => 1,
        Predicate::And(..) => 2,
        Predicate::Not(_) => 3,
        _ => 4,
    }
}

fn render_pred(p: &Predicate, min_prec: u8) -> String {
    let body = match p {
        Predicate::Literal(TruthLiteral::True) => "TRUE".to_string(),
        Predicate::Literal(TruthLiteral::False) => "FALSE".to_string(),
        Predicate::Literal(TruthLiteral::Null) => "NULL".to_string(),
        Predicate::Cmp(l, op, r) => format!("{} {} {}", render_term(l), op.symbol(), render_term(r)),
        Predicate::Or(l, r) => format!("{} OR {}", render_pred(l, 1), render_pred(r, 2)),
        Predicate::And(l, r) => format!("{} AND {}", render_pred(l, 2), render_pred(r, 3)),
        Predicate::Not(inner) => format!("NOT {}", render_pred(inner, 3)),
    };
    if precedence(p) < min_prec {
        format!("({body})")
    } else {
        body
    }
}

fn render_term(t: &Term) -> String {
    match t {
        Term::Column(c) => c.to_string(),
        Term::Const(Literal::Int(v)) => v.to_string(),
        Term::Const(Literal::Dec(d)) => d.to_string(),
        Term::Const(Literal::Str(s)) => format!("'{}'", s.replace('\'', "''")),
        Term::Const(Literal::Null) => "NULL".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_distinct_where() {
        let q = SqlQuery {
            distinct: true,
            where_pred: Some(Predicate::cmp(
                Term::Column(ColumnRef::bare("a")),
                CmpOp::Gt,
                Term::Const(Literal::Int(0)),
            )),
            ..SqlQuery::simple(vec![SelectItem::Column(ColumnRef::bare("a"))], "t0")
        };
        assert_eq!(render(&q), "SELECT DISTINCT a FROM t0 WHERE a > 0");
    }

    #[test]
    fn renders_group_by_having() {
        let q = parse("select sum(b) from t0 group by a having a > 0").unwrap();
        assert_eq!(render(&q), "SELECT SUM(b) FROM t0 GROUP BY a HAVING a > 0");
    }

    #[test]
    fn canonical_text_is_a_fixed_point() {
        let text = "SELECT a FROM t0 WHERE a > 1 GROUP BY a";
        assert_eq!(render(&parse(text).unwrap()), text);
        let messy = "select   a from t0 where (a>1) group by a ;";
        assert_eq!(render(&parse(messy).unwrap()), text);
    }

    #[test]
    fn parenthesizes_right_nested_connectives() {
        let text = "SELECT a FROM t0 WHERE a = 1 AND (a = 2 AND a = 3) OR NOT (a = 4 OR a = 5)";
        let q = parse(text).unwrap();
        assert_eq!(render(&q), text);
    }
}
