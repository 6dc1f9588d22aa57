//! Equivalence-preserving rewrites over the algebra IR and the synthesis of
//! equivalent query pairs from a seed.

mod rules;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::algebra::{lower, remap_to_sql, typecheck, AlgebraExpr, LoweringError, RemapError};
use crate::refdb::Database;
use crate::sql::{validate, Schema, SqlQuery};

pub use rules::default_catalog;

/// Which two queries a rule's output is compared as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairingMode {
    /// The seed against its rewrite.
    SeedVsMutant,
    /// Two rewrites of the seed against each other.
    MutantVsMutant,
}

/// Context a rule may consult: the schema, and the live database for
/// drawing constants.
#[derive(Debug, Clone, Copy)]
pub struct RuleEnv<'a> {
    pub schema: &'a Schema,
    pub db: Option<&'a Database>,
}

type Matcher = fn(&AlgebraExpr, &[usize], &RuleEnv) -> bool;
type Builder = fn(&AlgebraExpr, &RuleEnv, &mut dyn RngCore) -> Vec<AlgebraExpr>;

/// A rewrite rule: `matcher` decides applicability at a site of the whole
/// tree (shape plus side condition), `builder` rewrites the subtree at that
/// site into one mutant, or two for rules that pair mutants.
#[derive(Clone, Copy)]
pub struct RewriteRule {
    pub id: &'static str,
    pub name: &'static str,
    pub pairing: PairingMode,
    pub matcher: Matcher,
    pub builder: Builder,
}

impl std::fmt::Debug for RewriteRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.id, self.name)
    }
}

impl PartialEq for RewriteRule {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

/// Path of child indices from the root to the rewritten node.
pub type Site = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule {rule} does not apply at {site:?}")]
    NotApplicable { rule: &'static str, site: Site },
    #[error("rule {rule} produced an ill-typed tree: {message}")]
    IllTyped { rule: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("no rule applies")]
    NoRuleApplies,
    #[error(transparent)]
    Lowering(#[from] LoweringError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown rule {0:?}")]
pub struct UnknownRule(pub String);

/// Catalog subset by rule id (`R5`) or name (`dedup-insertion`), kept in
/// catalog order.
pub fn select_rules(names: &[&str]) -> Result<Vec<RewriteRule>, UnknownRule> {
    let all = default_catalog();
    for n in names {
        if !all.iter().any(|r| r.id.eq_ignore_ascii_case(n) || r.name == *n) {
            return Err(UnknownRule(n.to_string()));
        }
    }
    Ok(all
        .into_iter()
        .filter(|r| names.iter().any(|n| r.id.eq_ignore_ascii_case(n) || r.name == *n))
        .collect())
}

/// A pair of queries expected to return the same multiset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EquivalentQueryPair {
    pub left: SqlQuery,
    pub right: SqlQuery,
    pub rule_name: String,
    pub seed_text: String,
}

pub type Eqp = EquivalentQueryPair;

/// Every (rule, site) whose side condition holds, in catalog order and,
/// within a rule, innermost-leftmost site first.
pub fn applicable_rules(e: &AlgebraExpr, catalog: &[RewriteRule], env: &RuleEnv) -> Vec<(RewriteRule, Site)> {
    let paths = e.paths_post_order();
    let mut out = Vec::new();
    for rule in catalog {
        for p in &paths {
            if (rule.matcher)(e, p, env) {
                out.push((*rule, p.clone()));
            }
        }
    }
    out
}

/// Applies `rule` at `site`, returning one rewritten tree per mutant.
pub fn apply_rule(
    rule: &RewriteRule,
    e: &AlgebraExpr,
    site: &[usize],
    env: &RuleEnv,
    rng: &mut dyn RngCore,
) -> Result<Vec<AlgebraExpr>, RuleError> {
    let not_applicable = || RuleError::NotApplicable {
        rule: rule.name,
        site: site.to_vec(),
    };
    if !(rule.matcher)(e, site, env) {
        return Err(not_applicable());
    }
    let node = e.at(site).ok_or_else(not_applicable)?;
    let rewrites = (rule.builder)(node, env, rng);
    if rewrites.is_empty() {
        return Err(not_applicable());
    }
    let mut out = Vec::with_capacity(rewrites.len());
    for sub in rewrites {
        let mut whole = e.clone();
        *whole.at_mut(site).ok_or_else(not_applicable)? = sub;
        typecheck(&whole).map_err(|err| RuleError::IllTyped {
            rule: rule.name,
            message: err.to_string(),
        })?;
        out.push(whole);
    }
    Ok(out)
}

fn shape_distance(seed: &SqlQuery, q: &SqlQuery) -> usize {
    let mut d = usize::from(seed.distinct != q.distinct) + usize::from(seed.group_by.is_some() != q.group_by.is_some());
    if let (Some((_, a)), Some((_, b))) = (&seed.set_op, &q.set_op) {
        d += shape_distance(a, b);
    }
    d
}

/// Among several surface forms of one tree, the one whose DISTINCT and
/// GROUP BY usage differs most from the seed's.
fn pick_rendering(seed: &SqlQuery, options: Vec<SqlQuery>) -> Option<SqlQuery> {
    let mut best: Option<(usize, SqlQuery)> = None;
    for q in options {
        let d = shape_distance(seed, &q);
        if best.as_ref().is_none_or(|(bd, _)| d > *bd) {
            best = Some((d, q));
        }
    }
    best.map(|(_, q)| q)
}

fn valid(q: &SqlQuery, schema: &Schema) -> bool {
    validate(q, schema).is_ok()
}

fn build_pair(
    seed: &SqlQuery,
    rule: &RewriteRule,
    mutants: Vec<AlgebraExpr>,
    schema: &Schema,
) -> Result<Option<Eqp>, RemapError> {
    let (left, right) = match (rule.pairing, mutants.as_slice()) {
        (PairingMode::SeedVsMutant, [m]) => {
            let Some(right) = pick_rendering(seed, remap_to_sql(m)?) else {
                return Ok(None);
            };
            (seed.clone(), right)
        }
        // one tree with two surface forms
        (PairingMode::MutantVsMutant, [m]) => {
            let forms = remap_to_sql(m)?;
            let distinct = forms.iter().find(|q| q.distinct).cloned();
            let grouped = forms.iter().find(|q| !q.distinct).cloned();
            match (distinct, grouped) {
                (Some(d), Some(g)) => (d, g),
                _ => return Ok(None),
            }
        }
        (PairingMode::MutantVsMutant, [a, b]) => {
            let (Some(l), Some(r)) = (
                pick_rendering(seed, remap_to_sql(a)?),
                pick_rendering(seed, remap_to_sql(b)?),
            ) else {
                return Ok(None);
            };
            (l, r)
        }
        _ => return Ok(None),
    };
    if left.to_string() == right.to_string() || !valid(&left, schema) || !valid(&right, schema) {
        return Ok(None);
    }
    Ok(Some(Eqp {
        left,
        right,
        rule_name: rule.name.to_string(),
        seed_text: seed.to_string(),
    }))
}

/// One rewrite step on `q`: rules are tried in catalog order starting from
/// a random offset, the first rule that yields a valid pair wins (at a
/// random one of its sites).
pub fn transform_query(
    q: &SqlQuery,
    env: &RuleEnv,
    catalog: &[RewriteRule],
    rng: &mut dyn RngCore,
) -> Result<Eqp, TransformError> {
    let e = lower(q)?;
    if catalog.is_empty() {
        return Err(TransformError::NoRuleApplies);
    }
    let start = rng.gen_range(0..catalog.len());
    for i in 0..catalog.len() {
        let rule = &catalog[(start + i) % catalog.len()];
        let mut sites: Vec<Site> = e
            .paths_post_order()
            .into_iter()
            .filter(|p| (rule.matcher)(&e, p, env))
            .collect();
        sites.shuffle(rng);
        for site in sites {
            let Ok(mutants) = apply_rule(rule, &e, &site, env, rng) else {
                continue;
            };
            if let Ok(Some(pair)) = build_pair(q, rule, mutants, env.schema) {
                return Ok(pair);
            }
        }
    }
    Err(TransformError::NoRuleApplies)
}

/// Up to `k` distinct single-step rewrites of `e` over every applicable
/// (rule, site).
pub fn enumerate_mutants(
    e: &AlgebraExpr,
    catalog: &[RewriteRule],
    env: &RuleEnv,
    k: usize,
    rng: &mut dyn RngCore,
) -> Vec<AlgebraExpr> {
    let mut out: Vec<AlgebraExpr> = Vec::new();
    for (rule, site) in applicable_rules(e, catalog, env) {
        if out.len() >= k {
            break;
        }
        let Ok(mutants) = apply_rule(&rule, e, &site, env, rng) else {
            continue;
        };
        for m in mutants {
            if out.len() < k && &m != e && !out.contains(&m) {
                out.push(m);
            }
        }
    }
    out
}

/// Every pair obtainable from `q` with one rule application, one per
/// (rule, site).
pub fn enumerate_pairs(q: &SqlQuery, env: &RuleEnv, catalog: &[RewriteRule], rng: &mut dyn RngCore) -> Vec<Eqp> {
    let Ok(e) = lower(q) else {
        return vec![];
    };
    let mut out = Vec::new();
    for (rule, site) in applicable_rules(&e, catalog, env) {
        let Ok(mutants) = apply_rule(&rule, &e, &site, env, rng) else {
            continue;
        };
        if let Ok(Some(pair)) = build_pair(q, &rule, mutants, env.schema) {
            if !out.contains(&pair) {
                out.push(pair);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sql::parse;

    fn db() -> Database {
        Database::from_script(
            "CREATE TABLE t0 (a INT, b DECIMAL(20,6));
             INSERT INTO t0 VALUES (1, 0.5), (1, 0.5), (NULL, 2);
             CREATE TABLE t1 (a INT, b DECIMAL(20,6));",
        )
        .unwrap()
    }

    fn low(sql: &str) -> AlgebraExpr {
        lower(&parse(sql).unwrap()).unwrap()
    }

    fn rule(id: &str) -> RewriteRule {
        select_rules(&[id]).unwrap()[0]
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn catalog_has_seven_rules() {
        let ids: Vec<&str> = default_catalog().iter().map(|r| r.id).collect();
        assert_eq!(ids, ["R1", "R2", "R3", "R4", "R5", "R6", "R7"]);
        assert!(select_rules(&["R9"]).is_err());
        assert_eq!(select_rules(&["commutative-union"]).unwrap()[0].id, "R4");
    }

    #[test]
    fn project_over_filter_matches_pull_up() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let e = low("SELECT a FROM t0 WHERE a > 0");
        let found = applicable_rules(&e, &default_catalog()[..4], &env);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].0.id, "R1");
        assert!(applicable_rules(&AlgebraExpr::scan("t0"), &default_catalog(), &env).is_empty());
    }

    #[test]
    fn selections_commute() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let e = low("SELECT a FROM t0 WHERE b < 2 AND a > 0");
        let sites: Vec<Site> = applicable_rules(&e, &[rule("R2")], &env)
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        assert_eq!(sites, vec![vec![0]]);
        let out = apply_rule(&rule("R2"), &e, &sites[0], &env, &mut rng()).unwrap();
        assert_eq!(out, vec![low("SELECT a FROM t0 WHERE a > 0 AND b < 2")]);
    }

    #[test]
    fn cascaded_projection_collapses() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let inner = low("SELECT a, b FROM t0");
        let AlgebraExpr::Project { items, .. } = low("SELECT a FROM t0") else {
            unreachable!()
        };
        let e = AlgebraExpr::project(items, inner);
        let out = apply_rule(&rule("R3"), &e, &[], &env, &mut rng()).unwrap();
        assert_eq!(out, vec![low("SELECT a FROM t0")]);
    }

    #[test]
    fn union_commutes() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let e = low("SELECT a FROM t0 UNION SELECT a FROM t1");
        let out = apply_rule(&rule("R4"), &e, &[], &env, &mut rng()).unwrap();
        assert_eq!(out, vec![low("SELECT a FROM t1 UNION SELECT a FROM t0")]);
        let mixed = low("SELECT a FROM t0 UNION SELECT a FROM t1 UNION ALL SELECT b FROM t1");
        assert!(applicable_rules(&mixed, &[rule("R4")], &env).is_empty());
    }

    #[test]
    fn wrong_site_is_rejected() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let e = low("SELECT a FROM t0");
        assert!(matches!(
            apply_rule(&rule("R2"), &e, &[], &env, &mut rng()),
            Err(RuleError::NotApplicable { .. })
        ));
    }

    #[test]
    fn dedup_insertion_pairs_distinct_with_group_by() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: Some(&db),
        };
        let q = parse("SELECT a FROM t0 WHERE a > 0").unwrap();
        let pair = transform_query(&q, &env, &[rule("R5")], &mut rng()).unwrap();
        assert_eq!(pair.left.to_string(), "SELECT DISTINCT a FROM t0 WHERE a > 0");
        assert_eq!(pair.right.to_string(), "SELECT a FROM t0 WHERE a > 0 GROUP BY a");
    }

    #[test]
    fn grouped_filter_insertion_pairs_where_with_having() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: Some(&db),
        };
        let q = parse("SELECT SUM(b) FROM t0 GROUP BY a").unwrap();
        let pair = transform_query(&q, &env, &[rule("R6")], &mut rng()).unwrap();
        let (l, r) = (pair.left, pair.right);
        assert!(l.where_pred.is_some() && l.having.is_none(), "{l}");
        assert!(r.having.is_some() && r.where_pred.is_none(), "{r}");
        assert_eq!(l.where_pred, r.having);
        assert_eq!(l.where_pred.unwrap().constants()[0], &crate::sql::Literal::Int(1));
    }

    #[test]
    fn filter_moves_across_dedup() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let q = parse("SELECT DISTINCT a FROM t0 WHERE a > 0").unwrap();
        let pair = transform_query(&q, &env, &[rule("R7")], &mut rng()).unwrap();
        assert_eq!(pair.right.to_string(), "SELECT a FROM t0 GROUP BY a HAVING a > 0");
        let back = parse("SELECT a FROM t0 GROUP BY a HAVING a > 0").unwrap();
        let pair = transform_query(&back, &env, &[rule("R7")], &mut rng()).unwrap();
        assert_eq!(pair.right.to_string(), "SELECT DISTINCT a FROM t0 WHERE a > 0");
    }

    #[test]
    fn qualification_toggle() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let q = parse("SELECT a FROM t0 WHERE a > 0").unwrap();
        let pair = transform_query(&q, &env, &[rule("R1")], &mut rng()).unwrap();
        assert_eq!(pair.right.to_string(), "SELECT t0.a FROM t0 WHERE t0.a > 0");
    }

    #[test]
    fn no_rule_for_bare_projection() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: None,
        };
        let q = parse("SELECT a FROM t0").unwrap();
        let catalog = select_rules(&["R1", "R2", "R3", "R4"]).unwrap();
        assert_eq!(
            transform_query(&q, &env, &catalog, &mut rng()),
            Err(TransformError::NoRuleApplies)
        );
    }

    #[test]
    fn enumeration_is_bounded_and_distinct() {
        let db = db();
        let schema = db.schema();
        let env = RuleEnv {
            schema: &schema,
            db: Some(&db),
        };
        let e = low("SELECT DISTINCT a FROM t0 WHERE a > 0 AND a < 5");
        let all = enumerate_mutants(&e, &default_catalog(), &env, 10, &mut rng());
        assert!(all.len() >= 3);
        for (i, m) in all.iter().enumerate() {
            assert!(typecheck(m).is_ok());
            assert!(!all[..i].contains(m));
        }
        assert!(enumerate_mutants(&e, &default_catalog(), &env, 0, &mut rng()).is_empty());
    }
}
