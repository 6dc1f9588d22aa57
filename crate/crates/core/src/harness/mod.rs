//! Seed generation, the test loop, result comparison and bug reports.

mod compare;
mod generate;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use compare::{
    canonical_value, compare_results, text_multiset, ArityMismatch, CompareMode, Comparison, Mismatch, TextTuple,
    TupleDiff,
};
pub use generate::{
    generate_database, generate_seed, parse_grammar_weights, value_pool, ConfigError, GeneratorConfig, SeedGenerator,
    PRODUCTIONS,
};

use crate::adapter::{EngineError, Executor, ExecutorEndpoint};
use crate::equiv::{check_bounded, EquivBudget, Verdict};
use crate::refdb::{codes, Database, RenderedRows};
use crate::sql::{parse, SqlQuery};
use crate::transform::{default_catalog, enumerate_pairs, transform_query, Eqp, RewriteRule, RuleEnv};

/// Error codes whose queries are dropped without a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorFilterList {
    pub codes: BTreeSet<String>,
}

impl Default for ErrorFilterList {
    /// Parse and name-resolution failures of the generated query itself.
    fn default() -> Self {
        ErrorFilterList::from_codes([
            codes::SYNTAX_ERROR,
            codes::UNKNOWN_TABLE,
            codes::UNKNOWN_COLUMN,
            codes::AMBIGUOUS_COLUMN,
            codes::NON_GROUPED_COLUMN,
            codes::TYPE_MISMATCH,
            codes::ARITY_MISMATCH,
            codes::UNSUPPORTED,
        ])
    }
}

impl ErrorFilterList {
    pub fn empty() -> Self {
        ErrorFilterList { codes: BTreeSet::new() }
    }

    pub fn from_codes<S: Into<String>>(codes: impl IntoIterator<Item = S>) -> Self {
        ErrorFilterList {
            codes: codes.into_iter().map(Into::into).collect(),
        }
    }

    /// One code per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        ErrorFilterList::from_codes(
            text.lines()
                .map(|l| l.split('#').next().unwrap().trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(ErrorFilterList::parse(&fs::read_to_string(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterDecision {
    Discard,
    KeepForTriage,
}

pub fn filter_error(code: &str, list: &ErrorFilterList) -> FilterDecision {
    if list.codes.contains(code) {
        FilterDecision::Discard
    } else {
        FilterDecision::KeepForTriage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BugKind {
    /// Both queries ran and returned different results.
    Value,
    /// Exactly one query failed, or both failed differently.
    Error,
}

/// Everything needed to reproduce one disagreement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BugReport {
    pub id: String,
    pub kind: BugKind,
    pub schema_ddl: String,
    pub inserts: Vec<String>,
    pub seed_sql: String,
    pub left_sql: String,
    pub right_sql: String,
    pub left_result: Vec<(TextTuple, u64)>,
    pub right_result: Vec<(TextTuple, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_error: Option<String>,
    /// Comparison that failed (`canonical` or `raw-text`); absent for error bugs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_mode: Option<CompareMode>,
    pub rule_name: String,
    pub rng_seed: u64,
    pub filter_budget_used: usize,
    pub target_id: String,
    pub timestamp: u64,
}

impl BugReport {
    pub fn script(&self) -> String {
        let mut s = self.schema_ddl.clone();
        for i in &self.inserts {
            s.push_str(i);
            s.push('\n');
        }
        s
    }

    /// Stand-alone SQL reproducer.
    pub fn reproducer(&self) -> String {
        format!(
            "-- {} ({}) on {}\n{}-- seed: {}\n-- left\n{};\n-- right\n{};\n",
            self.id,
            self.rule_name,
            self.target_id,
            self.script(),
            self.seed_sql,
            self.left_sql,
            self.right_sql
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Counters for one iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationStats {
    pub iteration: usize,
    pub generated: usize,
    pub parsed_ok: usize,
    pub valid_after_execution: usize,
    pub pairs_emitted: usize,
    pub pairs_filtered: usize,
    pub pairs_executed: usize,
    pub mismatches: usize,
    pub kept_for_triage: usize,
    pub elapsed_ms: u64,
}

impl IterationStats {
    pub fn validity_rate(&self) -> f64 {
        if self.generated == 0 {
            0.0
        } else {
            self.valid_after_execution as f64 / self.generated as f64
        }
    }

    /// Sum of counters; `iteration` is left at zero.
    pub fn total<'a>(all: impl IntoIterator<Item = &'a IterationStats>) -> IterationStats {
        all.into_iter().fold(IterationStats::default(), |mut acc, s| {
            acc.generated += s.generated;
            acc.parsed_ok += s.parsed_ok;
            acc.valid_after_execution += s.valid_after_execution;
            acc.pairs_emitted += s.pairs_emitted;
            acc.pairs_filtered += s.pairs_filtered;
            acc.pairs_executed += s.pairs_executed;
            acc.mismatches += s.mismatches;
            acc.kept_for_triage += s.kept_for_triage;
            acc.elapsed_ms += s.elapsed_ms;
            acc
        })
    }
}

/// A seed whose error is not on the filter list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TriageEntry {
    pub iteration: usize,
    pub sql: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStrategy {
    /// One pair per seed from the first rule that applies.
    FirstMatch,
    /// Every (rule, site) pair per seed.
    Exhaustive,
}

/// Settings for a whole campaign.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub iterations: usize,
    pub target: ExecutorEndpoint,
    /// Rule ids or names; empty means the full catalog.
    pub rules: Vec<String>,
    pub filter_budget: EquivBudget,
    pub compare: CompareMode,
    pub error_list: ErrorFilterList,
    pub strategy: PairStrategy,
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: GeneratorConfig::default(),
            iterations: 1,
            target: ExecutorEndpoint::clean(),
            rules: Vec::new(),
            filter_budget: EquivBudget::default(),
            compare: CompareMode::Both,
            error_list: ErrorFilterList::default(),
            strategy: PairStrategy::FirstMatch,
            workers: 1,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn catalog(&self) -> Result<Vec<RewriteRule>, crate::transform::UnknownRule> {
        if self.rules.is_empty() {
            return Ok(default_catalog());
        }
        let names: Vec<&str> = self.rules.iter().map(String::as_str).collect();
        crate::transform::select_rules(&names)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("target unavailable: {0}")]
    Target(EngineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rule(#[from] crate::transform::UnknownRule),
    #[error("io error on {path}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad report {path}: {message}")]
    BadReport { path: PathBuf, message: String },
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Per-iteration stream seed; iterations are independent of each other.
pub fn iteration_seed(rng_seed: u64, iteration: usize) -> u64 {
    rng_seed ^ (iteration as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Everything the loop needs about the current database.
pub struct TestContext<'a> {
    pub db: &'a Database,
    pub script: &'a str,
    pub catalog: &'a [RewriteRule],
    pub config: &'a RunConfig,
    pub iteration: usize,
}

/// Result of running seeds against a target.
#[derive(Debug, Clone, Default)]
pub struct TestOutcome {
    pub reports: Vec<BugReport>,
    pub triage: Vec<TriageEntry>,
    pub stats: IterationStats,
    /// Set when the target failed and the iteration stopped early.
    pub aborted: Option<String>,
}

fn rendered_error(e: &EngineError) -> String {
    format!("{}: {}", e.code(), e)
}

/// The main loop over a list of seeds: rewrite, filter, execute both
/// sides, compare, report.
pub fn test_db(seeds: &[SqlQuery], target: &mut dyn Executor, ctx: &TestContext, rng: &mut dyn RngCore) -> TestOutcome {
    let started = Instant::now();
    let cfg = ctx.config;
    let schema = ctx.db.schema();
    let env = RuleEnv {
        schema: &schema,
        db: Some(ctx.db),
    };
    let mut out = TestOutcome::default();
    out.stats.iteration = ctx.iteration;
    let ddl = ctx.db.ddl();
    let inserts = ctx.db.inserts();

    'seeds: for (qi, seed) in seeds.iter().enumerate() {
        out.stats.generated += 1;
        let text = seed.to_string();
        let Ok(seed) = parse(&text) else { continue };
        out.stats.parsed_ok += 1;
        match target.exec(&text) {
            Ok(_) => out.stats.valid_after_execution += 1,
            Err(e) if e.is_transport() => {
                out.aborted = Some(e.to_string());
                break;
            }
            Err(e) => {
                if filter_error(e.code(), &cfg.error_list) == FilterDecision::KeepForTriage {
                    out.stats.kept_for_triage += 1;
                    out.triage.push(TriageEntry {
                        iteration: ctx.iteration,
                        sql: text,
                        code: e.code().to_string(),
                        message: e.to_string(),
                    });
                }
                continue;
            }
        }
        let pairs: Vec<Eqp> = match cfg.strategy {
            PairStrategy::FirstMatch => transform_query(&seed, &env, ctx.catalog, rng).into_iter().collect(),
            PairStrategy::Exhaustive => enumerate_pairs(&seed, &env, ctx.catalog, rng),
        };
        for (pi, pair) in pairs.into_iter().enumerate() {
            out.stats.pairs_emitted += 1;
            let budget = EquivBudget {
                seed: iteration_seed(cfg.generator.rng_seed, ctx.iteration) ^ ((qi as u64) << 8) ^ (pi as u64),
                ..cfg.filter_budget.clone()
            };
            let verdict = check_bounded(&pair.left, &pair.right, &schema, &budget);
            if let Verdict::NotEquivalent { .. } = verdict {
                out.stats.pairs_filtered += 1;
                continue;
            }
            let (ls, rs) = (pair.left.to_string(), pair.right.to_string());
            let left = target.exec(&ls);
            let right = target.exec(&rs);
            for r in [&left, &right] {
                if let Err(e) = r {
                    if e.is_transport() {
                        out.aborted = Some(e.to_string());
                        break 'seeds;
                    }
                }
            }
            out.stats.pairs_executed += 1;
            let id = match cfg.strategy {
                PairStrategy::FirstMatch => format!("it{}-q{}", ctx.iteration, qi),
                PairStrategy::Exhaustive => format!("it{}-q{}-p{}", ctx.iteration, qi, pi),
            };
            let mut report = BugReport {
                id,
                kind: BugKind::Value,
                schema_ddl: ddl.clone(),
                inserts: inserts.clone(),
                seed_sql: pair.seed_text.clone(),
                left_sql: ls,
                right_sql: rs,
                left_result: Vec::new(),
                right_result: Vec::new(),
                left_error: None,
                right_error: None,
                compare_mode: None,
                rule_name: pair.rule_name.clone(),
                rng_seed: cfg.generator.rng_seed,
                filter_budget_used: verdict.budget_used(),
                target_id: cfg.target.id(),
                timestamp: now(),
            };
            match (&left, &right) {
                (Ok(l), Ok(r)) => match compare_results(l, r, cfg.compare) {
                    Ok(Comparison::Match) => continue,
                    Ok(Comparison::Mismatch(m)) => {
                        report.compare_mode = Some(m.mode);
                    }
                    Err(e) => {
                        report.kind = BugKind::Error;
                        report.left_error = Some(e.to_string());
                    }
                },
                (Err(a), Err(b)) if a.code() == b.code() => continue,
                _ => report.kind = BugKind::Error,
            }
            if let Ok(l) = &left {
                report.left_result = text_multiset(l);
            }
            if let Ok(r) = &right {
                report.right_result = text_multiset(r);
            }
            report.left_error = report.left_error.or(left.as_ref().err().map(rendered_error));
            report.right_error = right.as_ref().err().map(rendered_error);
            out.stats.mismatches += 1;
            out.reports.push(report);
        }
    }
    out.stats.elapsed_ms = started.elapsed().as_millis() as u64;
    out
}

/// One iteration: fresh database, reset target, generate seeds, test.
pub fn run_iteration(
    config: &RunConfig,
    iteration: usize,
    target: &mut dyn Executor,
) -> Result<TestOutcome, HarnessError> {
    config.generator.validate()?;
    let catalog = config.catalog()?;
    let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(config.generator.rng_seed, iteration));
    let (db, script) = generate_database(&config.generator, &mut rng);
    target.reset(&script).map_err(HarnessError::Target)?;
    let schema = db.schema();
    let gen = SeedGenerator::new(&config.generator, &schema);
    let seeds: Vec<SqlQuery> = (0..config.generator.queries_per_iteration)
        .map(|_| gen.generate(&mut rng))
        .collect();
    let ctx = TestContext {
        db: &db,
        script: &script,
        catalog: &catalog,
        config,
        iteration,
    };
    Ok(test_db(&seeds, target, &ctx, &mut rng))
}

#[derive(Debug, Clone, Default)]
pub struct CampaignOutcome {
    pub reports: Vec<BugReport>,
    pub triage: Vec<TriageEntry>,
    pub stats: Vec<IterationStats>,
    pub aborted: Option<String>,
}

/// Runs every iteration, spread over `workers` threads each with its own
/// endpoint, and persists results when an output directory is set.
/// Results are ordered by iteration whatever the worker count.
pub fn run_campaign(config: &RunConfig) -> Result<CampaignOutcome, HarnessError> {
    config.generator.validate()?;
    config.catalog()?;
    let workers = config.workers.clamp(1, config.iterations.max(1));
    let results: Vec<Result<Vec<(usize, TestOutcome)>, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || -> Result<Vec<(usize, TestOutcome)>, HarnessError> {
                    let mut target = config.target.start().map_err(HarnessError::Target)?;
                    let mut done = Vec::new();
                    for it in (w..config.iterations).step_by(workers) {
                        let outcome = run_iteration(config, it, target.as_mut())?;
                        let stop = outcome.aborted.is_some();
                        done.push((it, outcome));
                        if stop {
                            break;
                        }
                    }
                    target.stop();
                    Ok(done)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut all: Vec<(usize, TestOutcome)> = Vec::new();
    for r in results {
        all.extend(r?);
    }
    all.sort_by_key(|(it, _)| *it);
    let mut outcome = CampaignOutcome::default();
    for (_, o) in all {
        outcome.reports.extend(o.reports);
        outcome.triage.extend(o.triage);
        outcome.stats.push(o.stats);
        if outcome.aborted.is_none() {
            outcome.aborted = o.aborted;
        }
    }
    if let Some(dir) = &config.out_dir {
        persist(dir, &outcome)?;
    }
    Ok(outcome)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `reports/<id>.json`, `reports/<id>.sql`, `stats.jsonl` and
/// `triage.jsonl` under `dir`.
pub fn persist(dir: &Path, outcome: &CampaignOutcome) -> Result<(), HarnessError> {
    let reports = dir.join("reports");
    fs::create_dir_all(&reports).map_err(io_err(&reports))?;
    for r in &outcome.reports {
        let json = reports.join(format!("{}.json", r.id));
        fs::write(&json, r.to_json() + "\n").map_err(io_err(&json))?;
        let sql = reports.join(format!("{}.sql", r.id));
        fs::write(&sql, r.reproducer()).map_err(io_err(&sql))?;
    }
    let stats = dir.join("stats.jsonl");
    let lines: String = outcome
        .stats
        .iter()
        .map(|s| serde_json::to_string(s).expect("stats serialize") + "\n")
        .collect();
    fs::write(&stats, lines).map_err(io_err(&stats))?;
    let triage = dir.join("triage.jsonl");
    let lines: String = outcome
        .triage
        .iter()
        .map(|t| serde_json::to_string(t).expect("triage serializes") + "\n")
        .collect();
    fs::write(&triage, lines).map_err(io_err(&triage))?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<BugReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    BugReport::from_json(&text).map_err(|e| HarnessError::BadReport {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayOutcome {
    Reproduced,
    NotReproduced,
}

/// Re-runs a report's script and both queries on `target`.
pub fn replay(report: &BugReport, target: &mut dyn Executor, mode: CompareMode) -> Result<ReplayOutcome, HarnessError> {
    target.reset(&report.script()).map_err(HarnessError::Target)?;
    let left = target.exec(&report.left_sql);
    let right = target.exec(&report.right_sql);
    for r in [&left, &right] {
        if let Err(e) = r {
            if e.is_transport() {
                return Err(HarnessError::Target(e.clone()));
            }
        }
    }
    let differs = match (&left, &right) {
        (Ok(l), Ok(r)) => !matches!(compare_results(l, r, mode), Ok(Comparison::Match)),
        (Err(a), Err(b)) => a.code() != b.code(),
        _ => true,
    };
    Ok(if differs {
        ReplayOutcome::Reproduced
    } else {
        ReplayOutcome::NotReproduced
    })
}

/// Convenience for callers holding rendered rows from elsewhere.
pub fn rows_differ(left: &RenderedRows, right: &RenderedRows, mode: CompareMode) -> bool {
    !matches!(compare_results(left, right, mode), Ok(Comparison::Match))
}
