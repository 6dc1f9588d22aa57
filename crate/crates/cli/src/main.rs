use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eqmorph::adapter::{serve, BuiltinExecutor, ExecutorEndpoint};
use eqmorph::equiv::EquivBudget;
use eqmorph::harness::{
    generate_database, iteration_seed, load_report, parse_grammar_weights, replay, run_campaign, CompareMode,
    ErrorFilterList, GeneratorConfig, IterationStats, PairStrategy, ReplayOutcome, RunConfig, SeedGenerator,
};

const EXIT_BUGS: u8 = 10;

#[derive(Parser)]
#[command(
    name = "eqmorph",
    version,
    about = "Metamorphic testing of SQL engines with equivalent query pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a testing campaign. Exit 0: no bugs, 10: bugs found, 1: error.
    Run(RunArgs),
    /// Re-execute a saved bug report. Exit 10: reproduced, 0: not, 1: error.
    Replay(ReplayArgs),
    /// Print a generated database script and seed queries without executing them.
    Gen(GenArgs),
    /// Answer the line protocol on stdin/stdout with the built-in engine.
    Serve(ServeArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Flat key=value file; keys are flag names without the dashes.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Production weights, e.g. "prod4=1,others=0".
    #[arg(long = "grammar-weights")]
    grammar_weights: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// builtin, builtin:<fault> or extern:"<command>".
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Seed queries per iteration.
    #[arg(long)]
    queries: Option<usize>,
    /// Comma-separated rule ids or names (default: all).
    #[arg(long)]
    rules: Option<String>,
    /// Databases the equivalence filter may try per pair.
    #[arg(long = "filter-budget")]
    filter_budget: Option<usize>,
    /// canonical, raw-text or both.
    #[arg(long)]
    compare: Option<CompareMode>,
    /// Output directory for reports and stats.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of error codes to discard, one per line.
    #[arg(long = "error-list")]
    error_list: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Try every applicable rule and site per seed instead of the first.
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Report JSON file.
    report: PathBuf,
    /// Target to replay on (default: the one recorded in the report).
    #[arg(long)]
    target: Option<String>,
    /// canonical, raw-text or both (default: both).
    #[arg(long)]
    compare: Option<CompareMode>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of seed queries.
    #[arg(long)]
    count: Option<usize>,
    /// Write schema.sql and seeds.sql here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// builtin or builtin:<fault>.
    #[arg(long, default_value = "builtin")]
    target: String,
}

const CONFIG_KEYS: [&str; 13] = [
    "target",
    "iterations",
    "queries",
    "seed",
    "rules",
    "filter-budget",
    "compare",
    "out",
    "error-list",
    "workers",
    "grammar-weights",
    "count",
    "exhaustive",
];

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), n + 1))?;
        let k = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&k.as_str()) {
            bail!("{}:{}: unknown key {k:?}", path.display(), n + 1);
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

/// Flag value if given, else the config file's, else nothing.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        Ok(Settings {
            file: match path {
                Some(p) => read_config(p)?,
                None => BTreeMap::new(),
            },
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| anyhow!("config key {key}: {e}")),
        }
    }
}

fn generator_config(common: &CommonArgs, settings: &Settings) -> Result<GeneratorConfig> {
    let mut g = GeneratorConfig::default();
    if let Some(seed) = settings.get("seed", common.seed)? {
        g.rng_seed = seed;
    }
    if let Some(w) = settings.get("grammar-weights", common.grammar_weights.clone())? {
        g.grammar_weights = parse_grammar_weights(&w, g.grammar_weights)?;
    }
    Ok(g)
}

fn filter_budget(total: usize) -> EquivBudget {
    let d = EquivBudget::default();
    EquivBudget {
        tiny: total.min(d.tiny),
        random: total.saturating_sub(d.tiny),
        ..d
    }
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let mut generator = generator_config(&args.common, &settings)?;
    if let Some(q) = settings.get("queries", args.queries)? {
        generator.queries_per_iteration = q;
    }
    let target: String = settings.get("target", args.target)?.unwrap_or_else(|| "builtin".into());
    let mut config = RunConfig {
        generator,
        target: target.parse()?,
        out_dir: Some(
            settings
                .get("out", args.out)?
                .unwrap_or_else(|| PathBuf::from("eqmorph-out")),
        ),
        ..RunConfig::default()
    };
    if let Some(n) = settings.get("iterations", args.iterations)? {
        config.iterations = n;
    }
    if let Some(r) = settings.get::<String>("rules", args.rules)? {
        config.rules = r
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    if let Some(b) = settings.get("filter-budget", args.filter_budget)? {
        config.filter_budget = filter_budget(b);
    }
    if let Some(c) = settings.get("compare", args.compare)? {
        config.compare = c;
    }
    if let Some(p) = settings.get::<PathBuf>("error-list", args.error_list)? {
        config.error_list = ErrorFilterList::load(&p).with_context(|| format!("reading {}", p.display()))?;
    }
    if let Some(w) = settings.get("workers", args.workers)? {
        config.workers = w;
    }
    let exhaustive = args.exhaustive || settings.get::<bool>("exhaustive", None)?.unwrap_or(false);
    if exhaustive {
        config.strategy = PairStrategy::Exhaustive;
    }

    let outcome = run_campaign(&config)?;
    let total = IterationStats::total(&outcome.stats);
    println!(
        "{} iterations, {} seeds ({:.1}% valid), {} pairs, {} filtered, {} executed, {} mismatches",
        outcome.stats.len(),
        total.generated,
        100.0 * total.validity_rate(),
        total.pairs_emitted,
        total.pairs_filtered,
        total.pairs_executed,
        total.mismatches
    );
    if let Some(dir) = &config.out_dir {
        println!("results in {}", dir.display());
    }
    if let Some(why) = outcome.aborted {
        eprintln!("campaign aborted: {why}");
        return Ok(1);
    }
    Ok(if outcome.reports.is_empty() { 0 } else { EXIT_BUGS })
}

fn cmd_replay(args: ReplayArgs) -> Result<u8> {
    let report = load_report(&args.report)?;
    let target: ExecutorEndpoint = args.target.as_deref().unwrap_or(&report.target_id).parse()?;
    let mode = args.compare.unwrap_or(CompareMode::Both);
    let mut exec = target.start()?;
    let outcome = replay(&report, exec.as_mut(), mode)?;
    exec.stop();
    match outcome {
        ReplayOutcome::Reproduced => {
            println!("{}: reproduced on {}", report.id, target.id());
            Ok(EXIT_BUGS)
        }
        ReplayOutcome::NotReproduced => {
            println!("{}: not reproduced on {}", report.id, target.id());
            Ok(0)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<u8> {
    let settings = Settings::load(args.common.config.as_deref())?;
    let generator = generator_config(&args.common, &settings)?;
    generator.validate()?;
    let count = settings.get("count", args.count)?.unwrap_or(10);
    let out = settings.get("out", args.out)?;
    if count == 0 {
        return Ok(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(generator.rng_seed, 0));
    let (db, script) = generate_database(&generator, &mut rng);
    let schema = db.schema();
    let gen = SeedGenerator::new(&generator, &schema);
    let seeds: String = (0..count).map(|_| format!("{};\n", gen.generate(&mut rng))).collect();
    match out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("schema.sql"), &script)?;
            fs::write(dir.join("seeds.sql"), &seeds)?;
            println!("wrote {count} seeds to {}", dir.display());
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(script.as_bytes())?;
            stdout.write_all(seeds.as_bytes())?;
        }
    }
    Ok(0)
}

fn cmd_serve(args: ServeArgs) -> Result<u8> {
    let fault = match args.target.parse::<ExecutorEndpoint>()? {
        ExecutorEndpoint::Builtin { fault } => fault,
        ExecutorEndpoint::External { .. } => bail!("serve only wraps the built-in engine"),
    };
    let mut exec = BuiltinExecutor::new(fault.as_deref())?;
    serve(&mut exec, io::stdin().lock(), io::stdout().lock())?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
