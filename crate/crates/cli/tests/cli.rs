use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_eqmorph");

fn eqmorph(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn eqmorph")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn first_report(dir: &Path) -> std::path::PathBuf {
    let mut jsons: Vec<_> = fs::read_dir(dir.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    jsons.sort();
    jsons.into_iter().next().expect("at least one report")
}

#[test]
fn clean_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = eqmorph(&["run", "--iterations", "2", "--queries", "100", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("stats.jsonl").exists());
    let stats = fs::read_to_string(dir.path().join("stats.jsonl")).unwrap();
    assert_eq!(stats.lines().count(), 2);
}

#[test]
fn faulty_target_exits_ten_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = eqmorph(&[
        "run",
        "--iterations",
        "1",
        "--queries",
        "300",
        "--target",
        "builtin:drop-distinct",
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 10, "{}", String::from_utf8_lossy(&o.stderr));
    let report = first_report(dir.path());
    let sql = report.with_extension("sql");
    assert!(fs::read_to_string(sql).unwrap().contains("CREATE TABLE"));

    let r = report.to_str().unwrap();
    assert_eq!(code(&eqmorph(&["replay", r])), 10);
    assert_eq!(code(&eqmorph(&["replay", r, "--target", "builtin"])), 0);
}

#[test]
fn missing_report_is_an_error() {
    let o = eqmorph(&["replay", "/nonexistent/report.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("report.json"));
}

#[test]
fn gen_is_deterministic() {
    let a = eqmorph(&["gen", "--seed", "7", "--count", "20"]);
    let b = eqmorph(&["gen", "--seed", "7", "--count", "20"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = eqmorph(&["gen", "--seed", "8", "--count", "20"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn gen_zero_count_is_empty() {
    let o = eqmorph(&["gen", "--count", "0"]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
}

#[test]
fn grouped_weights_give_grouped_seeds() {
    let o = eqmorph(&[
        "gen",
        "--seed",
        "3",
        "--count",
        "30",
        "--grammar-weights",
        "prod4=1,others=0",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let seeds: Vec<_> = text.lines().filter(|l| l.starts_with("SELECT")).collect();
    assert_eq!(seeds.len(), 30);
    assert!(seeds.iter().all(|s| s.contains("GROUP BY")), "{seeds:?}");
}

#[test]
fn gen_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqmorph(&["gen", "--count", "5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(dir.path().join("schema.sql"))
        .unwrap()
        .contains("CREATE TABLE"));
    assert_eq!(
        fs::read_to_string(dir.path().join("seeds.sql"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# campaign\ncount = 4\nseed=11\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_file = eqmorph(&["gen", "--config", c]);
    let from_flags = eqmorph(&["gen", "--seed", "11", "--count", "4"]);
    assert_eq!(from_file.stdout, from_flags.stdout);
    let overridden = eqmorph(&["gen", "--config", c, "--count", "2"]);
    let text = String::from_utf8(overridden.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("SELECT")).count(), 2);

    fs::write(&cfg, "bogus = 1\n").unwrap();
    let bad = eqmorph(&["gen", "--config", c]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bogus"));
}

#[test]
fn unknown_flag_is_rejected() {
    let o = eqmorph(&["run", "--frobnicate"]);
    assert_ne!(code(&o), 0);
    assert_ne!(code(&o), 10);
}

#[test]
fn bad_grammar_weights_are_rejected() {
    let o = eqmorph(&["gen", "--grammar-weights", "prod9=1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_rule_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqmorph(&["run", "--rules", "R99", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn dead_external_target_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqmorph(&[
        "run",
        "--iterations",
        "1",
        "--queries",
        "5",
        "--target",
        "extern:\"false\"",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn external_target_through_serve() {
    let dir = tempfile::tempdir().unwrap();
    let target = format!("extern:\"{BIN} serve --target builtin:drop-distinct\"");
    let o = eqmorph(&[
        "run",
        "--iterations",
        "1",
        "--queries",
        "300",
        "--target",
        &target,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 10, "{}", String::from_utf8_lossy(&o.stderr));
}
