use std::io::Cursor;
use std::time::Duration;

use eqmorph::adapter::{serve, BuiltinExecutor, EngineError, Executor, ExternalExecutor, Request, Response};
use eqmorph::refdb::{FaultSpec, SqlType};

fn request(id: u64, op: &str, sql: &str) -> String {
    serde_json::to_string(&Request {
        id,
        op: op.into(),
        sql: sql.into(),
    })
    .unwrap()
}

fn run_serve(lines: &[String]) -> Vec<Response> {
    let mut exec = BuiltinExecutor::new(None).unwrap();
    let input = Cursor::new(lines.join("\n"));
    let mut out = Vec::new();
    serve(&mut exec, input, &mut out).unwrap();
    String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn serve_answers_each_request_in_order() {
    let resp = run_serve(&[
        request(1, "reset", FaultSpec::WITNESS_SCRIPT),
        request(2, "exec", "SELECT a, SUM(b) FROM t0 GROUP BY a"),
        request(3, "exec", "SELECT nope FROM t0"),
        "not json".into(),
    ]);
    assert_eq!(resp.iter().map(|r| r.id).collect::<Vec<_>>(), vec![1, 2, 3, 0]);
    assert!(resp[0].ok);
    let rows = resp[1].clone().into_result().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1].tag == Some(SqlType::Dec)));
    let err = resp[2].clone().into_result().unwrap_err();
    assert!(matches!(err, EngineError::Statement { .. }));
    assert_eq!(resp[3].code.as_deref(), Some("BAD_REQUEST"));
}

#[test]
fn result_survives_the_wire() {
    let mut exec = BuiltinExecutor::new(None).unwrap();
    exec.reset(FaultSpec::WITNESS_SCRIPT).unwrap();
    let direct = exec.exec("SELECT DISTINCT a, b FROM t0").unwrap();
    let wire = serde_json::to_string(&Response::from_result(9, Ok(direct.clone()))).unwrap();
    let back: Response = serde_json::from_str(&wire).unwrap();
    assert_eq!(back.into_result().unwrap(), direct);
}

#[test]
fn external_shim_without_types_is_read_untagged() {
    // answers every request with a single row, no type sidecar
    let shim = r#"while read -r line; do id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/'); printf '{"id":%s,"ok":true,"rows":[["1.50",null]]}\n' "$id"; done"#;
    let mut exec = ExternalExecutor::spawn(shim, Duration::from_secs(5), Duration::from_secs(5)).unwrap();
    exec.reset("CREATE TABLE t0 (a INT);").unwrap();
    let rows = exec.exec("SELECT a FROM t0").unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0].text.as_deref(), Some("1.50"));
    assert_eq!(rows[0][0].tag, None);
    assert_eq!(rows[0][1].text, None);
    exec.stop();
    exec.stop();
}

#[test]
fn reset_drops_previous_tables() {
    let mut exec = BuiltinExecutor::new(None).unwrap();
    exec.reset(FaultSpec::WITNESS_SCRIPT).unwrap();
    exec.reset("CREATE TABLE t9 (a INT);").unwrap();
    let err = exec.exec("SELECT a FROM t1").unwrap_err();
    assert_eq!(err.code(), "UNKNOWN_TABLE");
}

#[test]
fn awkward_strings_cross_the_wire_intact() {
    let script = "CREATE TABLE t0 (s VARCHAR(20));\nINSERT INTO t0 VALUES ('a,b'), ('x\"y'), ('line\nbreak'), ('it''s'), ('[\"]');";
    let resp = run_serve(&[request(1, "reset", script), request(2, "exec", "SELECT s FROM t0")]);
    assert!(resp[0].ok, "{:?}", resp[0]);
    let mut got: Vec<String> = resp[1]
        .clone()
        .into_result()
        .unwrap()
        .into_iter()
        .map(|r| r[0].text.clone().unwrap())
        .collect();
    got.sort();
    assert_eq!(got, vec!["[\"]", "a,b", "it's", "line\nbreak", "x\"y"]);
}

#[test]
fn builtin_through_the_adapter_matches_direct_execution() {
    let db = eqmorph::Database::from_script(FaultSpec::WITNESS_SCRIPT).unwrap();
    let sql = "SELECT a, b FROM t0 UNION ALL SELECT a, b FROM t1";
    let direct = eqmorph::refdb::Engine::clean().execute_sql(&db, sql).unwrap();
    let resp = run_serve(&[request(1, "reset", FaultSpec::WITNESS_SCRIPT), request(2, "exec", sql)]);
    let wire = resp[1].clone().into_result().unwrap();
    let mode = eqmorph::harness::CompareMode::Both;
    assert!(!eqmorph::harness::rows_differ(&direct, &wire, mode));
}
