//! Executor endpoints: the built-in engine, optionally faulted, and external
//! engines reached through a child process speaking newline-delimited JSON.
//!
//! Request: `{"id": n, "op": "exec" | "reset", "sql": "..."}`.
//! Response: `{"id": n, "ok": true, "rows": [["v", null, ...], ...], "types": [["int", null, ...], ...]}`
//! or `{"id": n, "ok": false, "code": "...", "message": "..."}`. The
//! `types` member is optional.

use std::fs::OpenOptions;
use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::refdb::{Cell, Database, Engine, RenderedRows, SqlType, UnknownFault};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    /// The statement failed inside the engine.
    #[error("{code}: {message}")]
    Statement { code: String, message: String },
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("could not start executor: {0}")]
    Startup(String),
    #[error("executor unavailable: {0}")]
    Unavailable(String),
}

impl EngineError {
    /// Error code used for filtering; transport failures get fixed codes.
    pub fn code(&self) -> &str {
        match self {
            EngineError::Statement { code, .. } => code,
            EngineError::Timeout(_) => "TIMEOUT",
            EngineError::Protocol(_) => "PROTOCOL_ERROR",
            EngineError::Startup(_) => "STARTUP_ERROR",
            EngineError::Unavailable(_) => "UNAVAILABLE",
        }
    }

    /// True for failures of the endpoint itself rather than of a statement.
    pub fn is_transport(&self) -> bool {
        !matches!(self, EngineError::Statement { .. })
    }
}

/// Where statements are executed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutorEndpoint {
    Builtin {
        fault: Option<String>,
    },
    External {
        command: String,
        startup_timeout: Duration,
        query_timeout: Duration,
    },
}

impl ExecutorEndpoint {
    pub fn clean() -> Self {
        ExecutorEndpoint::Builtin { fault: None }
    }

    /// Stable identifier recorded in reports; parses back with `from_str`.
    pub fn id(&self) -> String {
        match self {
            ExecutorEndpoint::Builtin { fault: None } => "builtin".into(),
            ExecutorEndpoint::Builtin { fault: Some(f) } => format!("builtin:{f}"),
            ExecutorEndpoint::External { command, .. } => format!("extern:{command}"),
        }
    }

    pub fn start(&self) -> Result<Box<dyn Executor>, EngineError> {
        match self {
            ExecutorEndpoint::Builtin { fault } => Ok(Box::new(BuiltinExecutor::new(fault.as_deref())?)),
            ExecutorEndpoint::External {
                command,
                startup_timeout,
                query_timeout,
            } => Ok(Box::new(ExternalExecutor::spawn(
                command,
                *startup_timeout,
                *query_timeout,
            )?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TargetParseError {
    #[error("target must be builtin, builtin:<fault> or extern:<command>, got {0:?}")]
    Malformed(String),
    #[error(transparent)]
    UnknownFault(#[from] UnknownFaultError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct UnknownFaultError(String);

impl From<UnknownFault> for UnknownFaultError {
    fn from(e: UnknownFault) -> Self {
        UnknownFaultError(e.to_string())
    }
}

impl FromStr for ExecutorEndpoint {
    type Err = TargetParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "builtin" {
            return Ok(ExecutorEndpoint::clean());
        }
        if let Some(fault) = s.strip_prefix("builtin:") {
            Engine::with_fault(fault).map_err(UnknownFaultError::from)?;
            return Ok(ExecutorEndpoint::Builtin {
                fault: Some(fault.to_string()),
            });
        }
        if let Some(cmd) = s.strip_prefix("extern:") {
            let cmd = cmd.trim().trim_matches('"');
            if cmd.is_empty() {
                return Err(TargetParseError::Malformed(s.into()));
            }
            return Ok(ExecutorEndpoint::External {
                command: cmd.to_string(),
                startup_timeout: Duration::from_secs(10),
                query_timeout: Duration::from_secs(30),
            });
        }
        Err(TargetParseError::Malformed(s.into()))
    }
}

/// A started endpoint. One statement in flight at a time.
pub trait Executor: Send {
    /// Drops every table and loads `script` (CREATE TABLE / INSERT).
    fn reset(&mut self, script: &str) -> Result<(), EngineError>;
    fn exec(&mut self, sql: &str) -> Result<RenderedRows, EngineError>;
    /// Idempotent.
    fn stop(&mut self);
}

pub struct BuiltinExecutor {
    engine: Engine,
    db: Database,
}

impl BuiltinExecutor {
    pub fn new(fault: Option<&str>) -> Result<Self, EngineError> {
        let engine = match fault {
            None => Engine::clean(),
            Some(f) => Engine::with_fault(f).map_err(|e| EngineError::Startup(e.to_string()))?,
        };
        Ok(BuiltinExecutor {
            engine,
            db: Database::default(),
        })
    }
}

impl Executor for BuiltinExecutor {
    fn reset(&mut self, script: &str) -> Result<(), EngineError> {
        self.db = Database::from_script(script).map_err(|e| EngineError::Statement {
            code: "SCRIPT_ERROR".into(),
            message: e.to_string(),
        })?;
        Ok(())
    }

    fn exec(&mut self, sql: &str) -> Result<RenderedRows, EngineError> {
        self.engine
            .execute_sql(&self.db, sql)
            .map_err(|e| EngineError::Statement {
                code: e.code,
                message: e.message,
            })
    }

    fn stop(&mut self) {}
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: String,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<Option<String>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<Vec<Vec<Option<SqlType>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Response {
    pub fn from_result(id: u64, result: Result<RenderedRows, EngineError>) -> Self {
        match result {
            Ok(rows) => Response {
                id,
                ok: true,
                types: Some(rows.iter().map(|r| r.iter().map(|c| c.tag).collect()).collect()),
                rows: Some(
                    rows.into_iter()
                        .map(|r| r.into_iter().map(|c| c.text).collect())
                        .collect(),
                ),
                code: None,
                message: None,
            },
            Err(e) => Response {
                id,
                ok: false,
                rows: None,
                types: None,
                code: Some(e.code().to_string()),
                message: Some(e.to_string()),
            },
        }
    }

    pub fn into_result(self) -> Result<RenderedRows, EngineError> {
        if !self.ok {
            return Err(EngineError::Statement {
                code: self.code.unwrap_or_else(|| "UNKNOWN".into()),
                message: self.message.unwrap_or_default(),
            });
        }
        let rows = self.rows.unwrap_or_default();
        let types = self.types.unwrap_or_default();
        Ok(rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, text)| Cell {
                        tag: types.get(i).and_then(|t| t.get(j)).copied().flatten(),
                        text,
                    })
                    .collect()
            })
            .collect())
    }
}

/// Answers protocol requests from `input` with `exec` until end of input.
/// Backs the `serve` command; any engine can be bridged the same way.
pub fn serve(exec: &mut dyn Executor, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let result = match req.op.as_str() {
                    "reset" => exec.reset(&req.sql).map(|_| Vec::new()),
                    "exec" => exec.exec(&req.sql),
                    other => Err(EngineError::Statement {
                        code: "BAD_REQUEST".into(),
                        message: format!("unknown op {other}"),
                    }),
                };
                Response::from_result(req.id, result)
            }
            Err(e) => Response::from_result(
                0,
                Err(EngineError::Statement {
                    code: "BAD_REQUEST".into(),
                    message: e.to_string(),
                }),
            ),
        };
        writeln!(output, "{}", serde_json::to_string(&resp).expect("response serializes"))?;
        output.flush()?;
    }
    Ok(())
}

struct TrafficLog(Option<std::fs::File>);

impl TrafficLog {
    fn open() -> Self {
        if std::env::var("EQMORPH_SHIM_DEBUG").as_deref() != Ok("1") {
            return TrafficLog(None);
        }
        let path = std::env::var("EQMORPH_SHIM_LOG")
            .map(Into::into)
            .unwrap_or_else(|_| std::env::temp_dir().join("eqmorph-shim.log"));
        TrafficLog(OpenOptions::new().create(true).append(true).open(path).ok())
    }

    fn line(&mut self, dir: &str, text: &str) {
        if let Some(f) = &mut self.0 {
            let _ = writeln!(f, "{dir} {text}");
        }
    }
}

/// Child process bridged over stdin/stdout.
pub struct ExternalExecutor {
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
    query_timeout: Duration,
    log: TrafficLog,
}

impl ExternalExecutor {
    /// Runs `command` through the shell and waits for it to answer an
    /// empty reset within `startup_timeout`.
    pub fn spawn(command: &str, startup_timeout: Duration, query_timeout: Duration) -> Result<Self, EngineError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EngineError::Startup(format!("{command}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut ex = ExternalExecutor {
            child: Some(child),
            stdin,
            lines: rx,
            next_id: 1,
            query_timeout: startup_timeout,
            log: TrafficLog::open(),
        };
        // any well-formed answer, even an error, shows the child is alive
        match ex.request("reset", "") {
            Ok(_) | Err(EngineError::Statement { .. }) => {}
            Err(e) => {
                ex.stop();
                return Err(EngineError::Startup(format!("{command}: {e}")));
            }
        }
        ex.query_timeout = query_timeout;
        Ok(ex)
    }

    fn request(&mut self, op: &str, sql: &str) -> Result<RenderedRows, EngineError> {
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(EngineError::Unavailable("endpoint stopped".into()));
        };
        let id = self.next_id;
        self.next_id += 1;
        let req = serde_json::to_string(&Request {
            id,
            op: op.into(),
            sql: sql.into(),
        })
        .expect("request serializes");
        self.log.line(">", &req);
        if writeln!(stdin, "{req}").and_then(|_| stdin.flush()).is_err() {
            self.stop();
            return Err(EngineError::Unavailable("child closed its input".into()));
        }
        let line = match self.lines.recv_timeout(self.query_timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                self.stop();
                return Err(EngineError::Protocol(e.to_string()));
            }
            Err(RecvTimeoutError::Timeout) => {
                // the child may still answer later; its stream is no longer usable
                self.stop();
                return Err(EngineError::Timeout(self.query_timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.stop();
                return Err(EngineError::Unavailable("child exited".into()));
            }
        };
        self.log.line("<", &line);
        let resp: Response = serde_json::from_str(&line).map_err(|e| EngineError::Protocol(format!("{e}: {line}")))?;
        if resp.id != id {
            self.stop();
            return Err(EngineError::Protocol(format!(
                "expected response {id}, got {}",
                resp.id
            )));
        }
        resp.into_result()
    }
}

impl Executor for ExternalExecutor {
    fn reset(&mut self, script: &str) -> Result<(), EngineError> {
        self.request("reset", script).map(|_| ())
    }

    fn exec(&mut self, sql: &str) -> Result<RenderedRows, EngineError> {
        self.request("exec", sql)
    }

    fn stop(&mut self) {
        self.stdin = None;
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Drop for ExternalExecutor {
    fn drop(&mut self) {
        self.stop();
    }
}
