//! Line-delimited JSON protocol with an evaluator child process. Each
//! request is one JSON object on the child's stdin, answered by one JSON
//! object on its stdout.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EvalRequest, HarnessError, Objectives, Problem};
use crate::configspace::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequestWire {
    pub id: String,
    pub config: BTreeMap<String, Value>,
    pub architecture: Option<String>,
    pub budget: u64,
    pub previous_budget: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponseWire {
    pub id: String,
    pub status: String,
    #[serde(default)]
    pub objectives: Option<Objectives>,
}

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Evaluates through external processes started from `command`. Idle
/// processes are kept in a pool, so concurrent callers each talk to their
/// own process.
pub struct ExternalProblem {
    command: Vec<String>,
    timeout: Duration,
    idle: Mutex<Vec<Connection>>,
}

impl std::fmt::Debug for ExternalProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalProblem")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalProblem {
    pub fn new(command: Vec<String>, timeout: Duration) -> Result<Self, HarnessError> {
        if command.is_empty() {
            return Err(HarnessError::Spawn {
                command: String::new(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
            });
        }
        Ok(Self { command, timeout, idle: Mutex::new(Vec::new()) })
    }

    fn spawn(&self) -> Result<Connection, HarnessError> {
        let spawn_err = |source| HarnessError::Spawn { command: self.command.join(" "), source };
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(spawn_err)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Connection { child, stdin, lines: rx })
    }

    fn exchange(&self, conn: &mut Connection, request: &EvalRequestWire) -> Result<Objectives, HarnessError> {
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        conn.stdin
            .write_all(line.as_bytes())
            .and_then(|_| conn.stdin.flush())
            .map_err(|e| HarnessError::ProtocolError(format!("write failed: {e}")))?;
        let reply = match conn.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => return Err(HarnessError::ProtocolError(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(HarnessError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(HarnessError::ProtocolError("evaluator closed its output".into()))
            }
        };
        let resp: EvalResponseWire = serde_json::from_str(&reply)
            .map_err(|e| HarnessError::ProtocolError(format!("bad response `{reply}`: {e}")))?;
        if resp.id != request.id {
            return Err(HarnessError::ProtocolError(format!(
                "response id `{}` does not match request `{}`",
                resp.id, request.id
            )));
        }
        match resp.status.as_str() {
            "ok" => {
                let o = resp
                    .objectives
                    .ok_or_else(|| HarnessError::ProtocolError("status ok without objectives".into()))?;
                if !o.primary.is_finite() || !o.runtime_hours.is_finite() {
                    return Err(HarnessError::ProtocolError("non-finite objectives".into()));
                }
                Ok(o)
            }
            "failed" => Err(HarnessError::EvaluatorReportedFailure(resp.id)),
            other => Err(HarnessError::ProtocolError(format!("unknown status `{other}`"))),
        }
    }
}

impl Problem for ExternalProblem {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<Objectives, HarnessError> {
        let wire = EvalRequestWire {
            id: format!("{}-{}", request.config_id, request.budget),
            config: request.config.values.clone(),
            architecture: request.config.architecture_string(),
            budget: request.budget,
            previous_budget: request.previous_budget,
            seed: request.seed,
        };
        let pooled = self.idle.lock().expect("pool lock").pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => self.spawn()?,
        };
        let result = self.exchange(&mut conn, &wire);
        // a connection that broke the protocol is dropped (and killed)
        if matches!(result, Ok(_) | Err(HarnessError::EvaluatorReportedFailure(_))) {
            self.idle.lock().expect("pool lock").push(conn);
        }
        result
    }
}
