//! Client side of the oracle wire protocol.
//!
//! Two transports carry the same JSON messages:
//!
//! * **stdio**: a child process started with `sh -c <command>`. The child
//!   writes the handshake line first, then answers one response line per
//!   request line (in any order).
//! * **HTTP**: `GET <url>` returns the handshake object; `POST <url>` with a
//!   JSON array of requests returns a JSON array of responses.
//!
//! Transient failures (dead child, connection errors, 5xx) are retried with
//! exponential backoff; protocol violations abort immediately.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::protocol::{self, Handshake};
use super::{NerOracle, NerRequest, NerResponse, OracleError, OraclePrediction, OracleRequest, RelationOracle};

/// Where a model process lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command speaking the protocol over its standard streams.
    Command(String),
    /// Base URL of an HTTP model server.
    Http(String),
}

impl Endpoint {
    /// `http(s)://...` is an HTTP endpoint, `cmd:<command>` or any other
    /// non-empty string is a command.
    pub fn parse(spec: &str) -> Result<Self, OracleError> {
        let spec = spec.trim();
        if spec.starts_with("http://") || spec.starts_with("https://") {
            Ok(Endpoint::Http(spec.to_string()))
        } else if let Some(cmd) = spec.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err(OracleError::Endpoint(spec.to_string()));
            }
            Ok(Endpoint::Command(cmd.trim().to_string()))
        } else if spec.is_empty() {
            Err(OracleError::Endpoint(spec.to_string()))
        } else {
            Ok(Endpoint::Command(spec.to_string()))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Endpoint::Command(c) => format!("cmd:{c}"),
            Endpoint::Http(u) => u.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, initial_backoff: Duration::from_millis(50) }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// Moves JSON values to and from a model process.
pub trait Transport: Send {
    fn handshake(&mut self) -> Result<Vec<String>, OracleError>;

    /// Sends one batch; returns the raw responses (any order).
    fn exchange(&mut self, requests: &[Value]) -> Result<Vec<Value>, OracleError>;

    /// Drops connection state after a transient failure.
    fn reset(&mut self) {}
}

fn transient(message: impl Into<String>) -> OracleError {
    OracleError::Transport { message: message.into(), transient: true }
}

fn parse_line(line: &str) -> Result<Value, OracleError> {
    serde_json::from_str(line)
        .map_err(|e| OracleError::Protocol { message: format!("unparseable line: {e}"), payload: line.to_string() })
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for ChildIo {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Child process speaking line-delimited JSON.
pub struct StdioTransport {
    command: String,
    io: Option<ChildIo>,
    labels: Option<Vec<String>>,
}

impl StdioTransport {
    pub fn new(command: impl Into<String>) -> Self {
        StdioTransport { command: command.into(), io: None, labels: None }
    }

    fn spawn(&mut self) -> Result<&mut ChildIo, OracleError> {
        if self.io.is_none() {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(&self.command)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| transient(format!("cannot start {:?}: {e}", self.command)))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
            let mut first = String::new();
            let n = stdout.read_line(&mut first).map_err(|e| transient(e.to_string()))?;
            if n == 0 {
                return Err(transient(format!("{:?} exited before the handshake", self.command)));
            }
            let handshake: Handshake = serde_json::from_str(first.trim())
                .map_err(|e| OracleError::Handshake(format!("{e}: {}", first.trim())))?;
            match &self.labels {
                Some(known) if *known != handshake.labels => {
                    return Err(OracleError::Handshake("label set changed after restart".into()));
                }
                _ => self.labels = Some(handshake.labels),
            }
            self.io = Some(ChildIo { child, stdin, stdout });
        }
        Ok(self.io.as_mut().expect("just spawned"))
    }
}

impl Transport for StdioTransport {
    fn handshake(&mut self) -> Result<Vec<String>, OracleError> {
        self.spawn()?;
        Ok(self.labels.clone().unwrap_or_default())
    }

    fn exchange(&mut self, requests: &[Value]) -> Result<Vec<Value>, OracleError> {
        let io = self.spawn()?;
        let ChildIo { child, stdin, stdout } = io;
        let result = std::thread::scope(|scope| {
            let writer = scope.spawn(move || -> std::io::Result<()> {
                for req in requests {
                    serde_json::to_writer(&mut *stdin, req)?;
                    stdin.write_all(b"\n")?;
                }
                stdin.flush()
            });
            let read = (|| {
                let mut out = Vec::with_capacity(requests.len());
                let mut line = String::new();
                while out.len() < requests.len() {
                    line.clear();
                    match stdout.read_line(&mut line) {
                        Ok(0) => return Err(transient("model process closed its output")),
                        Ok(_) if line.trim().is_empty() => continue,
                        Ok(_) => out.push(parse_line(line.trim())?),
                        Err(e) => return Err(transient(e.to_string())),
                    }
                }
                Ok(out)
            })();
            if read.is_err() {
                // unblock a writer stuck on a full pipe
                let _ = child.kill();
            }
            let written = writer.join().expect("writer thread panicked");
            let out = read?;
            written.map_err(|e| transient(format!("writing requests: {e}")))?;
            Ok(out)
        });
        if result.is_err() {
            self.io = None;
        }
        result
    }

    fn reset(&mut self) {
        self.io = None;
    }
}

/// HTTP model server.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { url: url.into(), agent }
    }

    fn read_body<T: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T, OracleError> {
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| transient(e.to_string()))?;
        if status.is_server_error() {
            return Err(transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(OracleError::Protocol { message: format!("HTTP {status}"), payload: text });
        }
        serde_json::from_str(&text)
            .map_err(|e| OracleError::Protocol { message: format!("unparseable body: {e}"), payload: text })
    }
}

impl Transport for HttpTransport {
    fn handshake(&mut self) -> Result<Vec<String>, OracleError> {
        let resp = self.agent.get(&self.url).call().map_err(|e| transient(e.to_string()))?;
        let hs: Handshake = Self::read_body(resp).map_err(|e| match e {
            OracleError::Protocol { message, payload } => OracleError::Handshake(format!("{message}: {payload}")),
            other => other,
        })?;
        Ok(hs.labels)
    }

    fn exchange(&mut self, requests: &[Value]) -> Result<Vec<Value>, OracleError> {
        let resp = self.agent.post(&self.url).send_json(requests).map_err(|e| transient(e.to_string()))?;
        Self::read_body(resp)
    }
}

/// Protocol client over a pool of transports.
pub struct OracleClient {
    transports: Vec<Mutex<Box<dyn Transport>>>,
    labels: Vec<String>,
    retry: RetryPolicy,
    identity: String,
    cursor: AtomicUsize,
}

impl OracleClient {
    /// Connects `pool` transports to `endpoint` and performs the handshake on
    /// each. All of them must announce the same label set.
    pub fn connect(endpoint: &Endpoint, pool: usize, retry: RetryPolicy) -> Result<Self, OracleError> {
        let transports = (0..pool.max(1))
            .map(|_| -> Box<dyn Transport> {
                match endpoint {
                    Endpoint::Command(c) => Box::new(StdioTransport::new(c.clone())),
                    Endpoint::Http(u) => Box::new(HttpTransport::new(u.clone(), Duration::from_secs(120))),
                }
            })
            .collect();
        Self::from_transports(transports, endpoint.describe(), retry)
    }

    pub fn from_transports(
        transports: Vec<Box<dyn Transport>>,
        identity: String,
        retry: RetryPolicy,
    ) -> Result<Self, OracleError> {
        let mut client = OracleClient {
            transports: Vec::with_capacity(transports.len()),
            labels: Vec::new(),
            retry,
            identity,
            cursor: AtomicUsize::new(0),
        };
        for (i, mut t) in transports.into_iter().enumerate() {
            let labels = client.with_retries(&mut *t, |t| t.handshake())?;
            if i == 0 {
                client.labels = labels;
            } else if labels != client.labels {
                return Err(OracleError::Handshake("transports disagree on the label set".into()));
            }
            client.transports.push(Mutex::new(t));
        }
        if client.transports.is_empty() {
            return Err(OracleError::Endpoint("empty transport pool".into()));
        }
        Ok(client)
    }

    fn with_retries<T>(
        &self,
        transport: &mut dyn Transport,
        mut op: impl FnMut(&mut dyn Transport) -> Result<T, OracleError>,
    ) -> Result<T, OracleError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op(transport) {
                Err(e) if e.is_transient() => {
                    transport.reset();
                    if attempt >= self.retry.max_attempts {
                        return Err(OracleError::RetriesExhausted { attempts: attempt, last: Box::new(e) });
                    }
                    let wait = self.retry.backoff(attempt);
                    log::warn!("oracle {}: {e}; retrying in {wait:?}", self.identity);
                    std::thread::sleep(wait);
                }
                other => return other,
            }
        }
    }

    fn call(&self, requests: &[Value]) -> Result<Vec<Value>, OracleError> {
        // prefer an idle transport, otherwise queue on one round-robin
        let mut guard = self
            .transports
            .iter()
            .find_map(|t| t.try_lock().ok())
            .unwrap_or_else(|| {
                let i = self.cursor.fetch_add(1, Ordering::Relaxed) % self.transports.len();
                self.transports[i].lock().unwrap_or_else(|p| p.into_inner())
            });
        self.with_retries(&mut **guard, |t| t.exchange(requests))
    }

    fn roundtrip<Q: Serialize, P: DeserializeOwned>(&self, batch: &[Q]) -> Result<Vec<P>, OracleError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let values: Vec<Value> = batch.iter().map(|q| serde_json::to_value(q).expect("request serializes")).collect();
        let raw = self.call(&values)?;
        if raw.len() != batch.len() {
            return Err(OracleError::Protocol {
                message: format!("expected {} responses, got {}", batch.len(), raw.len()),
                payload: Value::Array(raw).to_string(),
            });
        }
        raw.into_iter()
            .map(|v| {
                if let Some(err) = v.get("error") {
                    return Err(OracleError::Protocol { message: format!("server reported {err}"), payload: v.to_string() });
                }
                serde_json::from_value(v.clone())
                    .map_err(|e| OracleError::Protocol { message: e.to_string(), payload: v.to_string() })
            })
            .collect()
    }
}

impl RelationOracle for OracleClient {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn predict_batch(&self, batch: &[OracleRequest]) -> Result<Vec<OraclePrediction>, OracleError> {
        let raw = self.roundtrip(batch)?;
        protocol::match_predictions(batch, raw, &self.labels)
    }
}

impl NerOracle for OracleClient {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn tag_batch(&self, batch: &[NerRequest]) -> Result<Vec<NerResponse>, OracleError> {
        let raw = self.roundtrip(batch)?;
        protocol::match_ner(batch, raw)
    }
}
