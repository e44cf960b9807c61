//! Client side of the classifier bridge: newline-delimited JSON over TCP or
//! a child process's stdio, one request in flight per connection.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::garment::{Estimate, EstimateRequest, GarmentCategory, MockEstimator, StateEstimator};

/// Replaces the configured estimator endpoint when set.
pub const ENDPOINT_ENV: &str = "PREDRESS_BRIDGE";
/// Command launched for `bridge:stdio`.
pub const STDIO_COMMAND_ENV: &str = "PREDRESS_BRIDGE_CMD";
pub const DEFAULT_STDIO_COMMAND: &str = "predress-bridge --transport stdio";

const IO_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstimatorSpec {
    Mock,
    Tcp(String),
    Stdio(String),
}

impl EstimatorSpec {
    /// Parses `mock`, `bridge:<host:port>` or `bridge:stdio`. The stdio
    /// command comes from [`STDIO_COMMAND_ENV`] when set.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "mock" {
            return Ok(EstimatorSpec::Mock);
        }
        match s.strip_prefix("bridge:") {
            Some("stdio") => Ok(EstimatorSpec::Stdio(
                std::env::var(STDIO_COMMAND_ENV).unwrap_or_else(|_| DEFAULT_STDIO_COMMAND.to_string()),
            )),
            Some(addr) if addr.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) => {
                Ok(EstimatorSpec::Tcp(addr.to_string()))
            }
            _ => Err(Error::invalid(format!(
                "estimator {s:?} is not one of mock, bridge:<host:port>, bridge:stdio"
            ))),
        }
    }

    /// Applies the [`ENDPOINT_ENV`] override.
    pub fn resolve(configured: &str) -> Result<Self> {
        match std::env::var(ENDPOINT_ENV) {
            Ok(v) if !v.trim().is_empty() => Self::parse(&v),
            _ => Self::parse(configured),
        }
    }

    pub fn connect(&self) -> Result<Box<dyn StateEstimator + Send>> {
        Ok(match self {
            EstimatorSpec::Mock => Box::new(MockEstimator),
            EstimatorSpec::Tcp(addr) => Box::new(BridgeEstimator::connect_tcp(addr)?),
            EstimatorSpec::Stdio(cmd) => Box::new(BridgeEstimator::spawn(cmd)?),
        })
    }
}

pub struct BridgeEstimator {
    reader: Box<dyn BufRead + Send>,
    writer: Option<Box<dyn Write + Send>>,
    child: Option<Child>,
    next_id: u64,
    line: String,
}

#[derive(Deserialize)]
struct Reply {
    id: Option<u64>,
    category: Option<String>,
    confidence: Option<f64>,
    error: Option<String>,
}

impl BridgeEstimator {
    pub fn from_streams(reader: impl BufRead + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        BridgeEstimator { reader: Box::new(reader), writer: Some(Box::new(writer)), child: None, next_id: 1, line: String::new() }
    }

    pub fn connect_tcp(addr: &str) -> Result<Self> {
        let bridge_err = |e: std::io::Error| Error::Estimator(format!("bridge {addr}: {e}"));
        let stream = TcpStream::connect(addr).map_err(bridge_err)?;
        stream.set_nodelay(true).map_err(bridge_err)?;
        stream.set_read_timeout(Some(IO_TIMEOUT)).map_err(bridge_err)?;
        let reader = BufReader::new(stream.try_clone().map_err(bridge_err)?);
        Ok(Self::from_streams(reader, stream))
    }

    /// Runs `command` through `sh -c` and talks to it over its stdin/stdout.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Estimator(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut me = Self::from_streams(BufReader::new(stdout), stdin);
        me.child = Some(child);
        Ok(me)
    }

    fn exchange(&mut self, request: &serde_json::Value) -> Result<String> {
        let writer = self.writer.as_mut().expect("writer present until drop");
        let mut text = request.to_string();
        text.push('\n');
        writer
            .write_all(text.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| Error::Estimator(format!("send failed: {e}")))?;
        self.line.clear();
        let n = self
            .reader
            .read_line(&mut self.line)
            .map_err(|e| Error::Estimator(format!("receive failed: {e}")))?;
        if n == 0 {
            return Err(Error::Estimator("bridge closed the connection".into()));
        }
        Ok(self.line.trim_end().to_string())
    }
}

/// Validates one reply line against the request id.
pub fn parse_reply(line: &str, expected_id: u64) -> Result<Estimate> {
    let reply: Reply =
        serde_json::from_str(line).map_err(|e| Error::Estimator(format!("malformed reply {line:?}: {e}")))?;
    if reply.id != Some(expected_id) {
        return Err(Error::Estimator(format!("reply id {:?} does not match request {expected_id}", reply.id)));
    }
    if let Some(msg) = reply.error {
        return Err(Error::Estimator(format!("bridge error for request {expected_id}: {msg}")));
    }
    let category: GarmentCategory = reply
        .category
        .ok_or_else(|| Error::Estimator("reply has no category".into()))?
        .parse()
        .map_err(|e: Error| Error::Estimator(e.to_string()))?;
    let confidence = reply.confidence.ok_or_else(|| Error::Estimator("reply has no confidence".into()))?;
    Estimate::new(category, confidence)
}

impl StateEstimator for BridgeEstimator {
    fn estimate(&mut self, request: &EstimateRequest<'_>) -> Result<Estimate> {
        let id = self.next_id;
        self.next_id += 1;
        let body = json!({
            "id": id,
            "features": {
                "truth": request.truth.wire_name(),
                "condition": request.condition.name(),
                "plan": request.plan,
                "iteration": request.iteration,
            }
        });
        let line = self.exchange(&body)?;
        parse_reply(&line, id)
    }
}

impl Drop for BridgeEstimator {
    fn drop(&mut self) {
        // closing stdin lets a stdio bridge exit on its own
        self.writer.take();
        if let Some(mut child) = self.child.take() {
            if !matches!(child.try_wait(), Ok(Some(_))) {
                let _ = child.kill();
            }
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_contract() {
        let e = parse_reply(r#"{"id":3,"category":"partly_opened","confidence":0.92}"#, 3).unwrap();
        assert_eq!(e, Estimate { category: GarmentCategory::PartlyOpened, confidence: 0.92 });
        assert!(parse_reply(r#"{"id":3,"category":"opened","confidence":1.3}"#, 3).is_err());
        assert!(parse_reply(r#"{"id":4,"category":"opened","confidence":1.0}"#, 3).is_err());
        assert!(parse_reply(r#"{"id":3,"category":"inside_out","confidence":1.0}"#, 3).is_err());
        assert!(parse_reply(r#"{"id":3,"error":"bad image"}"#, 3).is_err());
        assert!(parse_reply("not json", 3).is_err());
    }

    #[test]
    fn spec_strings() {
        assert_eq!(EstimatorSpec::parse("mock").unwrap(), EstimatorSpec::Mock);
        assert_eq!(EstimatorSpec::parse("bridge:127.0.0.1:7070").unwrap(), EstimatorSpec::Tcp("127.0.0.1:7070".into()));
        assert!(matches!(EstimatorSpec::parse("bridge:stdio").unwrap(), EstimatorSpec::Stdio(_)));
        assert!(EstimatorSpec::parse("bridge:").is_err());
        assert!(EstimatorSpec::parse("bridge:host:notaport").is_err());
        assert!(EstimatorSpec::parse("yolo").is_err());
    }
}
