//! Client side of the newline-delimited JSON sampler protocol.
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"name":"<impl>","d":<int>,"min_context":<int>}
//! -> {"op":"sample","history":[[...]],"m":<int>,"h":<int>,"seed":<int>}
//! <- {"samples":[[[...]]],"shape":[m,h,d]}   or   {"error":"<message>"}
//! ```
//!
//! One request, one response, strictly alternating.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{SamplerError, SamplerRequest, TrajectoryBatch, TrajectorySampler};
use crate::matrix::Matrix;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

/// Reply to the `hello` handshake.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub name: String,
    pub d: usize,
    pub min_context: usize,
}

#[derive(Serialize)]
struct SampleLine<'a> {
    op: &'static str,
    history: &'a Matrix,
    m: usize,
    h: usize,
    seed: u64,
}

struct Channel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    broken: bool,
}

impl Channel {
    fn roundtrip(&mut self, line: &str, timeout: Duration) -> Result<Value, SamplerError> {
        if self.broken {
            return Err(SamplerError::Protocol(
                "channel is out of sync after an earlier failure".into(),
            ));
        }
        let result = self.exchange(line, timeout);
        if matches!(result, Err(SamplerError::Timeout(_) | SamplerError::Io(_))) {
            self.broken = true;
        }
        result
    }

    fn exchange(&mut self, line: &str, timeout: Duration) -> Result<Value, SamplerError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(reply) => reply?,
            Err(RecvTimeoutError::Timeout) => return Err(SamplerError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(SamplerError::Protocol("remote closed the stream".into()))
            }
        };
        let value: Value = serde_json::from_str(reply.trim_end())
            .map_err(|e| SamplerError::Protocol(format!("response is not valid JSON: {e}")))?;
        if let Some(msg) = value.get("error") {
            let msg = msg.as_str().map_or_else(|| msg.to_string(), str::to_string);
            return Err(SamplerError::Remote(msg));
        }
        Ok(value)
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// A sampler served by an external process over the NDJSON protocol.
///
/// Requests on one channel are serialised behind a mutex; use one sampler per
/// worker for concurrent sampling.
pub struct ExternalSampler {
    channel: Mutex<Channel>,
    handshake: Handshake,
    timeout: Duration,
}

impl std::fmt::Debug for ExternalSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSampler")
            .field("handshake", &self.handshake)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalSampler {
    /// Opens a session over arbitrary byte streams and performs the handshake.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self, SamplerError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::open(Box::new(reader), Box::new(writer), None, timeout)
    }

    /// Spawns `program args...` and speaks the protocol over its stdio.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, SamplerError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::open(Box::new(stdout), Box::new(stdin), Some(child), timeout)
    }

    /// Connects to a sampler listening on TCP.
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, SamplerError> {
        let stream = TcpStream::connect(addr)?;
        let reader = stream.try_clone()?;
        Self::open(Box::new(reader), Box::new(stream), None, timeout)
    }

    fn open(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
        timeout: Duration,
    ) -> Result<Self, SamplerError> {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut channel = Channel {
            writer,
            lines: rx,
            child,
            broken: false,
        };
        let reply = channel.roundtrip(r#"{"op":"hello"}"#, timeout)?;
        let handshake: Handshake =
            serde_json::from_value(reply).map_err(|e| SamplerError::Protocol(format!("malformed handshake: {e}")))?;
        if handshake.d == 0 {
            return Err(SamplerError::Protocol("handshake reports dimension 0".into()));
        }
        Ok(Self {
            channel: Mutex::new(channel),
            handshake,
            timeout,
        })
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }
}

fn parse_batch(value: &Value, req: &SamplerRequest, d: usize) -> Result<TrajectoryBatch, SamplerError> {
    let shape: Vec<usize> = value
        .get("shape")
        .ok_or_else(|| SamplerError::Protocol("response has no shape field".into()))
        .and_then(|s| {
            serde_json::from_value(s.clone()).map_err(|e| SamplerError::Protocol(format!("malformed shape field: {e}")))
        })?;
    let samples: Vec<Vec<Vec<f64>>> = value
        .get("samples")
        .ok_or_else(|| SamplerError::Protocol("response has no samples field".into()))
        .and_then(|s| {
            serde_json::from_value(s.clone())
                .map_err(|e| SamplerError::Protocol(format!("malformed samples field: {e}")))
        })?;
    if shape.len() != 3 {
        return Err(SamplerError::Protocol(format!(
            "shape must have 3 entries, got {shape:?}"
        )));
    }
    let declared = (shape[0], shape[1], shape[2]);
    if samples.len() != declared.0 {
        return Err(SamplerError::Protocol(format!(
            "shape declares {} samples but {} are present",
            declared.0,
            samples.len()
        )));
    }
    let batch = TrajectoryBatch::from_nested(&samples)?;
    if declared.0 > 0 && batch.shape() != declared {
        return Err(SamplerError::Protocol(format!(
            "shape field {declared:?} disagrees with payload {:?}",
            batch.shape()
        )));
    }
    if declared != (req.m, req.h, d) {
        return Err(SamplerError::Protocol(format!(
            "expected shape {:?}, remote returned {declared:?}",
            (req.m, req.h, d)
        )));
    }
    if !batch.is_finite() {
        return Err(SamplerError::Protocol("samples contain non-finite values".into()));
    }
    Ok(batch)
}

/// Sends one sample request and validates the reply.
pub fn external_sample(req: &SamplerRequest, endpoint: &ExternalSampler) -> Result<TrajectoryBatch, SamplerError> {
    let d = endpoint.handshake.d;
    req.validate(d, endpoint.handshake.min_context)?;
    let line = serde_json::to_string(&SampleLine {
        op: "sample",
        history: &req.history,
        m: req.m,
        h: req.h,
        seed: req.seed,
    })
    .map_err(|e| SamplerError::InvalidInput(format!("cannot encode request: {e}")))?;
    let reply = {
        let mut channel = endpoint.channel.lock().unwrap_or_else(|p| p.into_inner());
        channel.roundtrip(&line, endpoint.timeout)?
    };
    parse_batch(&reply, req, d)
}

impl TrajectorySampler for ExternalSampler {
    fn name(&self) -> &str {
        &self.handshake.name
    }

    fn dim(&self) -> usize {
        self.handshake.d
    }

    fn min_context(&self) -> usize {
        self.handshake.min_context
    }

    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        external_sample(req, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn req() -> SamplerRequest {
        SamplerRequest::new(Matrix::column(&[1.0]), 2, 3, 0)
    }

    #[test]
    fn shape_payload_disagreement_is_protocol_error() {
        let five = vec![vec![vec![1.0]; 3]; 5];
        let v = json!({"samples": five, "shape": [2, 3, 1]});
        assert!(matches!(parse_batch(&v, &req(), 1), Err(SamplerError::Protocol(_))));
    }

    #[test]
    fn shape_request_disagreement_is_protocol_error() {
        let v = json!({"samples": vec![vec![vec![1.0]; 2]; 2], "shape": [2, 2, 1]});
        assert!(matches!(parse_batch(&v, &req(), 1), Err(SamplerError::Protocol(_))));
    }

    #[test]
    fn well_formed_batch_parses() {
        let v = json!({"samples": vec![vec![vec![5.0]; 3]; 2], "shape": [2, 3, 1]});
        let b = parse_batch(&v, &req(), 1).unwrap();
        assert_eq!(b.shape(), (2, 3, 1));
        assert!(b.as_slice().iter().all(|&x| x == 5.0));
    }
}
