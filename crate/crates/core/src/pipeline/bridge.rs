//! Line-delimited JSON bridge to an external generator process.
//!
//! The parent writes one [`BackendRequest`] per line to the child's stdin
//! and reads exactly one [`BackendResponse`] line back, in order. One
//! request is in flight at a time.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};

use super::backend::{Backend, BackendRequest, BackendResponse};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub struct BridgeBackend {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl BridgeBackend {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command);
        Self::spawn_command(cmd, timeout)
    }

    pub fn spawn_command(mut command: Command, timeout: Duration) -> Result<Self> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend {
                request_id: 0,
                message: format!("failed to start bridge process: {e}"),
            })?;
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
        Ok(BridgeBackend {
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }
}

impl Backend for BridgeBackend {
    fn generate(&mut self, request: &BackendRequest) -> Result<BackendResponse> {
        let id = request.id;
        let protocol = |message: String| Error::Backend {
            request_id: id,
            message,
        };
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| protocol("bridge stdin closed".into()))?;
        let line = serde_json::to_string(request).expect("request serializes");
        writeln!(stdin, "{line}")
            .and_then(|_| stdin.flush())
            .map_err(|e| protocol(format!("write failed: {e}")))?;

        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(protocol(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::BackendTimeout {
                    request_id: id,
                    seconds: self.timeout.as_secs(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(protocol("bridge process closed its output".into()))
            }
        };
        let response: BackendResponse = serde_json::from_str(&reply)
            .map_err(|e| protocol(format!("invalid response {reply:?}: {e}")))?;
        if response.id != id {
            return Err(protocol(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        Ok(response)
    }
}

impl Drop for BridgeBackend {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved child exit on EOF.
        drop(self.stdin.take());
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serves `backend` over a line protocol until `input` reaches EOF.
/// Returns the number of requests answered.
pub fn serve<B, R, W>(backend: &mut B, input: R, mut output: W) -> Result<usize>
where
    B: Backend + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut served = 0;
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let request: BackendRequest = serde_json::from_str(&line).map_err(|e| Error::Backend {
            request_id: 0,
            message: format!("invalid request line {line:?}: {e}"),
        })?;
        let response = backend.generate(&request)?;
        let text = serde_json::to_string(&response).expect("response serializes");
        writeln!(output, "{text}")
            .and_then(|_| output.flush())
            .map_err(|e| Error::io("<stdout>", e))?;
        served += 1;
    }
    Ok(served)
}
