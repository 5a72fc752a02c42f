use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{Frame, Hello, PredictRequest, ProtocolError, PROTOCOL_VERSION};
use crate::harness::{Sut, SutError};
use crate::types::{PredictionSet, TestCase};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// What the peer announced in its hello frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub protocol_version: u32,
    pub sut: String,
    pub deterministic_given_seed: bool,
}

/// One line-oriented connection to a predictor peer.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    timeout: Duration,
    child: Option<Child>,
    next_id: u64,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("timeout", &self.timeout)
            .field("child", &self.child.as_ref().map(Child::id))
            .finish_non_exhaustive()
    }
}

impl Connection {
    /// Wraps an arbitrary byte stream pair. Lines are read on a background
    /// thread so that receives can time out.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Duration,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                let msg = match reader.read_line(&mut line) {
                    Ok(0) => Err(io::Error::new(io::ErrorKind::UnexpectedEof, "peer closed the stream")),
                    Ok(_) => Ok(line),
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        Self { writer: Box::new(writer), lines: rx, timeout, child: None, next_id: 1 }
    }

    /// Starts `command` (whitespace-separated program and arguments) and talks
    /// to it over its standard input and output.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        let mut parts = command.split_whitespace();
        let program = parts.next().ok_or_else(|| ProtocolError::BadUri(command.to_string()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ProtocolError::Io(format!("cannot start '{program}': {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Self::from_streams(stdout, stdin, timeout);
        conn.child = Some(child);
        Ok(conn)
    }

    pub fn connect_tcp(addr: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(reader, stream, timeout))
    }

    /// `cmd:<command line>` or `tcp://host:port`.
    pub fn open(uri: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        if let Some(cmd) = uri.strip_prefix("cmd:") {
            Self::spawn(cmd, timeout)
        } else if let Some(addr) = uri.strip_prefix("tcp://") {
            Self::connect_tcp(addr, timeout)
        } else {
            Err(ProtocolError::BadUri(uri.to_string()))
        }
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    /// Writes one line verbatim (a trailing newline is appended).
    pub fn send_line(&mut self, line: &str) -> Result<(), ProtocolError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.send_line(&frame.to_line())
    }

    /// Next non-empty line, without its line terminator.
    pub fn recv_line(&mut self) -> Result<String, ProtocolError> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(remaining) {
                Ok(Ok(line)) => {
                    let trimmed = line.trim_end_matches(['\n', '\r']);
                    if !trimmed.trim().is_empty() {
                        return Ok(trimmed.to_string());
                    }
                }
                Ok(Err(e)) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(ProtocolError::Closed),
                Ok(Err(e)) => return Err(e.into()),
                Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
            }
        }
    }

    pub fn recv(&mut self) -> Result<Frame, ProtocolError> {
        Frame::from_line(&self.recv_line()?)
    }

    fn fresh_id(&mut self) -> String {
        let id = self.next_id.to_string();
        self.next_id += 1;
        id
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        // closing stdin asks a well-behaved child to exit
        self.writer = Box::new(io::sink());
        if let Some(child) = self.child.as_mut() {
            let deadline = Instant::now() + Duration::from_millis(500);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(5));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub fn handshake(conn: &mut Connection) -> Result<Capabilities, ProtocolError> {
    conn.send(&Frame::Hello(Hello {
        id: "0".into(),
        protocol_version: PROTOCOL_VERSION,
        sut: None,
        deterministic_given_seed: None,
    }))?;
    match conn.recv()? {
        Frame::Hello(h) if h.protocol_version == PROTOCOL_VERSION => Ok(Capabilities {
            protocol_version: h.protocol_version,
            sut: h.sut.unwrap_or_else(|| "remote".into()),
            deterministic_given_seed: h.deterministic_given_seed.unwrap_or(false),
        }),
        Frame::Hello(h) => Err(ProtocolError::VersionMismatch { got: h.protocol_version }),
        Frame::Error(e) => Err(ProtocolError::RemoteError(e.message)),
        other => Err(ProtocolError::MalformedResponse(format!("expected hello, got {other:?}"))),
    }
}

pub fn remote_predict(
    conn: &mut Connection,
    tc: &TestCase,
    k: usize,
    seed: u64,
) -> Result<PredictionSet, ProtocolError> {
    let id = conn.fresh_id();
    conn.send(&Frame::PredictRequest(PredictRequest::from_test_case(id.clone(), tc, k, seed)?))?;
    match conn.recv()? {
        Frame::PredictResponse(r) if r.id == id => r.to_set(k, tc.horizon(), tc.observed().frame_interval()),
        Frame::PredictResponse(r) => {
            Err(ProtocolError::MalformedResponse(format!("response id '{}' does not match request '{id}'", r.id)))
        }
        Frame::Error(e) => Err(ProtocolError::RemoteError(e.message)),
        other => Err(ProtocolError::MalformedResponse(format!("unexpected {} frame", frame_kind(&other)))),
    }
}

fn frame_kind(f: &Frame) -> &'static str {
    match f {
        Frame::Hello(_) => "hello",
        Frame::PredictRequest(_) => "predict_request",
        Frame::PredictResponse(_) => "predict_response",
        Frame::Error(_) => "error",
    }
}

/// An external predictor reached over the wire protocol.
#[derive(Debug)]
pub struct RemoteSut {
    name: String,
    deterministic: bool,
    conn: Mutex<Connection>,
}

impl RemoteSut {
    pub fn connect(uri: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        let mut conn = Connection::open(uri, timeout)?;
        let caps = handshake(&mut conn)?;
        Ok(Self { name: caps.sut, deterministic: caps.deterministic_given_seed, conn: Mutex::new(conn) })
    }
}

impl Sut for RemoteSut {
    fn name(&self) -> &str {
        &self.name
    }

    fn deterministic_given_seed(&self) -> bool {
        self.deterministic
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, SutError> {
        // the mutex keeps one request outstanding per connection
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        remote_predict(&mut conn, tc, k, seed).map_err(|e| SutError::Failed(e.to_string()))
    }
}
