//! Transport seam shared by the deterministic in-process network and TCP.
//!
//! Clients are written sans-io as [`Party`] state machines; servers
//! implement [`Endpoint`]. A transport moves encoded frames between them.

use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codec::{self, check_dim};
use super::framing::{read_frame, write_frame};
use super::message::{ErrorCode, Message};
use super::ProtocolError;

pub type ConnId = u64;

/// Server side of a request/response protocol.
pub trait Endpoint {
    /// Negotiated model dimension, once known.
    fn dim(&self) -> Option<usize>;
    fn handle(&mut self, conn: ConnId, msg: Message, now_ms: u64) -> Message;
}

/// Decodes a request frame, dispatches it and encodes the reply. Decode
/// failures become `error` replies rather than dropping the connection.
pub fn handle_frame<E: Endpoint + ?Sized>(endpoint: &mut E, conn: ConnId, payload: &[u8], now_ms: u64) -> Vec<u8> {
    let reply = match codec::decode(payload, None) {
        Ok(msg) => match endpoint.dim().map_or(Ok(()), |d| check_dim(&msg, d)) {
            Ok(()) => endpoint.handle(conn, msg, now_ms),
            Err(e) => Message::error(ErrorCode::SchemaMismatch, e.to_string()),
        },
        Err(e) => Message::error(ErrorCode::Malformed, e.to_string()),
    };
    codec::encode(&reply)
}

/// What a party wants to do next.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Send a request. `work` counts proof-of-work hash attempts spent
    /// producing it, which the simulator converts to virtual time.
    Send { msg: Message, work: u64 },
    /// Wait one backoff interval, then call [`Party::on_wake`].
    Backoff,
    Done,
}

impl Action {
    pub fn send(msg: Message) -> Self {
        Self::Send { msg, work: 0 }
    }
}

pub trait Party {
    fn start(&mut self) -> Action;
    fn on_reply(&mut self, reply: Message) -> Action;
    fn on_wake(&mut self) -> Action;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TransportConfig {
    #[serde(default)]
    pub kind: TransportKind,
    /// Upper bound of the uniform broker response delay, in milliseconds.
    #[serde(default)]
    pub latency_ms_max: u64,
    #[serde(default)]
    pub seed: u64,
}

/// Uniform response delay on `[0, latency_ms_max]`; zero disables.
pub fn inject_latency<R: Rng + ?Sized>(rng: &mut R, cfg: &TransportConfig) -> u64 {
    if cfg.latency_ms_max == 0 {
        0
    } else {
        rng.random_range(0..=cfg.latency_ms_max)
    }
}

/// Serves an endpoint over TCP, one thread per connection. All requests are
/// serialized through the endpoint's mutex.
pub struct TcpServer<E> {
    listener: TcpListener,
    endpoint: Arc<Mutex<E>>,
    transport: TransportConfig,
    stop: Arc<AtomicBool>,
}

impl<E: Endpoint + Send + 'static> TcpServer<E> {
    pub fn bind(addr: impl ToSocketAddrs, endpoint: Arc<Mutex<E>>, transport: TransportConfig) -> Result<Self, ProtocolError> {
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            endpoint,
            transport,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ProtocolError> {
        Ok(self.listener.local_addr()?)
    }

    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    /// Accepts connections until the stop flag is raised.
    pub fn serve(self) -> Result<(), ProtocolError> {
        let started = Instant::now();
        self.listener.set_nonblocking(true)?;
        let mut next_conn: ConnId = 0;
        while !self.stop.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    let conn = next_conn;
                    next_conn += 1;
                    let endpoint = Arc::clone(&self.endpoint);
                    let cfg = self.transport.clone();
                    // connection threads are detached; they end when their client hangs up
                    thread::spawn(move || {
                        let _ = serve_connection(stream, conn, endpoint, cfg, started);
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}

fn serve_connection<E: Endpoint>(
    stream: TcpStream,
    conn: ConnId,
    endpoint: Arc<Mutex<E>>,
    cfg: TransportConfig,
    started: Instant,
) -> Result<(), ProtocolError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ conn.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    loop {
        let payload = match read_frame(&mut reader) {
            Ok(Some(p)) => p,
            Ok(None) => return Ok(()),
            Err(e) => return Err(e),
        };
        let now = started.elapsed().as_millis() as u64;
        let reply = {
            let mut ep = endpoint.lock().expect("endpoint mutex poisoned");
            handle_frame(&mut *ep, conn, &payload, now)
        };
        let delay = inject_latency(&mut rng, &cfg);
        if delay > 0 {
            thread::sleep(Duration::from_millis(delay));
        }
        write_frame(&mut writer, &reply)?;
    }
}

/// Blocking request/response connection used by TCP clients.
pub struct TcpConnection {
    addr: SocketAddr,
    stream: Option<(TcpStream, BufReader<TcpStream>)>,
    retries: u32,
    backoff: Duration,
}

impl TcpConnection {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            stream: None,
            retries: 20,
            backoff: Duration::from_millis(100),
        }
    }

    pub fn with_retry(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    fn connect(&mut self) -> Result<(), ProtocolError> {
        let stream = TcpStream::connect(self.addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        self.stream = Some((stream, reader));
        Ok(())
    }

    fn try_request(&mut self, payload: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        if self.stream.is_none() {
            self.connect()?;
        }
        let (writer, reader) = self.stream.as_mut().expect("connected above");
        write_frame(writer, payload)?;
        read_frame(reader)?.ok_or(ProtocolError::Truncated)
    }

    /// Sends one request and waits for the reply, reconnecting with backoff
    /// on connection loss.
    pub fn request(&mut self, msg: &Message) -> Result<Message, ProtocolError> {
        let payload = codec::encode(msg);
        let mut attempt = 0;
        loop {
            match self.try_request(&payload) {
                Ok(reply) => return codec::decode(&reply, None),
                Err(e @ (ProtocolError::Io(_) | ProtocolError::Truncated)) => {
                    self.stream = None;
                    attempt += 1;
                    if attempt > self.retries {
                        return Err(e);
                    }
                    thread::sleep(self.backoff);
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn backoff(&self) -> Duration {
        self.backoff
    }
}

/// Drives a party to completion over a blocking connection.
pub fn run_party<P: Party + ?Sized>(party: &mut P, conn: &mut TcpConnection) -> Result<(), ProtocolError> {
    let mut action = party.start();
    loop {
        action = match action {
            Action::Send { msg, .. } => {
                let reply = conn.request(&msg)?;
                party.on_reply(reply)
            }
            Action::Backoff => {
                thread::sleep(conn.backoff());
                party.on_wake()
            }
            Action::Done => return Ok(()),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_latency_bound_is_always_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = TransportConfig::default();
        assert!((0..1000).all(|_| inject_latency(&mut rng, &cfg) == 0));
    }

    #[test]
    fn seeded_latency_is_reproducible() {
        let cfg = TransportConfig {
            latency_ms_max: 50,
            ..Default::default()
        };
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            (0..100).map(|_| inject_latency(&mut rng, &cfg)).collect::<Vec<_>>()
        };
        let a = draw();
        assert_eq!(a, draw());
        assert!(a.iter().all(|d| *d <= 50));
    }
}
