use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::{CloudService, SESSION_PATH};
use crate::codec::{Codec, LatentSample};
use crate::control::{Decision, EdgeSession, Round, TerminateReason, Transcript, CHUNK_PATH, CLOUD_HOST};
use crate::transport::http::{read_message, write_message};
use crate::transport::{
    frame_http_post, from_json, link_delay, parse_http_response, to_json, CloudReply, ErrorReply, LinkModel,
    ReplyStatus, SessionInfo, SessionRequest,
};
use crate::{Error, Result};

/// Carries one HTTP request to the cloud and returns the raw response.
pub trait Exchange: Send + Sync {
    fn exchange(&self, request: &[u8]) -> Result<Vec<u8>>;
}

/// Calls a [`CloudService`] in the same process.
pub struct LoopbackTransport {
    service: Arc<CloudService>,
}

impl LoopbackTransport {
    pub fn new(service: Arc<CloudService>) -> Self {
        LoopbackTransport { service }
    }
}

impl Exchange for LoopbackTransport {
    fn exchange(&self, request: &[u8]) -> Result<Vec<u8>> {
        Ok(self.service.handle(request))
    }
}

/// One TCP connection per request, with connect retries.
pub struct TcpTransport {
    addr: SocketAddr,
    attempts: u32,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(addr: SocketAddr) -> Self {
        TcpTransport {
            addr,
            attempts: 3,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_retries(mut self, attempts: u32, timeout: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.timeout = timeout;
        self
    }

    fn once(&self, request: &[u8]) -> Result<Vec<u8>> {
        let mut stream = TcpStream::connect_timeout(&self.addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        write_message(&mut stream, request)?;
        read_message(&mut stream)
    }
}

impl Exchange for TcpTransport {
    fn exchange(&self, request: &[u8]) -> Result<Vec<u8>> {
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.once(request) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    log::warn!("request to {} failed (attempt {attempt}): {e}", self.addr);
                    last = e.to_string();
                    thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
                }
            }
        }
        Err(Error::Transport {
            attempts: self.attempts,
            message: last,
        })
    }
}

/// Edge side of the loop: opens sessions, encodes once, streams chunks.
pub struct EdgeAgent {
    codec: Arc<dyn Codec>,
    checksum: String,
    link: LinkModel,
    realtime: bool,
    transport: Box<dyn Exchange>,
}

fn body_of(response: &[u8]) -> Result<Vec<u8>> {
    let resp = parse_http_response(response)?;
    if resp.status != 200 {
        let msg = from_json::<ErrorReply>(&resp.body)
            .map(|e| e.error)
            .unwrap_or_else(|_| String::from_utf8_lossy(&resp.body).into_owned());
        return Err(Error::protocol(format!("cloud replied {}: {msg}", resp.status)));
    }
    Ok(resp.body)
}

impl EdgeAgent {
    pub fn new(codec: Arc<dyn Codec>, link: LinkModel, transport: Box<dyn Exchange>) -> Self {
        let checksum = codec.checksum();
        EdgeAgent {
            codec,
            checksum,
            link,
            realtime: false,
            transport,
        }
    }

    /// Sleep the modeled link delay before each request.
    pub fn realtime(mut self, on: bool) -> Self {
        self.realtime = on;
        self
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    fn send(&self, frame: &[u8]) -> Result<(Vec<u8>, f64, f64)> {
        let delay = link_delay(frame.len(), &self.link);
        if self.realtime {
            thread::sleep(Duration::from_secs_f64(delay));
        }
        let start = Instant::now();
        let body = body_of(&self.transport.exchange(frame)?)?;
        Ok((body, delay, start.elapsed().as_secs_f64()))
    }

    /// Opens a session and returns the cloud's announced parameters.
    pub fn open(&self) -> Result<SessionInfo> {
        let frame = frame_http_post(
            SESSION_PATH,
            CLOUD_HOST,
            &to_json(&SessionRequest {
                checksum: self.checksum.clone(),
            }),
        );
        let (body, _, _) = self.send(&frame)?;
        let info: SessionInfo = from_json(&body)?;
        if info.boundaries != self.codec.boundaries() || info.repr_width != self.codec.repr_width() {
            return Err(Error::protocol("cloud announced shapes that differ from the local codec"));
        }
        Ok(info)
    }

    /// Runs one full session for `z`.
    pub fn run(&self, z: &LatentSample) -> Result<(Transcript, EdgeSession)> {
        let info = self.open()?;
        let mut session = EdgeSession::with_checksum(info.session_id.clone(), Arc::clone(&self.codec), self.checksum.clone());
        session.open(z)?;
        let mut rounds = Vec::new();
        let mut through = info.initial_level;
        let output = loop {
            let first_level = session.sent_level() + 1;
            let payload = session.payload_through(through)?;
            let body = payload.to_bytes();
            let frame = frame_http_post(CHUNK_PATH, CLOUD_HOST, &body);
            let (reply_body, delay, wall) = self.send(&frame)?;
            let reply: CloudReply = from_json(&reply_body)?;
            reply.validate()?;
            if reply.level != through {
                return Err(Error::protocol(format!(
                    "cloud reports level {} after receiving level {through}",
                    reply.level
                )));
            }
            let decision = match reply.status {
                ReplyStatus::NeedMore => Decision::Continue(reply.level + 1),
                ReplyStatus::Ok if reply.q >= info.epsilon => Decision::Terminate(TerminateReason::QualityMet),
                ReplyStatus::Ok => Decision::Terminate(TerminateReason::MaxLevel),
            };
            rounds.push(Round {
                first_level,
                last_level: reply.level,
                chunk_bytes: payload.raw_len(),
                payload_bytes: body.len(),
                frame_bytes: frame.len(),
                delay,
                wall_delay: Some(wall),
                q: reply.q,
                e_hat: -reply.q.ln(),
                decision,
            });
            match decision {
                Decision::Continue(next) => through = next,
                Decision::Terminate(_) => break reply.output,
            }
        };
        let transcript = Transcript {
            session_id: info.session_id,
            epsilon: info.epsilon,
            initial_level: info.initial_level,
            k_levels: info.k_levels,
            terminal_level: through,
            rounds,
            encode_calls: session.encode_calls(),
            output,
        };
        Ok((transcript, session))
    }
}
